"""
Measuring the Raman coefficient
===============================

Step the clock launch power, count Raman photons in the quantum channel,
fit a line and invert the noise model for beta.  Here the counts are
simulated with Poisson noise and a 100 Hz dark floor.
"""
from __future__ import annotations

import numpy as np

from qcoexist import Power, RamanContext, catalog_fiber, raman_count_rate
from qcoexist.cli import fit_beta

rng = np.random.default_rng(3)
p0_mw = np.linspace(0.2, 2.0, 10)

for link in ("FNAL-DAB", "ANL"):
    fiber = catalog_fiber(link)
    for band in ("O", "L"):
        true = fiber.beta(band).beta
        rate = np.array([raman_count_rate(Power.from_mw(p), true, RamanContext.for_band(band), fiber.length_km,
                                          fiber.alpha("C"), fiber.alpha(band)) for p in p0_mw])
        counts = rng.poisson(rate + 100.0)
        beta, fit = fit_beta(p0_mw, counts, np.sqrt(counts), fiber, band, 0.03)
        print(f"{link:8s} {band}: true {true:.3e}, fitted {beta.beta:.3e} +/- {beta.uncertainty:.1e} "
              f"(r^2 {fit.r_squared:.4f})")
