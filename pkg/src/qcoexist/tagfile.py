"""QTT1 binary time-tag files.

Layout, little-endian throughout::

    header (16 bytes)
        0   4s   magic  b"QTT1"
        4   u16  version (1)
        6   u16  channel count
        8   u64  sample epoch (ns since the Unix epoch; 0 for simulated runs)
    records (16 bytes each)
        0   u16  channel
        2   u16  reserved, zero
        4   u32  flags, zero
        8   u64  timestamp, ps since run start

Records are sorted by timestamp within each channel.
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"QTT1"
VERSION = 1
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([("channel", "<u2"), ("reserved", "<u2"), ("flags", "<u4"), ("t", "<u8")])
assert HEADER.size == 16 and RECORD_DTYPE.itemsize == 16


class CodecError(ValueError):
    """Malformed tag file; `offset` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class TagFile:
    channel_count: int
    records: np.ndarray
    epoch: int = 0
    version: int = VERSION

    def channel(self, ch: int) -> np.ndarray:
        """Timestamps of one channel as a sorted int64 array."""
        return self.records["t"][self.records["channel"] == ch].astype(np.int64)


def make_records(streams: dict[int, np.ndarray]) -> np.ndarray:
    """Interleave per-channel sorted streams into one time-ordered record array."""
    parts = []
    for ch, t in sorted(streams.items()):
        t = np.asarray(t)
        if t.size and (t.min() < 0 or np.any(t[1:] < t[:-1])):
            raise ValueError(f"channel {ch} stream must be sorted and non-negative")
        rec = np.zeros(t.size, dtype=RECORD_DTYPE)
        rec["channel"] = ch
        rec["t"] = t
        parts.append(rec)
    rec = np.concatenate(parts) if parts else np.zeros(0, dtype=RECORD_DTYPE)
    return rec[np.argsort(rec["t"], kind="stable")]


def encode(tf: TagFile) -> bytes:
    rec = np.asarray(tf.records, dtype=RECORD_DTYPE)
    return HEADER.pack(MAGIC, tf.version, tf.channel_count, tf.epoch) + rec.tobytes()


def decode(data: bytes) -> TagFile:
    if len(data) < HEADER.size:
        raise CodecError("truncated header", len(data))
    magic, version, nch, epoch = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CodecError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise CodecError(f"unsupported version {version}", 4)
    body = len(data) - HEADER.size
    if body % RECORD_DTYPE.itemsize:
        raise CodecError("trailing partial record", HEADER.size + body - body % RECORD_DTYPE.itemsize)
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, offset=HEADER.size)

    def at(i):
        return HEADER.size + int(i) * RECORD_DTYPE.itemsize

    bad = np.flatnonzero((rec["reserved"] != 0) | (rec["flags"] != 0))
    if bad.size:
        raise CodecError("non-zero reserved or flags field", at(bad[0]))
    bad = np.flatnonzero(rec["channel"] >= nch)
    if bad.size:
        raise CodecError(f"channel {rec['channel'][bad[0]]} outside declared count {nch}", at(bad[0]))
    # per-channel order: compare each record with the previous one of its channel
    order = np.argsort(rec["channel"], kind="stable")
    ch, t = rec["channel"][order], rec["t"][order]
    dec = np.flatnonzero((ch[1:] == ch[:-1]) & (t[1:] < t[:-1]))
    if dec.size:
        first = int(order[dec + 1].min())
        raise CodecError("records out of order within channel", at(first))
    return TagFile(nch, rec.copy(), epoch, version)


def write(path: str | os.PathLike, tf: TagFile) -> None:
    atomic_write(path, encode(tf))


def read(path: str | os.PathLike) -> TagFile:
    return decode(Path(path).read_bytes())


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write via a temp file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
