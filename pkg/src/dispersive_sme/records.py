"""Trajectory export: CSV series and binary state dumps.

Binary state dump layout (all little-endian)::

    offset  type              content
    0       8 bytes           magic b"DSMEDUMP"
    8       uint32            format version (1)
    12      uint32            element type: 1 = complex64, 2 = complex128
    16      uint32            number of tensor factors F
    20      uint32[F]         factor dimensions (system first, then modes)
    ..      uint64            number of states K
    ..      float64[K]        snapshot times
    ..      element[K, n, n]  row-major matrices, real/imag interleaved,
                              n = product of the factor dimensions
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAGIC = b"DSMEDUMP"
VERSION = 1
_DTYPES = {1: np.dtype("<c8"), 2: np.dtype("<c16")}
_CODES = {np.dtype(np.complex64): 1, np.dtype(np.complex128): 2}


class DumpFormatError(ValueError):
    pass


@dataclass
class StateDump:
    dims: tuple[int, ...]
    times: np.ndarray
    states: np.ndarray


def write_state_dump(path, dims: Sequence[int], times, states, dtype=np.complex128) -> None:
    dtype = np.dtype(dtype)
    if dtype not in _CODES:
        raise DumpFormatError(f"unsupported element type {dtype}")
    states = np.asarray(states)
    times = np.asarray(times, dtype="<f8")
    n = int(np.prod(dims))
    if states.shape != (len(times), n, n):
        raise DumpFormatError(f"states of shape {states.shape} do not match dims {tuple(dims)} and {len(times)} times")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, _CODES[dtype], len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(struct.pack("<Q", len(times)))
        fh.write(times.tobytes())
        fh.write(states.astype(_DTYPES[_CODES[dtype]]).tobytes(order="C"))


def read_state_dump(path) -> StateDump:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise DumpFormatError(f"{path}: not a state dump (bad magic)")
    version, code, nf = struct.unpack_from("<III", data, 8)
    if version != VERSION:
        raise DumpFormatError(f"{path}: unsupported dump version {version}")
    if code not in _DTYPES:
        raise DumpFormatError(f"{path}: unknown element type code {code}")
    off = 20
    dims = struct.unpack_from(f"<{nf}I", data, off)
    off += 4 * nf
    (k,) = struct.unpack_from("<Q", data, off)
    off += 8
    times = np.frombuffer(data, dtype="<f8", count=k, offset=off).copy()
    off += 8 * k
    n = int(np.prod(dims))
    dt = _DTYPES[code]
    expected = off + k * n * n * dt.itemsize
    if len(data) != expected:
        raise DumpFormatError(f"{path}: size {len(data)} does not match header (expected {expected})")
    states = np.frombuffer(data, dtype=dt, count=k * n * n, offset=off).reshape(k, n, n)
    return StateDump(tuple(dims), times, states.astype(np.complex128))


def write_trajectory_csv(path, record, names: Sequence[str] | None = None) -> None:
    """Columns ``time, dw, dy`` then the named observables; ``dw``/``dy`` are blank on the last row."""
    names = list(record.observables) if names is None else list(names)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "dw", "dy", *names])
        steps = record.steps
        for k, t in enumerate(record.times):
            inc = [repr(float(record.dw[k])), repr(float(record.dy[k]))] if k < steps else ["", ""]
            w.writerow([repr(float(t)), *inc, *(repr(float(record.observables[n][k])) for n in names)])


def write_series_csv(path, columns: dict) -> None:
    """Write equal-length columns; floats use ``repr`` so output is byte-stable."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    length = {len(d) for d in data}
    if len(length) != 1:
        raise ValueError(f"columns have different lengths: {sorted(length)}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_series_csv(path) -> dict:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        cols = {h: [] for h in header}
        for row in r:
            for h, v in zip(header, row):
                cols[h].append(float(v) if v != "" else np.nan)
    return {h: np.asarray(v) for h, v in cols.items()}
