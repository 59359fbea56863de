"""Binary and CSV serialization of grid functions.

Binary layout: a 32-byte little-endian header ``struct('<8s i i d d')`` holding
the magic ``b"PSHLAB1\\0"``, n, res, period and a reserved float (0.0),
followed by ``res**(2n)`` little-endian float64 values in row-major node order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .grid import GridFunction, PeriodicGrid

MAGIC = b"PSHLAB1\0"
HEADER = struct.Struct("<8siidd")
assert HEADER.size == 32


def to_bytes(u: GridFunction) -> bytes:
    g = u.grid
    head = HEADER.pack(MAGIC, g.n, g.res, float(g.period), 0.0)
    return head + u.flat.astype("<f8").tobytes()


def from_bytes(data: bytes) -> GridFunction:
    if len(data) < HEADER.size:
        raise ParameterError("truncated grid function file")
    magic, n, res, period, _ = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParameterError(f"bad magic {magic!r}")
    grid = PeriodicGrid(n, res, period)
    values = np.frombuffer(data, dtype="<f8", offset=HEADER.size)
    if values.size != grid.size:
        raise ParameterError(f"expected {grid.size} values, found {values.size}")
    return GridFunction(grid, values.astype(float))


def save_binary(u: GridFunction, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(u))
    return path


def load_binary(path) -> GridFunction:
    return from_bytes(Path(path).read_bytes())


def save_csv(u: GridFunction, path) -> Path:
    g = u.grid
    names = [f"{c}{j + 1}" for j in range(g.n) for c in ("x", "y")]
    coords = np.stack([c.reshape(-1) for c in g.coords()], axis=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", *names, "value"])
        for i, (x, v) in enumerate(zip(coords, u.flat)):
            w.writerow([i, *(f"{c:.17g}" for c in x), f"{v:.17g}"])
    return path


def load_csv(path, grid: PeriodicGrid) -> GridFunction:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    order = np.argsort(data[:, 0])
    return GridFunction(grid, data[order, -1])
