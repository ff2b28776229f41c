"""Snapshot persistence: a fixed-order plain-text header followed by a
row-major little-endian float64 payload.  Round trips are bit-exact."""

from __future__ import annotations

import numpy as np

from .fields import PhaseField
from .geometry import PhaseGrid

__all__ = ["SnapshotError", "export_snapshot", "import_snapshot"]

_MAGIC = "kfplab-snapshot"
_VERSION = 1


class SnapshotError(ValueError):
    """Malformed or incompatible snapshot file."""


def export_snapshot(field: PhaseField, path) -> None:
    grid = field.grid
    payload = np.ascontiguousarray(field.values, dtype="<f8")
    header = (
        f"{_MAGIC} {_VERSION}\n"
        f"dim = {grid.dim}\n"
        f"time = {float(field.t)!r}\n"
        f"n_x = {grid.n_x}\n"
        f"n_v = {grid.n_v}\n"
        f"x_max = {float(grid.x_max)!r}\n"
        f"v_max = {float(grid.v_max)!r}\n"
        f"payload = float64-le {payload.size}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload.tobytes())


def _parse_header_line(line: bytes, key: str, lineno: int):
    try:
        text = line.decode("ascii").strip()
    except UnicodeDecodeError as exc:
        raise SnapshotError(f"header line {lineno} is not ASCII") from exc
    name, _, value = text.partition(" = ")
    if name != key:
        raise SnapshotError(f"header line {lineno}: expected '{key}', got {text!r}")
    return value


def import_snapshot(path, grid: PhaseGrid | None = None) -> PhaseField:
    """Read a snapshot; with `grid` given, dimensions must match exactly."""
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii", errors="replace").strip()
        parts = first.split()
        if len(parts) != 2 or parts[0] != _MAGIC:
            raise SnapshotError(f"not a snapshot file (magic line {first!r})")
        if int(parts[1]) != _VERSION:
            raise SnapshotError(f"unsupported snapshot version {parts[1]} "
                                f"(expected {_VERSION})")
        dim = int(_parse_header_line(fh.readline(), "dim", 2))
        t = float(_parse_header_line(fh.readline(), "time", 3))
        n_x = int(_parse_header_line(fh.readline(), "n_x", 4))
        n_v = int(_parse_header_line(fh.readline(), "n_v", 5))
        x_max = float(_parse_header_line(fh.readline(), "x_max", 6))
        v_max = float(_parse_header_line(fh.readline(), "v_max", 7))
        spec = _parse_header_line(fh.readline(), "payload", 8).split()
        if len(spec) != 2 or spec[0] != "float64-le":
            raise SnapshotError(f"unsupported payload spec {spec!r}")
        count = int(spec[1])
        expected = n_x**dim * n_v**dim
        if count != expected:
            raise SnapshotError(f"payload count {count} does not match "
                                f"dims {n_x}^{dim} * {n_v}^{dim} = {expected}")
        raw = fh.read(count * 8)
        if len(raw) != count * 8:
            raise SnapshotError(f"truncated payload: expected {count * 8} bytes, "
                                f"got {len(raw)}")
    if grid is None:
        grid = PhaseGrid(dim, (min(t, -1.0), max(t + 1.0, 0.0)), 4,
                         x_max, n_x, v_max, n_v)
    else:
        found = (dim, n_x, n_v)
        want = (grid.dim, grid.n_x, grid.n_v)
        if found != want:
            raise SnapshotError(f"snapshot dims {found} do not match the "
                                f"expected grid {want}")
        if abs(grid.x_max - x_max) > 1e-12 or abs(grid.v_max - v_max) > 1e-12:
            raise SnapshotError(f"snapshot box ({x_max}, {v_max}) does not match "
                                f"the expected grid ({grid.x_max}, {grid.v_max})")
    shape = (n_x,) * dim + (n_v,) * dim
    values = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return PhaseField(grid, t, values)
