"""Scalar fields on phase-space grids and their time-indexed trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, PhaseGrid

__all__ = ["PhaseField", "Trajectory"]


@dataclass
class PhaseField:
    """One time slice of a scalar field over the (x, v) cells of a grid."""

    grid: PhaseGrid
    t: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GeometryError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise GeometryError("field contains non-finite values")

    @classmethod
    def constant(cls, grid: PhaseGrid, t: float, value: float) -> "PhaseField":
        return cls(grid, t, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid, t, fn) -> "PhaseField":
        """Sample fn at cell centers. For dim=1 `fn(x, v)` with broadcast arrays;
        for dim=2 `fn(x1, x2, v1, v2)`."""
        if grid.dim == 1:
            vals = fn(grid.x_centers[:, None], grid.v_centers[None, :])
        else:
            x1 = grid.x_centers[:, None, None, None]
            x2 = grid.x_centers[None, :, None, None]
            v1 = grid.v_centers[None, None, :, None]
            v2 = grid.v_centers[None, None, None, :]
            vals = fn(x1, x2, v1, v2)
        return cls(grid, t, np.broadcast_to(vals, grid.shape).copy())

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) * self.grid.cell_volume))

    def linf_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    def copy(self) -> "PhaseField":
        return PhaseField(self.grid, self.t, self.values.copy())


@dataclass
class Trajectory:
    """A stored sequence of field slices at uniformly spaced times.

    `values` has shape (n_slices, *grid.shape).  Slices are written once by
    the solver and treated as immutable afterwards; the per-step ledger
    carries cheap L2/mass/extrema records for energy accounting.
    """

    grid: PhaseGrid
    times: np.ndarray
    values: np.ndarray
    ledger: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.times),) + self.grid.shape:
            raise GeometryError(
                f"trajectory shape {self.values.shape} does not match "
                f"{(len(self.times),) + self.grid.shape}")

    @property
    def n_slices(self) -> int:
        return len(self.times)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def slice_index(self, t: float) -> int:
        """Index of the stored slice nearest to t (t must be inside the span)."""
        if t < self.times[0] - 1e-9 or t > self.times[-1] + 1e-9:
            raise GeometryError(f"time {t} outside trajectory span "
                                f"[{self.times[0]}, {self.times[-1]}]")
        return int(np.argmin(np.abs(self.times - t)))

    def field(self, i: int) -> PhaseField:
        return PhaseField(self.grid, float(self.times[i]), self.values[i])

    def at_time(self, t: float) -> np.ndarray:
        """Values linearly interpolated in time (clamped to the span)."""
        times = self.times
        if t <= times[0]:
            return self.values[0]
        if t >= times[-1]:
            return self.values[-1]
        j = int(np.searchsorted(times, t)) - 1
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]

    def map_values(self, fn) -> "Trajectory":
        """A new trajectory with fn applied slice-wise to the values."""
        return Trajectory(self.grid, self.times.copy(), fn(self.values))

    @classmethod
    def from_constant(cls, grid, times, value: float) -> "Trajectory":
        times = np.asarray(times, dtype=float)
        vals = np.full((len(times),) + grid.shape, float(value))
        return cls(grid, times, vals)

    @classmethod
    def from_function(cls, grid, times, fn) -> "Trajectory":
        """Sample fn(t, x..., v...) at slice times and cell centers."""
        times = np.asarray(times, dtype=float)
        slices = []
        for t in times:
            if grid.dim == 1:
                vals = fn(t, grid.x_centers[:, None], grid.v_centers[None, :])
            else:
                x1 = grid.x_centers[:, None, None, None]
                x2 = grid.x_centers[None, :, None, None]
                v1 = grid.v_centers[None, None, :, None]
                v2 = grid.v_centers[None, None, None, :]
                vals = fn(t, x1, x2, v1, v2)
            slices.append(np.broadcast_to(vals, grid.shape).copy())
        return cls(grid, times, np.stack(slices))
