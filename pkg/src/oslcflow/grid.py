"""Space-time grids, sampled scalar fields, quadrature and interpolation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator

ROLES = ("conservative_pi", "nonconservative_u", "jacobian_J", "test_function")


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Box-shaped spatial grid with a uniform time partition.

    Parameters
    ----------
    box : sequence of (min, max) pairs, one per spatial axis
    nx : nodes per axis (>= 2)
    t0, T : time interval
    nt : number of time samples (>= 2)
    padding : margin added around ``box`` where flow trajectories may travel.
        Must be at least ``sup_bound * (T - t0)`` for the field in use; see
        :meth:`ensure_padding`.
    """

    box: tuple[tuple[float, float], ...]
    nx: tuple[int, ...]
    t0: float = 0.0
    T: float = 1.0
    nt: int = 101
    padding: float = 0.0

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        nx = tuple(int(n) for n in np.broadcast_to(self.nx, (len(box),)))
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "nx", nx)
        if any(hi <= lo for lo, hi in box):
            raise ValueError(f"degenerate box {box}")
        if any(n < 2 for n in nx):
            raise ValueError(f"need at least 2 nodes per axis, got {nx}")
        if self.nt < 2:
            raise ValueError(f"need at least 2 time samples, got {self.nt}")
        if not self.T > self.t0:
            raise ValueError("T must exceed t0")
        if self.padding < 0:
            raise ValueError("padding must be nonnegative")

    @classmethod
    def square(cls, half_width=2.0, n=129, dim=2, **kw) -> SpaceTimeGrid:
        return cls(box=((-half_width, half_width),) * dim, nx=(n,) * dim, **kw)

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nx

    @property
    def h(self) -> np.ndarray:
        return np.array([(hi - lo) / (n - 1) for (lo, hi), n in zip(self.box, self.nx)])

    @property
    def hmax(self) -> float:
        return float(self.h.max())

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / (self.nt - 1)

    @cached_property
    def times(self) -> np.ndarray:
        return self.t0 + (self.T - self.t0) * (np.arange(self.nt) / (self.nt - 1))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        # lo + (hi-lo)*i/(n-1) keeps the midpoint of symmetric boxes exactly at 0
        return tuple(lo + (hi - lo) * (np.arange(n) / (n - 1))
                     for (lo, hi), n in zip(self.box, self.nx))

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(*nx, dim)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Tensor trapezoid weights, shape ``nx``."""
        w = np.ones(self.nx)
        for i, (n, hi) in enumerate(zip(self.nx, self.h)):
            wi = np.full(n, hi)
            wi[[0, -1]] *= 0.5
            w = w * wi.reshape([-1 if j == i else 1 for j in range(self.dim)])
        return w

    @cached_property
    def time_weights(self) -> np.ndarray:
        w = np.full(self.nt, self.dt)
        w[[0, -1]] *= 0.5
        return w

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.box]))

    @property
    def padded_box(self) -> tuple[tuple[float, float], ...]:
        p = self.padding
        return tuple((lo - p, hi + p) for lo, hi in self.box)

    def time_index(self, t: float) -> int:
        k = int(round((t - self.t0) / self.dt))
        if not 0 <= k < self.nt or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a stored time sample")
        return k

    def ensure_padding(self, sup_bound: float) -> SpaceTimeGrid:
        need = sup_bound * (self.T - self.t0)
        return self if self.padding >= need else replace(self, padding=need)

    def check_padding(self, sup_bound: float) -> None:
        if self.padding < sup_bound * (self.T - self.t0) * (1 - 1e-12):
            raise ValueError(
                f"padding {self.padding} < sup_bound*(T-t0) = {sup_bound * (self.T - self.t0)}")

    def refined(self, factor: float) -> SpaceTimeGrid:
        """Grid with spacing divided by ``factor`` in space and time."""
        nx = tuple(int(round((n - 1) * factor)) + 1 for n in self.nx)
        nt = int(round((self.nt - 1) * factor)) + 1
        return replace(self, nx=nx, nt=nt)

    def same_as(self, other: SpaceTimeGrid) -> bool:
        return (self.box == other.box and self.nx == other.nx
                and self.t0 == other.t0 and self.T == other.T and self.nt == other.nt)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Trapezoid integral over the box of ``values[..., *nx]``."""
        axes = tuple(range(-self.dim, 0))
        return np.sum(values * self.weights, axis=axes)

    def inside(self, points: np.ndarray, padded=False, tol=1e-12) -> np.ndarray:
        box = self.padded_box if padded else self.box
        ok = np.ones(points.shape[:-1], dtype=bool)
        for i, (lo, hi) in enumerate(box):
            ok &= (points[..., i] >= lo - tol) & (points[..., i] <= hi + tol)
        return ok


def clamp_to_box(points: np.ndarray, box) -> np.ndarray:
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return np.clip(points, lo, hi)


def interpolate(grid: SpaceTimeGrid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of node values at arbitrary points.

    ``values`` has shape ``(*nx, *trailing)``; points outside the box are
    clamped to it. Returns shape ``(*points.shape[:-1], *trailing)``.
    """
    values = np.asarray(values, dtype=float)
    trailing = values.shape[grid.dim:]
    pts = clamp_to_box(np.asarray(points, dtype=float), grid.box)
    flat = pts.reshape(-1, grid.dim)
    interp = RegularGridInterpolator(grid.axes, values, method="linear",
                                     bounds_error=False, fill_value=None)
    out = interp(flat)
    return out.reshape(pts.shape[:-1] + trailing)


def gradient(grid: SpaceTimeGrid, values: np.ndarray) -> np.ndarray:
    """Spatial gradient of ``values[..., *nx]`` stacked on a new last axis.

    Centered second-order differences inside, one-sided second-order at the
    boundary, so affine data are differentiated exactly.
    """
    values = np.asarray(values, dtype=float)
    lead = values.ndim - grid.dim
    parts = [np.gradient(values, grid.h[i], axis=lead + i, edge_order=2)
             for i in range(grid.dim)]
    return np.stack(parts, axis=-1)


def det(mat: np.ndarray) -> np.ndarray:
    """Determinant over the last two axes; explicit cofactors up to 3x3."""
    n = mat.shape[-1]
    if n == 1:
        return mat[..., 0, 0].copy()
    if n == 2:
        return mat[..., 0, 0] * mat[..., 1, 1] - mat[..., 0, 1] * mat[..., 1, 0]
    if n == 3:
        a = mat
        return (a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
                - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
                + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]))
    return np.linalg.det(mat)


@dataclass(frozen=True)
class ScalarField:
    """Node samples of a scalar quantity at a list of stored times.

    ``values`` has shape ``(len(times), *grid.nx)``.
    """

    grid: SpaceTimeGrid
    times: np.ndarray
    values: np.ndarray
    role: str = "test_function"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if values.shape == self.grid.nx:
            values = values[None]
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if values.shape != (len(times),) + self.grid.nx:
            raise ValueError(f"values shape {values.shape} does not match "
                             f"{len(times)} times on grid {self.grid.nx}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite values in ScalarField")

    @classmethod
    def sample(cls, grid, func, times=None, role="test_function") -> ScalarField:
        """Sample ``func(t, x)`` (vectorized in ``x``) at every stored time."""
        times = grid.times if times is None else np.atleast_1d(times)
        vals = np.stack([np.broadcast_to(func(t, grid.nodes), grid.nx) for t in times])
        return cls(grid, times, vals, role)

    @classmethod
    def sample_averaged(cls, grid, func, times=None, role="test_function", sub: int = 16,
                        axes=None) -> ScalarField:
        """Dual-cell averages of ``func(t, x)`` by midpoint subsampling.

        Each node gets the mean of ``sub`` equally spaced midpoints per
        averaged axis (``axes``, default all) across its cell, clipped to the
        box. Trapezoid integrals of the result then resolve jumps that fall
        between nodes.
        """
        times = grid.times if times is None else np.atleast_1d(times)
        axes = tuple(range(grid.dim)) if axes is None else tuple(axes)
        offsets = []
        for i in range(grid.dim):
            if i in axes:
                offsets.append((np.arange(sub) + 0.5) / sub - 0.5)
            else:
                offsets.append(np.zeros(1))
        vals = np.zeros((len(times),) + grid.nx)
        count = 0
        for shift in np.stack(np.meshgrid(*offsets, indexing="ij"), -1).reshape(-1, grid.dim):
            pts = clamp_to_box(grid.nodes + shift * np.asarray(grid.h), grid.box)
            vals += np.stack([np.broadcast_to(func(t, pts), grid.nx) for t in times])
            count += 1
        return cls(grid, times, vals / count, role)

    def index(self, t: float) -> int:
        k = np.flatnonzero(np.abs(self.times - t) <= 1e-9 * max(1.0, abs(t)))
        if k.size == 0:
            raise ValueError(f"t={t} not stored in this field")
        return int(k[0])

    def at(self, t: float) -> np.ndarray:
        return self.values[self.index(t)]

    def with_values(self, values, role=None) -> ScalarField:
        return ScalarField(self.grid, self.times, values, role or self.role, dict(self.meta))

    def check_compatible(self, other: ScalarField) -> None:
        if not self.grid.same_as(other.grid):
            raise ValueError("grid mismatch between scalar fields")
        if self.times.shape != other.times.shape or not np.allclose(self.times, other.times):
            raise ValueError("stored times differ between scalar fields")
