"""Finite family of compactly supported tensor bumps used by every weak-form check.

Each bump is ``prod_i (1 - ((y_i - c_i)/r_i)^2)^3_+``. Centers sit on the
3 x ... x 3 lattice of quarter points of the domain with half-width a quarter
of the domain width; one extra bump is centered with half-width half the
domain width. All supports lie in the closed domain.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import SpaceTimeGrid


def _bump1d(s):
    return np.clip(1.0 - s * s, 0.0, None) ** 3


def _dbump1d(s):
    inside = np.abs(s) < 1.0
    return np.where(inside, -6.0 * s * (1.0 - s * s) ** 2, 0.0)


@dataclass(frozen=True)
class TensorBump:
    center: tuple[float, ...]
    radius: tuple[float, ...]
    id: str = ""

    @property
    def ncoord(self):
        return len(self.center)

    def factors(self, coords):
        """Per-coordinate values and derivatives on 1-D coordinate arrays."""
        vals, ders = [], []
        for c, r, y in zip(self.center, self.radius, coords):
            s = (np.asarray(y, dtype=float) - c) / r
            vals.append(_bump1d(s))
            ders.append(_dbump1d(s) / r)
        return vals, ders

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.ones(y.shape[:-1])
        for i, (c, r) in enumerate(zip(self.center, self.radius)):
            out = out * _bump1d((y[..., i] - c) / r)
        return out

    def grad(self, y):
        y = np.asarray(y, dtype=float)
        s = [(y[..., i] - c) / r for i, (c, r) in enumerate(zip(self.center, self.radius))]
        b = [_bump1d(si) for si in s]
        out = []
        for i in range(self.ncoord):
            g = _dbump1d(s[i]) / self.radius[i]
            for j in range(self.ncoord):
                if j != i:
                    g = g * b[j]
            out.append(g)
        return np.stack(out, axis=-1)

    def on_tensor_grid(self, coords):
        """Value and gradient on the tensor grid spanned by ``coords``.

        Returns ``(phi, grads)`` with ``phi`` of shape ``(len(c0), len(c1), ...)``
        and ``grads`` a list with one array per coordinate.
        """
        vals, ders = self.factors(coords)
        n = len(coords)

        def outer(parts):
            out = parts[0]
            for p in parts[1:]:
                out = np.multiply.outer(out, p)
            return out

        phi = outer(vals)
        grads = [outer([ders[j] if j == i else vals[j] for j in range(n)]) for i in range(n)]
        return phi, grads


def _lattice(bounds, prefix):
    widths = [hi - lo for lo, hi in bounds]
    out = []
    quarter = [[lo + k * w / 4 for k in (1, 2, 3)] for (lo, _), w in zip(bounds, widths)]
    small = tuple(0.25 * w for w in widths)
    for idx in itertools.product(range(3), repeat=len(bounds)):
        c = tuple(quarter[i][k] for i, k in enumerate(idx))
        out.append(TensorBump(c, small, f"{prefix}q{''.join(map(str, idx))}"))
    mid = tuple(0.5 * (lo + hi) for lo, hi in bounds)
    out.append(TensorBump(mid, tuple(0.5 * w for w in widths), f"{prefix}c"))
    return out


def spatial_tests(box) -> list[TensorBump]:
    """Spatial family on ``box`` (3^N quarter-lattice bumps plus one wide bump)."""
    return _lattice(box, "x")


def spacetime_tests(grid: SpaceTimeGrid) -> list[TensorBump]:
    """Space-time family; time supports lie inside ``[t0 + dt, T - dt]``.

    Coordinates are ordered ``(t, x_1, ..., x_N)``.
    """
    tb = (grid.t0 + grid.dt, grid.T - grid.dt)
    out = []
    for tt in _lattice([tb], "t"):
        for xx in spatial_tests(grid.box):
            out.append(TensorBump(tt.center + xx.center, tt.radius + xx.radius,
                                  f"{tt.id}-{xx.id}"))
    return out
