"""Small closed set of named data shapes used by oracles and scenario configs.

Every shape maps points of shape ``(..., d)`` to values of shape ``(...)``.
Shapes are selected by name from JSON, e.g.::

    {"shape": "bump", "center": [0.3, 0.2], "radius": 0.8}
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Shape:
    is_zero = False

    def __call__(self, x):
        raise NotImplementedError

    def __mul__(self, other):
        return Product((self, other))


@dataclass(frozen=True)
class Zero(Shape):
    is_zero = True

    def __call__(self, x):
        return np.zeros(np.shape(x)[:-1])


@dataclass(frozen=True)
class Const(Shape):
    value: float = 1.0

    @property
    def is_zero(self):
        return self.value == 0.0

    def __call__(self, x):
        return np.full(np.shape(x)[:-1], float(self.value))


@dataclass(frozen=True)
class Affine(Shape):
    coef: tuple[float, ...]
    offset: float = 0.0

    @property
    def is_zero(self):
        return self.offset == 0.0 and not any(self.coef)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ np.asarray(self.coef, dtype=float) + self.offset


@dataclass(frozen=True)
class Bump(Shape):
    """Radial C^2 bump ``amp * (1 - |x-c|^2/r^2)^3`` on the ball, 0 outside."""

    center: tuple[float, ...]
    radius: float
    amp: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum((x - np.asarray(self.center)) ** 2, axis=-1) / self.radius**2
        return self.amp * np.clip(1.0 - r2, 0.0, None) ** 3


@dataclass(frozen=True)
class Sine(Shape):
    freq: tuple[float, ...]
    amp: float = 1.0
    phase: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.amp * np.sin(x @ np.asarray(self.freq, dtype=float) + self.phase)


@dataclass(frozen=True)
class Indicator(Shape):
    """Indicator of an axis-aligned box; 1/2 on faces (sgn(0)=0 convention)."""

    box: tuple[tuple[float, float], ...]
    value: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], float(self.value))
        for i, (lo, hi) in enumerate(self.box):
            out = out * 0.5 * (np.sign(x[..., i] - lo) - np.sign(x[..., i] - hi))
        return out


@dataclass(frozen=True)
class Product(Shape):
    factors: tuple[Shape, ...]

    @property
    def is_zero(self):
        return any(f.is_zero for f in self.factors)

    def __call__(self, x):
        out = self.factors[0](x)
        for f in self.factors[1:]:
            out = out * f(x)
        return out


def _box(b):
    return tuple((float(lo), float(hi)) for lo, hi in b)


def from_spec(spec) -> Shape:
    """Build a shape from its JSON description (a dict, or a bare number)."""
    if isinstance(spec, Shape):
        return spec
    if spec is None:
        return Zero()
    if isinstance(spec, (int, float)):
        return Const(float(spec))
    kind = spec.get("shape")
    if kind == "zero":
        return Zero()
    if kind == "const":
        return Const(float(spec.get("value", 1.0)))
    if kind == "affine":
        return Affine(tuple(map(float, spec["coef"])), float(spec.get("offset", 0.0)))
    if kind == "bump":
        return Bump(tuple(map(float, spec["center"])), float(spec["radius"]),
                    float(spec.get("amp", 1.0)))
    if kind == "sine":
        return Sine(tuple(map(float, spec["freq"])), float(spec.get("amp", 1.0)),
                    float(spec.get("phase", 0.0)))
    if kind == "indicator":
        return Indicator(_box(spec["box"]), float(spec.get("value", 1.0)))
    if kind == "product":
        return Product(tuple(from_spec(f) for f in spec["factors"]))
    raise ValueError(f"unknown shape {kind!r}")
