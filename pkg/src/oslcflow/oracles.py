"""Closed-form ground truth.

The planar compressive field ``a = (-sgn x1, 0)`` has explicit transport flows,
jacobians, general solutions of both transport equations and an explicit
exceptional set. Linear fields ``a = A x`` have exact exponential flows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .shapes import Shape, Zero, from_spec


def _pos(v):
    return np.clip(v, 0.0, None)


@dataclass(frozen=True)
class SgnExampleSpec:
    """Data of the general solutions for the planar compressive sgn field.

    ``phi`` and ``psi`` act on points ``(y1, y2)``; ``h`` and ``g`` act on
    ``(tau, y2)`` where ``tau = (T - t - |x1|)_+`` is the time left inside
    the cone. ``h(0, .)`` must vanish.
    """

    T: float = 1.0
    lam: float = 0.0
    phi: Shape = field(default_factory=Zero)
    h: Shape = field(default_factory=Zero)
    psi: Shape = field(default_factory=Zero)
    g: Shape = field(default_factory=Zero)

    def __post_init__(self):
        for name in ("phi", "h", "psi", "g"):
            object.__setattr__(self, name, from_spec(getattr(self, name)))
        y2 = np.linspace(-5.0, 5.0, 101)
        h0 = self.h(np.stack([np.zeros_like(y2), y2], -1))
        if np.max(np.abs(h0)) > 1e-12:
            raise ValueError("h(0, x2) must vanish for the general solution to be admissible")

    @property
    def in_exceptional_class(self) -> bool:
        """The nonconservative solution vanishes at time T (``phi == 0``)."""
        return self.phi.is_zero

    @property
    def reversible(self) -> bool:
        """The conservative solution is reversible (``g == 0``)."""
        return self.g.is_zero


def sgn_flow(spec: SgnExampleSpec | float, s, t, x) -> np.ndarray:
    """Member ``lam`` of the transport-flow family; ``spec`` may be the bare ``lam``."""
    lam = spec.lam if isinstance(spec, SgnExampleSpec) else float(spec)
    if np.any(np.asarray(t) > np.asarray(s)):
        raise ValueError("sgn_flow needs t <= s")
    x = np.asarray(x, dtype=float)
    d = np.asarray(s, dtype=float) - np.asarray(t, dtype=float)
    a1 = np.abs(x[..., 0])
    y1 = _pos(a1 - d) * np.sign(x[..., 0])
    y2 = x[..., 1] + lam * _pos(d - a1)
    return np.stack([y1, y2], axis=-1)


def sgn_jacobian(t, x, T=1.0, midpoint=False) -> np.ndarray:
    """Indicator of ``|x1| >= T - t``; with ``midpoint`` the value on the edge is 1/2."""
    x = np.asarray(x, dtype=float)
    r = np.abs(x[..., 0]) - (T - np.asarray(t, dtype=float))
    if midpoint:
        return 0.5 * (1.0 + np.sign(r))
    return (r >= 0).astype(float)


def _inner(spec, t, x):
    x = np.asarray(x, dtype=float)
    rem = spec.T - np.asarray(t, dtype=float)
    a1 = np.abs(x[..., 0])
    outer_pt = np.stack([_pos(a1 - rem) * np.sign(x[..., 0]), x[..., 1]], -1)
    cone_pt = np.stack([np.broadcast_to(_pos(rem - a1), a1.shape), x[..., 1]], -1)
    return x, a1, rem, outer_pt, cone_pt


def sgn_general_nonconservative(spec: SgnExampleSpec, t, x) -> np.ndarray:
    """``p = phi(X^T(t, x)) + h((T - t - |x1|)_+, x2)``."""
    x, a1, rem, outer_pt, cone_pt = _inner(spec, t, x)
    return spec.phi(outer_pt) + spec.h(cone_pt)


def sgn_general_conservative(spec: SgnExampleSpec, t, x) -> np.ndarray:
    """``psi(X^T)`` outside the cone, ``g(T - t - |x1|, x2) sgn x1`` inside it."""
    x, a1, rem, outer_pt, cone_pt = _inner(spec, t, x)
    return np.where(a1 >= rem, spec.psi(outer_pt), spec.g(cone_pt) * np.sign(x[..., 0]))


def sgn_exceptional_set(t, x, T=1.0) -> np.ndarray:
    """Membership in the cone ``|x1| < T - t`` where Lipschitz solutions vanishing at T live."""
    x = np.asarray(x, dtype=float)
    return np.abs(x[..., 0]) < T - np.asarray(t, dtype=float)


def sgn_backtrace(t, x) -> np.ndarray:
    """Backward characteristic ``X(0, t, x) = x + t sgn(x1) e1`` of the compressive sgn field."""
    x = np.array(x, dtype=float, copy=True)
    x[..., 0] = x[..., 0] + np.asarray(t) * np.sign(x[..., 0])
    return x


@dataclass(frozen=True)
class LinearOracle:
    point: np.ndarray
    jacobian: float
    modulus: float


def linear_field_oracle(A, s, t, x) -> LinearOracle:
    """Exact flow, jacobian and OSLC modulus of ``a(x) = A x``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    E = expm((s - t) * A)
    point = np.asarray(x, dtype=float) @ E.T
    jac = float(np.exp((s - t) * np.trace(A)))
    modulus = float(np.linalg.eigvalsh(0.5 * (A + A.T))[-1])
    return LinearOracle(point, jac, modulus)
