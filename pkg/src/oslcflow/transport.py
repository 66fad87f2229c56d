"""Backward conservative and forward nonconservative solvers with their diagnostics.

The backward problem is solved by the pushforward formula
``pi(t, x) = pi_T(X^T(t, x)) J(X^T)(t, x)``; the forward problem by
``u(t, x) = u0(X(t0, t, x))`` along eps-converged backward characteristics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fields import CoefficientField, evaluate
from .flow import FlowMap, SupportError, build_transport_flow, trace_back
from .grid import ScalarField, SpaceTimeGrid, gradient, interpolate
from .jacobian import jacobian_det
from .testfunctions import TensorBump, spacetime_tests

__all__ = [
    "SupportError", "PairingTrace", "WeakResidualReport", "BVTrace", "compact_cutoff",
    "solve_backward_reversible", "solve_forward_duality", "duality_pairing",
    "weak_residual", "l1_trace", "bv_trace", "weak_product",
]


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def compact_cutoff(box, margin: float, ramp: float | None = None) -> Callable:
    """C^2 cutoff that vanishes within ``margin`` of the box edge.

    It rises to 1 over a further distance ``ramp`` (default a quarter of the
    remaining half-width).
    """
    half = min(0.5 * (hi - lo) for lo, hi in box)
    if margin >= half:
        raise ValueError(f"margin {margin} leaves no interior in box {box}")
    ramp = 0.25 * (half - margin) if ramp is None else ramp

    def cut(x):
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for i, (lo, hi) in enumerate(box):
            dist = np.minimum(x[..., i] - lo, hi - x[..., i])
            out = out * _smoothstep((dist - margin) / ramp)
        return out

    return cut


def _as_final(data, grid: SpaceTimeGrid, t: float, role: str) -> ScalarField:
    if isinstance(data, ScalarField):
        if not data.grid.same_as(grid):
            raise ValueError("data grid does not match the solver grid")
        return data if len(data.times) == 1 else ScalarField(grid, [t], data.at(t), role)
    vals = np.broadcast_to(np.asarray(data(grid.nodes), dtype=float), grid.nx)
    return ScalarField(grid, [t], vals, role)


def _support_margin(grid: SpaceTimeGrid, values: np.ndarray, margin: float) -> float:
    """Distance from the edge of the box to the nearest node with nonzero data."""
    nz = np.abs(values) > 1e-14 * max(1.0, float(np.abs(values).max()))
    if not nz.any():
        return math.inf
    pts = grid.nodes[nz]
    best = math.inf
    for i, (lo, hi) in enumerate(grid.box):
        best = min(best, float(np.min(pts[:, i] - lo)), float(np.min(hi - pts[:, i])))
    return best


def solve_backward_reversible(field_: CoefficientField, pi_T, grid: SpaceTimeGrid,
                              flow: FlowMap | None = None, cutoff: bool = False,
                              **flow_kw) -> ScalarField:
    """Reversible solution of the backward conservative problem.

    ``pi_T`` is a single-time :class:`ScalarField` or a callable on points.
    With ``cutoff=True`` the data is first multiplied by :func:`compact_cutoff`.
    Raises :class:`SupportError` when the data reaches within
    ``sup_bound * (T - t0)`` of the box edge.
    """
    margin = field_.sup_bound * (grid.T - grid.t0)
    final = _as_final(pi_T, grid, grid.T, "conservative_pi")
    vals = final.values[0]
    if cutoff:
        vals = vals * compact_cutoff(grid.box, margin)(grid.nodes)
    if _support_margin(grid, vals, margin) < margin - 1e-12:
        raise SupportError(
            f"final data reaches within {margin:g} (= sup_bound * T) of the box edge")
    if flow is None:
        flow = build_transport_flow(field_, grid, **flow_kw)
    elif flow.direction != "backward_transport" or not flow.grid.same_as(grid):
        raise ValueError("flow must be a backward_transport map on the same grid")
    J = jacobian_det(flow)
    out = np.empty((grid.nt,) + grid.nx)
    for k, t in enumerate(grid.times):
        out[k] = interpolate(grid, vals, flow.at(t)) * J.values[k]
    out[-1] = vals
    return ScalarField(grid, grid.times, out, "conservative_pi",
                       {"eps_used": flow.eps_used, "jacobian_min": float(J.values.min())})


def solve_forward_duality(field_: CoefficientField, u0, grid: SpaceTimeGrid,
                          trace: FlowMap | None = None, **flow_kw) -> ScalarField:
    """Forward nonconservative solution ``u(t, x) = u0(X(t0, t, x))``.

    ``u0`` is read by multilinear interpolation (clamped to the box). Raises
    :class:`SupportError` if backward characteristics leave the padded box.
    """
    init = _as_final(u0, grid, grid.t0, "nonconservative_u")
    vals = init.values[0]
    if trace is None:
        trace = trace_back(field_, grid, **flow_kw)
    elif trace.direction != "backtrace" or not trace.grid.same_as(grid):
        raise ValueError("trace must be a backtrace map on the same grid")
    out = np.empty((grid.nt,) + grid.nx)
    for k, t in enumerate(grid.times):
        out[k] = interpolate(grid, vals, trace.at(t))
    out[0] = vals
    return ScalarField(grid, grid.times, out, "nonconservative_u", {"eps_used": trace.eps_used})


@dataclass(frozen=True)
class PairingTrace:
    times: np.ndarray
    values: np.ndarray

    @property
    def drift(self) -> float:
        vT = float(self.values[-1])
        return float(np.max(np.abs(self.values - vT))) / max(1.0, abs(vT))


def duality_pairing(u: ScalarField, pi: ScalarField) -> PairingTrace:
    """``v(t) = int u(t, x) pi(t, x) dx`` at every stored time."""
    u.check_compatible(pi)
    return PairingTrace(u.times.copy(), u.grid.integrate(u.values * pi.values))


@dataclass(frozen=True)
class WeakResidualReport:
    residuals: dict
    h: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


def _velocity_at_nodes(field_: CoefficientField, grid: SpaceTimeGrid, times) -> np.ndarray:
    if field_.autonomous:
        a = evaluate(field_, times[0], grid.nodes)
        return np.broadcast_to(a, (len(times),) + a.shape)
    return np.stack([evaluate(field_, t, grid.nodes) for t in times])


def weak_residual(pi: ScalarField, field_: CoefficientField,
                  tests: Sequence[TensorBump] | None = None) -> WeakResidualReport:
    """``|int int pi (d_t phi + a . grad phi) dt dx|`` per space-time test."""
    grid = pi.grid
    if len(pi.times) != grid.nt:
        raise ValueError("weak residual needs pi at every stored time")
    tests = spacetime_tests(grid) if tests is None else tests
    a = _velocity_at_nodes(field_, grid, pi.times)
    flux = [pi.values * a[..., i] for i in range(grid.dim)]
    W = np.multiply.outer(grid.time_weights, grid.weights)
    coords = (grid.times,) + grid.axes
    res = {}
    for phi in tests:
        _, grads = phi.on_tensor_grid(coords)
        acc = np.sum(pi.values * grads[0] * W)
        for i in range(grid.dim):
            acc += np.sum(flux[i] * grads[i + 1] * W)
        res[phi.id] = abs(float(acc))
    return WeakResidualReport(res, grid.hmax)


def l1_trace(pi: ScalarField) -> np.ndarray:
    """``||pi(t, .)||_L1`` per stored time."""
    return pi.grid.integrate(np.abs(pi.values))


@dataclass(frozen=True)
class BVTrace:
    times: np.ndarray
    tv: np.ndarray
    bound: np.ndarray

    @property
    def margin(self) -> np.ndarray:
        """Relative excess ``tv / bound - 1``; negative when the bound holds."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.bound > 0, self.tv / self.bound - 1.0,
                            np.where(self.tv > 0, np.inf, -1.0))

    def violated(self, slack: float = 0.05) -> bool:
        return bool(np.any(self.margin > slack))


def ball_weights(grid: SpaceTimeGrid, x0, R: float, sub: int | None = None) -> np.ndarray:
    """Quadrature weights of the ball ``B(x0, R)``: each node's dual cell
    (clipped to the box) measured inside the ball by midpoint subsampling."""
    N = grid.dim
    sub = {1: 64, 2: 8}.get(N, 3) if sub is None else sub
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    grids = np.meshgrid(*([offs] * N), indexing="ij")
    local = np.stack([g.ravel() for g in grids], -1) * grid.h  # (sub^N, N)
    lo = np.array([b[0] for b in grid.box])
    hi = np.array([b[1] for b in grid.box])
    frac = np.zeros(grid.nx)
    for d in local:
        p = grid.nodes + d
        ok = np.all((p >= lo - 1e-15) & (p <= hi + 1e-15), axis=-1)
        ok &= np.linalg.norm(p - x0, axis=-1) <= R
        frac += ok
    return frac * (np.prod(grid.h) / len(local))


def _ball_tv(grid, values, x0, R):
    D = gradient(grid, values)
    dens = np.sum(np.abs(D), axis=-1)
    w = ball_weights(grid, x0, R)
    return np.sum(dens * w, axis=tuple(range(-grid.dim, 0)))


def bv_trace(u: ScalarField, x0, R: float, field_: CoefficientField) -> BVTrace:
    """Discrete total variation over ``B(x0, R)`` and the bound
    ``sqrt(N) exp((N-1) int_0^t alpha) TV(u(t0), B(x0, R + t sup))``."""
    grid = u.grid
    x0 = np.asarray(x0, dtype=float)
    N = grid.dim
    reach = R + (u.times[-1] - grid.t0) * field_.sup_bound
    for i, (lo, hi) in enumerate(grid.box):
        if x0[i] - reach < lo - 1e-12 or x0[i] + reach > hi + 1e-12:
            raise ValueError(f"ball of radius {reach:g} around {x0} escapes the box")
    u0 = u.values[0]
    tv = _ball_tv(grid, u.values, x0, R)
    bound = np.array([
        math.sqrt(N) * math.exp((N - 1) * field_.alpha_integral(grid.t0, t))
        * float(_ball_tv(grid, u0, x0, R + (t - grid.t0) * field_.sup_bound))
        for t in u.times])
    return BVTrace(u.times.copy(), np.asarray(tv), bound)


def weak_product(p: ScalarField, pi: ScalarField, field_: CoefficientField,
                 tests: Sequence[TensorBump] | None = None):
    """Pointwise product ``p * pi`` and its weak residual."""
    p.check_compatible(pi)
    prod = pi.with_values(p.values * pi.values, "conservative_pi")
    return prod, weak_residual(prod, field_, tests)
