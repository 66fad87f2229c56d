"""Regularized ODE flows and their mollification limit.

For a mollified field ``a_eps`` the classical flow is integrated from every
grid node with fixed-step RK4. Driving ``eps`` down a schedule and stopping
when consecutive maps agree gives the transport flow ``X^T(t, x) = X(T, t, x)``.

Samples are keyed by time-index pairs ``(s_idx, t_idx)`` and hold
``X(s, t, x)`` for all nodes ``x``: the position at time ``s`` of the
trajectory through ``x`` at time ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fields import CoefficientField, _raw, mollify
from .grid import SpaceTimeGrid, interpolate

DIRECTIONS = ("backward_transport", "forward", "general", "backtrace")


class ResolutionError(RuntimeError):
    """Integration step would fall below the step floor for the requested eps."""


class ConvergenceFailure(RuntimeError):
    """The eps schedule was exhausted before consecutive flows agreed."""

    def __init__(self, message, distances):
        super().__init__(message)
        self.distances = list(distances)


class SupportError(ValueError):
    """Data or trajectories would need values from outside the computational box."""


@dataclass(frozen=True)
class FlowMap:
    """Sampled flow ``X(s, t, x)`` on the nodes of ``grid``.

    ``direction`` tells which pairs are stored:

    * ``backward_transport``: ``(T, t)`` for every stored ``t``, i.e. ``X^T(t, .)``
    * ``forward``: ``(s, t0)`` for every ``s``
    * ``general``: every ``(s, t)`` with ``s >= t``
    * ``backtrace``: ``(t0, t)`` for every ``t``, traced backward in time
    """

    grid: SpaceTimeGrid
    direction: str
    samples: dict
    eps_used: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown flow direction {self.direction!r}")

    def key(self, s: float, t: float) -> tuple[int, int]:
        k = (self.grid.time_index(s), self.grid.time_index(t))
        if k not in self.samples:
            raise ValueError(f"pair (s={s}, t={t}) is not stored in this {self.direction} flow")
        return k

    def pair(self, s: float, t: float) -> np.ndarray:
        """Node positions ``X(s, t, x)``, shape ``(*nx, N)``."""
        return self.samples[self.key(s, t)]

    def has_pair(self, s: float, t: float) -> bool:
        try:
            self.key(s, t)
        except ValueError:
            return False
        return True

    def at(self, t: float) -> np.ndarray:
        """The natural one-parameter slice at time ``t``.

        ``X^T(t)`` for backward_transport, ``X(t, t0)`` for forward and
        ``X(t0, t)`` for backtrace flows.
        """
        g = self.grid
        if self.direction == "backward_transport":
            return self.pair(g.T, t)
        if self.direction == "forward":
            return self.pair(t, g.t0)
        if self.direction == "backtrace":
            return self.pair(g.t0, t)
        raise ValueError("a general flow has no single-time slice; use pair(s, t)")

    def evaluate(self, s: float, t: float, points) -> np.ndarray:
        """Multilinear interpolation of ``X(s, t, .)`` at arbitrary points."""
        return interpolate(self.grid, self.pair(s, t), points)

    def lip_estimate(self, s: float, t: float) -> float:
        """Largest difference quotient over neighboring nodes."""
        cache = self.meta.setdefault("_lip", {})
        k = self.key(s, t)
        if k not in cache:
            cache[k] = lipschitz_constant(self.grid, self.samples[k])
        return cache[k]


def lipschitz_constant(grid: SpaceTimeGrid, X: np.ndarray) -> float:
    best = 0.0
    for i, hi in enumerate(grid.h):
        d = np.diff(X, axis=i)
        best = max(best, float(np.max(np.linalg.norm(d, axis=-1))) / hi)
    return best


# ---------------------------------------------------------------------------
# integration


def _rk4(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, x + (0.5 * h) * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def substeps(field_: CoefficientField, eps: float, grid: SpaceTimeGrid, min_step=None) -> int:
    """RK4 substeps per time sample so each step moves at most ``eps / 4``."""
    dt = grid.dt
    step = dt if field_.sup_bound == 0 else min(dt, eps / (4.0 * field_.sup_bound))
    floor = 1e-7 * (grid.T - grid.t0) if min_step is None else min_step
    if step < floor:
        raise ResolutionError(
            f"eps={eps:g} needs step {step:.3g} below the floor {floor:.3g}")
    return max(1, math.ceil(dt / step - 1e-9))


def _velocity(field_):
    def f(t, x):
        v = _raw(field_, t, x)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite velocity from field {field_.name}")
        return v
    return f


def _march_autonomous(f, x0, grid, sub, sign):
    """Snapshots of a single march: ``out[j] = Phi_{sign * j * dt}(x0)``."""
    out = [x0]
    x = x0
    h = sign * grid.dt / sub
    for _ in range(grid.nt - 1):
        for _ in range(sub):
            x = _rk4(f, 0.0, x, h)
        out.append(x)
    return out


def _march_batched(f, x0, grid, sub, forward, record):
    """Trajectories started at every stored time, advanced on one global clock.

    Forward: trajectory ``k`` starts at ``t_k``; ``record(j, ks, states)`` is
    called at each time ``t_j`` with the active start indices.
    """
    nt, times = grid.nt, grid.times
    states = np.empty((nt,) + x0.shape)
    seq = range(nt) if forward else range(nt - 1, -1, -1)
    for j in seq:
        states[j] = x0
        ks = np.arange(0, j + 1) if forward else np.arange(j, nt)
        record(j, ks, states[ks])
        nxt = j + 1 if forward else j - 1
        if not 0 <= nxt < nt:
            break
        h = (times[nxt] - times[j]) / sub
        x = states[ks]
        t = times[j]
        for m in range(sub):
            x = _rk4(f, t + m * h, x, h)
        states[ks] = x


def _flow_samples(field_: CoefficientField, grid: SpaceTimeGrid, direction: str, sub: int) -> dict:
    f = _velocity(field_)
    x0 = grid.nodes
    nt = grid.nt
    last = nt - 1
    samples: dict = {}
    if field_.autonomous:
        if direction == "backtrace":
            snaps = _march_autonomous(f, x0, grid, sub, -1.0)
            return {(0, k): snaps[k] for k in range(nt)}
        snaps = _march_autonomous(f, x0, grid, sub, 1.0)
        if direction == "backward_transport":
            return {(last, k): snaps[last - k] for k in range(nt)}
        if direction == "forward":
            return {(k, 0): snaps[k] for k in range(nt)}
        return {(s, t): snaps[s - t] for s in range(nt) for t in range(s + 1)}

    if direction == "backtrace":
        def rec(j, ks, st):
            if j == 0:
                for k, v in zip(ks, st):
                    samples[(0, int(k))] = v.copy()
        _march_batched(f, x0, grid, sub, False, rec)
        return samples
    if direction == "forward":
        x = x0
        times = grid.times
        samples[(0, 0)] = x0
        for j in range(nt - 1):
            h = (times[j + 1] - times[j]) / sub
            for m in range(sub):
                x = _rk4(f, times[j] + m * h, x, h)
            samples[(j + 1, 0)] = x
        return samples

    def rec(j, ks, st):
        if direction == "general" or j == last:
            for k, v in zip(ks, st):
                samples[(j, int(k))] = v.copy()
    _march_batched(f, x0, grid, sub, True, rec)
    return samples


def integrate_regularized_flow(field_: CoefficientField, eps: float, grid: SpaceTimeGrid,
                               direction: str = "backward_transport", regularize: bool = True,
                               min_step=None) -> FlowMap:
    """Classical RK4 flow of ``mollify(field, eps)`` from every grid node.

    With ``regularize=False`` the field is integrated as given (it must
    already be smooth at scale ``eps``); ``eps`` then only sets the step size.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown flow direction {direction!r}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    grid = grid.ensure_padding(field_.sup_bound)
    sub = substeps(field_, eps, grid, min_step)
    a_eps = mollify(field_, eps) if regularize else field_
    samples = _flow_samples(a_eps, grid, direction, sub)
    diag = [k for k in samples if k[0] == k[1]]
    for k in diag:
        samples[k] = grid.nodes.copy()
    return FlowMap(grid, direction, samples, float(eps), {"substeps": sub, "field": field_.name})


def default_schedule(grid: SpaceTimeGrid, levels: int = 7, eps0: float | None = None) -> list[float]:
    """``eps_k = eps0 * 2^-k`` with ``eps0 = 2h`` by default."""
    e0 = 2.0 * grid.hmax if eps0 is None else float(eps0)
    return [e0 * 2.0**-k for k in range(levels)]


def flow_distance(a: FlowMap, b: FlowMap) -> float:
    """Sup over stored pairs and nodes of ``|X_a - X_b|``."""
    seen = set()
    best = 0.0
    for k, va in a.samples.items():
        vb = b.samples[k]
        ident = (id(va), id(vb))
        if ident in seen:
            continue
        seen.add(ident)
        best = max(best, float(np.max(np.linalg.norm(va - vb, axis=-1))))
    return best


def _converge(field_, grid, direction, schedule, tol, regularize=True):
    schedule = [float(e) for e in schedule]
    if any(e <= 0 for e in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("eps schedule must be positive and strictly decreasing")
    if not tol > 0:
        raise ValueError("tol must be positive")
    prev = None
    dists = []
    for eps in schedule:
        cur = integrate_regularized_flow(field_, eps, grid, direction, regularize)
        if prev is not None:
            d = flow_distance(prev, cur)
            dists.append(d)
            if d <= tol:
                scale = max(1.0, max(abs(v) for lo_hi in grid.padded_box for v in lo_hi))
                used = schedule[0] if d <= 1e-13 * scale else eps
                return replace(cur, eps_used=used,
                               meta={**cur.meta, "cauchy": dists, "schedule": schedule[: len(dists) + 1]})
        prev = cur
    raise ConvergenceFailure(
        f"eps schedule exhausted at eps={schedule[-1]:g}; Cauchy distances {dists}", dists)


def build_transport_flow(field_: CoefficientField, grid: SpaceTimeGrid, schedule=None,
                         tol: float | None = None, direction: str = "backward_transport",
                         j_tol: float | None = None) -> FlowMap:
    """Mollification limit of regularized flows.

    Runs the schedule (default ``2h, h, ..., h/32``) until two consecutive
    maps are within ``tol`` (default ``3h``) in sup norm. The returned map is
    the last one computed; ``eps_used`` is its eps, or the first eps when the
    first two iterates already coincide. For backward_transport flows
    ``X^T(T, x) = x`` holds exactly and the jacobian must be ``>= -j_tol``
    (default ``10h``).
    """
    h = grid.hmax
    schedule = default_schedule(grid) if schedule is None else schedule
    tol = 3.0 * h if tol is None else tol
    flow = _converge(field_, grid, direction, schedule, tol)
    if direction == "backward_transport":
        from .jacobian import jacobian_det

        j_tol = 10.0 * h if j_tol is None else j_tol
        jmin = float(jacobian_det(flow).values.min())
        flow.meta["jacobian_min"] = jmin
        if jmin < -j_tol:
            raise ConvergenceFailure(
                f"converged flow has jacobian {jmin:.3g} below -{j_tol:.3g}", flow.meta["cauchy"])
    return flow


def trace_back(field_: CoefficientField, grid: SpaceTimeGrid, schedule=None,
               tol: float | None = None, check_support: bool = True) -> FlowMap:
    """Backward characteristics ``X(t0, t, x)`` for every stored ``t``, eps-converged.

    Raises :class:`SupportError` if a trace leaves the padded box.
    """
    h = grid.hmax
    schedule = default_schedule(grid) if schedule is None else schedule
    tol = 3.0 * h if tol is None else tol
    flow = _converge(field_, grid, "backtrace", schedule, tol)
    if check_support:
        for (s, t), X in flow.samples.items():
            if not np.all(flow.grid.inside(X, padded=True, tol=1e-9)):
                raise SupportError(
                    f"backward trace from t={flow.grid.times[t]:g} leaves the padded box")
    return flow


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class FlowDiagnostics:
    pairs: list
    lipschitz: np.ndarray
    lipschitz_bound: np.ndarray
    speed_excess: float
    identity_residual: float

    def passes(self, h: float, dt: float, tol: float | None = None) -> bool:
        tol = 10.0 * max(h, dt) if tol is None else tol
        return bool(np.all(self.lipschitz <= self.lipschitz_bound * (1.0 + tol))
                    and self.speed_excess <= dt * 10.0 and self.identity_residual == 0.0)


def flow_diagnostics(flow: FlowMap, field_: CoefficientField) -> FlowDiagnostics:
    """Lipschitz constants versus ``exp(int alpha)``, finite speed and final identity."""
    if len(flow.samples) < 2:
        raise ValueError("flow diagnostics need at least two stored pairs")
    g = flow.grid
    times = g.times
    pairs = sorted(flow.samples)
    lip, bound = [], []
    speed = -np.inf
    ident = 0.0
    for s, t in pairs:
        X = flow.samples[(s, t)]
        lip.append(flow.lip_estimate(times[s], times[t]))
        lo, hi = sorted((times[s], times[t]))
        bound.append(math.exp(field_.alpha_integral(lo, hi)))
        disp = float(np.max(np.linalg.norm(X - g.nodes, axis=-1)))
        speed = max(speed, disp - field_.sup_bound * abs(times[s] - times[t]))
        if s == t:
            ident = max(ident, float(np.max(np.abs(X - g.nodes))))
    return FlowDiagnostics(pairs, np.array(lip), np.array(bound), float(speed), ident)


def check_semigroup(flow, triples, points=None) -> float:
    """Max of ``|X(s, t, X(t, tau, x)) - X(s, tau, x)|`` over triples ``(tau, t, s)``.

    ``flow`` is a :class:`FlowMap` storing all needed pairs (the inner value is
    interpolated multilinearly; nodes whose inner image leaves the box are
    skipped) or an exact callable ``flow(s, t, x)`` evaluated at ``points``.
    """
    best = 0.0
    for tau, t, s in triples:
        if not tau <= t <= s:
            raise ValueError(f"triple ({tau}, {t}, {s}) is not ordered tau <= t <= s")
        if isinstance(flow, FlowMap):
            inner = flow.pair(t, tau)
            direct = flow.pair(s, tau)
            outer_vals = flow.pair(s, t)
            ok = flow.grid.inside(inner)
            comp = interpolate(flow.grid, outer_vals, inner[ok])
            err = np.linalg.norm(comp - direct[ok], axis=-1)
        else:
            if points is None:
                raise ValueError("points are required for a callable flow")
            pts = np.asarray(points, dtype=float)
            comp = flow(s, t, flow(t, tau, pts))
            err = np.linalg.norm(comp - flow(s, tau, pts), axis=-1)
        if err.size:
            best = max(best, float(err.max()))
    return best
