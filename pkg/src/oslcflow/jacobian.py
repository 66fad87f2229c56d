"""Jacobian determinants of sampled maps, jacobian solutions and the divergence-free lift."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .flow import FlowMap
from .grid import ScalarField, SpaceTimeGrid, det, gradient
from .testfunctions import TensorBump, spacetime_tests, spatial_tests


def map_jacobian(grid: SpaceTimeGrid, X: np.ndarray) -> np.ndarray:
    """``det(grad X)`` at every node for a map sampled as ``X[*nx, N]``."""
    comps = np.moveaxis(np.asarray(X, dtype=float), -1, 0)
    D = gradient(grid, comps)  # (N, *nx, N): D[i, ..., j] = d X_i / d x_j
    return det(np.moveaxis(D, 0, -2))


def jacobian_det(flow: FlowMap, t: float | None = None) -> ScalarField:
    """Jacobian of the flow slice at ``t`` (all stored times when ``t`` is None)."""
    g = flow.grid
    times = g.times if t is None else np.atleast_1d(float(t))
    vals = np.stack([map_jacobian(g, flow.at(tk)) for tk in times])
    return ScalarField(g, times, vals, "jacobian_J", {"eps_used": flow.eps_used})


def jacobian_solution(p: Sequence[ScalarField], grid: SpaceTimeGrid) -> ScalarField:
    """``det(grad p_1, ..., grad p_N)`` per stored time."""
    if len(p) != grid.dim:
        raise ValueError(f"need {grid.dim} solutions, got {len(p)}")
    for q in p:
        if not q.grid.same_as(grid):
            raise ValueError("solution grid does not match")
        p[0].check_compatible(q)
    stacked = np.stack([q.values for q in p], axis=-1)  # (nt, *nx, N)
    vals = np.stack([map_jacobian(grid, stacked[k]) for k in range(len(p[0].times))])
    return ScalarField(grid, p[0].times, vals, "conservative_pi")


def _spacetime_weights(grid):
    return np.multiply.outer(grid.time_weights, grid.weights)


def spacetime_pairing(grid: SpaceTimeGrid, V: np.ndarray, tests=None) -> dict:
    """``|int int V . grad_(t,x) phi|`` per test, trapezoid in time and space.

    ``V`` has shape ``(N+1, nt, *nx)`` with the time component first.
    """
    tests = spacetime_tests(grid) if tests is None else tests
    W = _spacetime_weights(grid)
    coords = (grid.times,) + grid.axes
    out = {}
    for phi in tests:
        _, grads = phi.on_tensor_grid(coords)
        acc = sum(np.sum(V[k] * grads[k] * W) for k in range(len(grads)))
        out[phi.id] = abs(float(acc))
    return out


@dataclass(frozen=True)
class LiftResult:
    V: np.ndarray
    residual: float
    residuals: dict


def divergence_free_lift(H: Sequence[ScalarField], tests=None) -> LiftResult:
    """Space-time field ``V_k = (-1)^k det(dH_i/dy_j, j != k)`` with ``y = (t, x)``.

    ``H`` holds N fields sampled at every stored time. The residual is the
    largest weak divergence over the space-time test family.
    """
    grid = H[0].grid
    N = grid.dim
    if len(H) != N:
        raise ValueError(f"need {N} fields, got {len(H)}")
    for q in H:
        H[0].check_compatible(q)
    if len(H[0].times) != grid.nt:
        raise ValueError("the lift needs every stored time")
    cols = []
    for q in H:
        dt_ = np.gradient(q.values, grid.dt, axis=0, edge_order=2)
        dx = gradient(grid, q.values)
        cols.append(np.concatenate([dt_[..., None], dx], axis=-1))
    M = np.stack(cols, axis=-2)  # (nt, *nx, N, N+1): rows i, columns j over (t, x)
    V = np.stack([(-1) ** k * det(np.delete(M, k, axis=-1)) for k in range(N + 1)])
    res = spacetime_pairing(grid, V, tests)
    return LiftResult(V, max(res.values()), res)


@dataclass(frozen=True)
class WeakLimitReport:
    traces: np.ndarray
    limits: np.ndarray
    deviations: np.ndarray
    ratios: np.ndarray
    test_ids: list

    @property
    def last_deviation(self) -> float:
        return float(self.deviations[-1])


def weak_jacobian_limit_check(grid: SpaceTimeGrid, u_seq: Sequence[np.ndarray],
                              psi_seq: Sequence[Callable], psi_limit: Callable,
                              u_limit: np.ndarray, tests: Sequence[TensorBump] | None = None
                              ) -> WeakLimitReport:
    """Traces ``n -> int psi_n(u^n) det(grad u^n) phi`` against the limit functional.

    Maps are node samples of shape ``(*nx, N)``. ``deviations[n]`` is the
    largest gap over the tests; ``ratios`` are successive deviation ratios.
    """
    if len(u_seq) != len(psi_seq):
        raise ValueError("u_seq and psi_seq differ in length")
    tests = spatial_tests(grid.box) if tests is None else tests
    phis = np.stack([t(grid.nodes) for t in tests])

    def functional(u, psi):
        dens = psi(u) * map_jacobian(grid, u)
        return grid.integrate(dens[None] * phis)

    traces = np.stack([functional(u, p) for u, p in zip(u_seq, psi_seq)])
    limits = functional(u_limit, psi_limit)
    dev = np.max(np.abs(traces - limits), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dev[:-1] > 0, dev[1:] / dev[:-1], 0.0)
    return WeakLimitReport(traces, limits, dev, ratios, [t.id for t in tests])
