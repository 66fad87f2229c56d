"""Jacobian determinants, jacobian solutions and the divergence-free lift."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oslcflow import (FlowMap, ScalarField, SgnExampleSpec, SpaceTimeGrid, divergence_free_lift,
                      jacobian_det, jacobian_solution, sgn_flow, sgn_general_nonconservative,
                      sgn_jacobian, weak_jacobian_limit_check)
from oslcflow.jacobian import map_jacobian
from oslcflow.shapes import Affine
from oslcflow.testfunctions import spatial_tests


def oracle_flow(grid, lam=0.0):
    samples = {(grid.nt - 1, k): sgn_flow(lam, grid.T, t, grid.nodes) for k, t in enumerate(grid.times)}
    return FlowMap(grid, "backward_transport", samples, 0.0)


def band(grid, t, width):
    return np.abs(np.abs(grid.nodes[..., 0]) - (grid.T - t)) <= width + 1e-12


# jacobian_det


def test_oracle_jacobian_off_the_band():
    g = SpaceTimeGrid.square(2.0, 129, nt=5)
    J = jacobian_det(oracle_flow(g), 0.5).values[0]
    x1 = np.abs(g.nodes[..., 0])
    h = g.hmax
    assert np.all(J[x1 >= 0.5 + 2 * h] == 1.0)
    assert np.all(J[x1 <= 0.5 - 2 * h] == 0.0)


def test_identity_map_has_unit_jacobian(grid33):
    assert np.array_equal(map_jacobian(grid33, grid33.nodes), np.ones(grid33.nx))


@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2), d=st.floats(-2, 2))
def test_affine_maps_have_exact_jacobian(a, b, c, d):
    g = SpaceTimeGrid.square(1.0, 9)
    A = np.array([[a, b], [c, d]])
    J = map_jacobian(g, g.nodes @ A.T + 0.3)
    assert np.allclose(J, a * d - b * c, atol=1e-12 * (1 + np.abs(A).max() ** 2))


def test_linear_flow_jacobian_follows_trace():
    g = SpaceTimeGrid.square(1.0, 17)
    E = np.diag(np.exp(0.3 * np.array([-1.0, 2.0])))
    J = map_jacobian(g, g.nodes @ E.T)
    assert np.allclose(J, math.exp(0.3), atol=1e-12)
    assert math.exp(0.3) == pytest.approx(1.3499, abs=1e-4)


def test_jacobian_of_the_family_is_member_independent():
    g = SpaceTimeGrid.square(2.0, 65, nt=5)
    for t in g.times[:-1]:
        off = ~band(g, t, 2 * g.hmax)
        ref = jacobian_det(oracle_flow(g, 0.0), t).values[0]
        for lam in (-1.0, 1.0, 3.0):
            J = jacobian_det(oracle_flow(g, lam), t).values[0]
            assert np.max(np.abs(J - ref)[off]) <= 1e-12


def test_jacobian_det_all_times_shape(grid33):
    J = jacobian_det(oracle_flow(grid33))
    assert J.values.shape == (grid33.nt,) + grid33.nx and J.role == "jacobian_J"
    assert np.array_equal(J.values[-1], np.ones(grid33.nx))


# jacobian_solution


def test_flow_components_give_the_flow_jacobian():
    g = SpaceTimeGrid.square(2.0, 65, nt=11)
    p = [ScalarField.sample(g, lambda t, x, i=i: sgn_flow(0.0, g.T, t, x)[..., i],
                            role="nonconservative_u") for i in range(2)]
    pi = jacobian_solution(p, g)
    for k, t in enumerate(g.times):
        off = ~band(g, t, 2 * g.hmax)
        assert np.allclose(pi.values[k][off], sgn_jacobian(t, g.nodes, g.T)[off], atol=1e-12)


def test_coordinate_solutions_give_one(grid33):
    p = [ScalarField.sample(grid33, lambda t, x, i=i: x[..., i]) for i in range(2)]
    assert np.allclose(jacobian_solution(p, grid33).values, 1.0, atol=1e-14)


def test_one_dimensional_jacobian_solution():
    g = SpaceTimeGrid(box=((-2.0, 2.0),), nx=(257,), nt=11)
    p = ScalarField.sample(g, lambda t, x: np.clip(np.abs(x[..., 0]) - (g.T - t), 0, None)
                           * np.sign(x[..., 0]))
    pi = jacobian_solution([p], g)
    for k, t in enumerate(g.times):
        off = ~band(g, t, 2 * g.hmax)
        ind = (np.abs(g.nodes[..., 0]) >= g.T - t).astype(float)
        assert np.allclose(pi.values[k][off], ind[off], atol=1e-12)


def test_jacobian_solution_checks_inputs(grid33):
    p = ScalarField.sample(grid33, lambda t, x: x[..., 0])
    with pytest.raises(ValueError):
        jacobian_solution([p], grid33)
    other = SpaceTimeGrid.square(2.0, 17, nt=21)
    q = ScalarField.sample(other, lambda t, x: x[..., 1])
    with pytest.raises(ValueError):
        jacobian_solution([p, q], grid33)


# divergence-free lift


def smooth_H(g):
    return [ScalarField.sample(g, lambda t, x: np.sin(x[..., 0] + t) * np.cos(0.5 * x[..., 1])),
            ScalarField.sample(g, lambda t, x: np.exp(-t) * x[..., 1] + 0.2 * x[..., 0] ** 2)]


def sgn_H(g):
    spec = SgnExampleSpec(phi=Affine((1.0, 0.0)))
    return [ScalarField.sample(g, lambda t, x: sgn_general_nonconservative(spec, t, x)),
            ScalarField.sample(g, lambda t, x: x[..., 1])]


def test_coordinate_lift_is_time_direction(grid33):
    H = [ScalarField.sample(grid33, lambda t, x, i=i: x[..., i]) for i in range(2)]
    lift = divergence_free_lift(H)
    assert np.allclose(lift.V[0], 1.0, atol=1e-14)
    assert np.allclose(lift.V[1:], 0.0, atol=1e-14)
    assert lift.residual <= 1e-12


def test_one_dimensional_smooth_lift():
    res = []
    for n in (33, 65):
        g = SpaceTimeGrid(box=((-2.0, 2.0),), nx=(n,), nt=n)
        H = [ScalarField.sample(g, lambda t, x: np.sin(2 * x[..., 0] - t) * np.exp(t))]
        lift = divergence_free_lift(H)
        dH = np.gradient(H[0].values, g.dt, axis=0, edge_order=2)
        assert np.allclose(lift.V[1], -dH)
        res.append(lift.residual)
    assert res[1] / res[0] <= 0.3


@pytest.mark.parametrize("make,ratio", [(smooth_H, 0.3), (sgn_H, 0.6)], ids=["smooth", "sgn"])
def test_lift_residual_decays_with_h(make, ratio):
    res = []
    for n in (33, 65):
        g = SpaceTimeGrid.square(2.0, n, nt=n)
        res.append(divergence_free_lift(make(g)).residual)
    assert res[1] / res[0] <= ratio


def test_lift_components_follow_the_field():
    g = SpaceTimeGrid.square(2.0, 65, nt=65)
    V = divergence_free_lift(sgn_H(g)).V
    x1 = g.nodes[..., 0]
    for k, t in enumerate(g.times):
        off = ~band(g, t, 2 * g.hmax) & (np.abs(x1) > 2 * g.hmax)
        J = sgn_jacobian(t, g.nodes, g.T)
        assert np.allclose(V[0][k][off], J[off], atol=1e-10)
        assert np.allclose(V[1][k][off], (-np.sign(x1) * V[0][k])[off], atol=1e-10)
        assert np.allclose(V[2][k], 0.0, atol=1e-12)


# weak limits


def test_constant_sequence_has_zero_deviation(grid33):
    u = grid33.nodes * 0.9
    one = lambda y: np.ones(y.shape[:-1])
    rep = weak_jacobian_limit_check(grid33, [u, u, u], [one] * 3, one, u)
    assert np.all(rep.deviations == 0.0) and np.all(rep.ratios == 0.0)


def test_oscillating_weights_vanish_weakly():
    g = SpaceTimeGrid.square(2.0, 257)
    ns = (4, 8, 16, 32)
    tests = spatial_tests(g.box)
    rep = weak_jacobian_limit_check(g, [g.nodes] * len(ns),
                                    [lambda y, n=n: np.sin(n * y[..., 0]) for n in ns],
                                    lambda y: np.zeros(y.shape[:-1]), g.nodes, tests)
    # integration by parts: |int sin(n y1) phi| <= ||d1 phi||_L1 / n
    grad_l1 = max(float(g.integrate(np.abs(phi.grad(g.nodes)[..., 0]))) for phi in tests)
    for n, dev in zip(ns, rep.deviations):
        assert dev <= grad_l1 / n
    assert rep.deviations[-1] < rep.deviations[0]


def test_weak_limit_needs_matching_sequences(grid33):
    with pytest.raises(ValueError):
        weak_jacobian_limit_check(grid33, [grid33.nodes], [], lambda y: 1.0, grid33.nodes)
