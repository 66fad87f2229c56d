"""Coefficient fields, mollification and OSLC diagnostics."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oslcflow import (CoefficientField, FieldError, Interface, PairSampler, constant_field,
                      estimate_oslc, evaluate, field_from_json, grid_field, jump_direction_check,
                      linear_field, mollify, oscillatory_field, piecewise_field, rotation_field,
                      sgn_field, tangential_jump_field, translation_bound, zero_field)
from oslcflow.fields import mollifier_rule, oslc_ratio, read_grid_csv, write_grid_csv

BOX2 = ((-2.0, 2.0), (-2.0, 2.0))
H = 4.0 / 128

coord = st.floats(-2.0, 2.0, allow_nan=False)
point2 = st.tuples(coord, coord).map(np.array)
width = st.floats(0.005, 0.5)


def shipped_fields():
    return [sgn_field(), zero_field(), constant_field([0.5, -0.5]), rotation_field(),
            linear_field([[-1.0, 0.0], [0.0, -1.0]], box=BOX2),
            oscillatory_field(sgn_field(), 4.0), mollify(sgn_field(), 0.1)]


# evaluate


def test_sgn_field_value_off_interface(sgn):
    assert np.array_equal(sgn(0.0, np.array([0.5, 0.0])), [-1.0, 0.0])


def test_sgn_field_uses_zero_on_interface(sgn):
    assert np.array_equal(sgn(0.3, np.array([0.0, 0.7])), [0.0, 0.0])


def test_zero_field_vanishes():
    assert np.array_equal(zero_field()(1.0, np.array([[0.3, -1.2], [5.0, 2.0]])), np.zeros((2, 2)))


def test_grid_ramp_interpolates_between_nodes():
    xs = np.linspace(0.0, 1.0, 11)
    f = grid_field(((0.0, 1.0),), xs[:, None], alpha=1.0)
    assert f(0.0, np.array([0.25]))[0] == pytest.approx(0.25, abs=1e-15)


@given(st.integers(0, 2**31 - 1))
def test_grid_field_exact_at_nodes(seed):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(5, 4, 2))
    box = ((-1.0, 1.0), (0.0, 3.0))
    f = grid_field(box, vals, alpha=0.0)
    nodes = np.stack(np.meshgrid(np.linspace(-1, 1, 5), np.linspace(0, 3, 4), indexing="ij"), -1)
    assert np.allclose(f(0.0, nodes), vals, atol=1e-14)


def test_grid_field_detects_varying_axes():
    vals = np.zeros((5, 6, 2))
    vals[..., 0] = np.linspace(-1, 1, 5)[:, None]
    assert grid_field(BOX2, vals, 0.0).axes == (0,)


def test_grid_field_clamps_outside_domain():
    f = grid_field(((0.0, 1.0),), np.linspace(0.0, 1.0, 11)[:, None], alpha=1.0)
    assert f(0.0, np.array([3.0]))[0] == pytest.approx(1.0)


def test_non_finite_velocity_raises():
    bad = CoefficientField("closed_form", 1, lambda t, x: np.full(np.shape(x), np.nan), 1.0)
    with pytest.raises(FieldError):
        evaluate(bad, 0.0, np.array([0.1]))


def test_dimension_mismatch_raises(sgn):
    with pytest.raises(FieldError):
        evaluate(sgn, 0.0, np.array([0.1, 0.2, 0.3]))


def test_unknown_kind_rejected():
    with pytest.raises(FieldError):
        CoefficientField("spline", 2, lambda t, x: x, 1.0)


@pytest.mark.parametrize("f", shipped_fields(), ids=lambda f: f.name)
@given(p=point2, t=st.floats(0.0, 1.0))
def test_values_within_sup_bound(f, p, t):
    assert np.linalg.norm(f(t, p)) <= f.sup_bound * (1 + 1e-12)


# mollify


@given(c=st.tuples(st.floats(-3, 3), st.floats(-3, 3)), eps=width, p=point2)
def test_mollify_keeps_constants(c, eps, p):
    m = mollify(constant_field(c), eps)
    assert np.allclose(m(0.0, p), c, atol=1e-14)


def test_mollifier_rule_has_unit_mass_and_symmetry():
    s, w = mollifier_rule()
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(s, -s[::-1]) and np.array_equal(w, w[::-1])


def test_mollified_1d_sgn_is_a_clipped_ramp():
    f = mollify(sgn_field(dim=1), 0.1)
    xs = np.linspace(-0.3, 0.3, 601)
    v = f(0.0, xs[:, None])[:, 0]
    assert np.all(v[xs >= 0.1] == -1.0)
    assert np.all(v[xs <= -0.1] == 1.0)
    assert np.all(np.diff(v) <= 0.0)
    assert np.allclose(v, -v[::-1], atol=1e-15)


def test_mollify_rejects_nonpositive_width(sgn):
    with pytest.raises(ValueError):
        mollify(sgn, 0.0)


def test_mollify_keeps_sup_bound_and_modulus():
    f = sgn_field(alpha=0.5)
    m = mollify(f, 0.2)
    assert m.sup_bound == f.sup_bound and m.oslc_modulus(0.3) == 0.5


def test_mollified_sgn_oslc_is_zero():
    rep = estimate_oslc(mollify(sgn_field(), 0.05), 0.0, PairSampler(BOX2, H))
    assert rep.alpha_hat[0] <= 1e-12 and not rep.violated


@pytest.mark.parametrize("f", [sgn_field(), oscillatory_field(sgn_field(), 3.0), rotation_field(),
                               linear_field([[0.5, 1.0], [0.0, -1.0]], box=BOX2)],
                         ids=lambda f: f.name)
@given(eps=width)
def test_mollification_preserves_oslc(f, eps):
    sampler = PairSampler(BOX2, H, n_random=256, n_anchor=8)
    a0 = estimate_oslc(f, 0.0, sampler).alpha_hat[0]
    a1 = estimate_oslc(mollify(f, eps), 0.0, sampler).alpha_hat[0]
    assert a1 <= a0 + 1e-9


def test_mollification_converges_in_l1_at_first_order():
    # L1 error of the mollified sgn over [-2, 2]: the ramp region has width 2 eps
    xs = np.linspace(-2.0, 2.0, 40001)
    w = np.full(xs.size, xs[1] - xs[0])
    w[[0, -1]] *= 0.5
    f = sgn_field(dim=1)
    errs = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        d = np.abs(mollify(f, eps)(0.0, xs[:, None]) - f(0.0, xs[:, None]))[:, 0]
        errs.append(float(np.sum(d * w)) / eps)
    # error / eps is the same constant for every eps (scale invariance of the ramp)
    assert np.ptp(errs) <= 1e-3 * max(errs)
    assert max(errs) <= 1.0


# OSLC estimation


def test_sgn_oslc_estimate(sgn):
    rep = estimate_oslc(sgn, [0.0, 0.5], PairSampler(BOX2, H))
    assert np.all(rep.alpha_hat <= 1e-12) and not rep.violated
    assert rep.pairs_sampled > 1024


def test_linear_2x_ratio_is_exactly_two():
    f = linear_field([[2.0]], box=((-1.0, 1.0),))
    x, y = PairSampler(((-1.0, 1.0),), 0.01).pairs(f)
    assert np.allclose(oslc_ratio(f, 0.0, x, y), 2.0, rtol=0, atol=1e-12)
    rep = estimate_oslc(f, 0.0, PairSampler(((-1.0, 1.0),), 0.01))
    assert rep.alpha_hat[0] == pytest.approx(2.0, abs=1e-12) and not rep.violated


@pytest.mark.parametrize("delta", [0.1, 1e-3, 1e-6])
def test_expansive_straddling_ratio_is_one_over_delta(delta):
    f = sgn_field(sign=+1.0)
    r = oslc_ratio(f, 0.0, np.array([-delta, 0.0]), np.array([delta, 0.0]))
    assert r == pytest.approx(1.0 / delta, rel=1e-12)


@pytest.mark.parametrize("claim", [0.0, 10.0, 1e3, 1e6])
def test_expansive_field_violates_any_claim(claim):
    # straddling pairs at separation h/4 see ratios up to 8/h
    h = min(H, 1.0 / max(claim, 1.0))
    rep = estimate_oslc(sgn_field(sign=+1.0, alpha=claim), 0.0, PairSampler(BOX2, h))
    assert rep.violated and rep.worst_ratio > claim
    t, x, y = rep.worst_pair
    assert oslc_ratio(sgn_field(sign=+1.0), t, x, y) == pytest.approx(rep.worst_ratio)


@pytest.mark.parametrize("f", shipped_fields(), ids=lambda f: f.name)
@given(x=point2, y=point2)
def test_oslc_ratio_is_symmetric(f, x, y):
    if np.allclose(x, y):
        return
    assert oslc_ratio(f, 0.0, x, y) == oslc_ratio(f, 0.0, y, x)


def test_differentiable_field_reports_matrix_bound():
    rep = estimate_oslc(linear_field([[-1.0, 3.0], [0.0, -1.0]], box=BOX2), 0.0, PairSampler(BOX2, H))
    # largest eigenvalue of the symmetric part [[-1, 1.5], [1.5, -1]] is 0.5
    assert rep.alpha_matrix[0] == pytest.approx(0.5, abs=1e-6)


def test_empty_sampler_rejected():
    with pytest.raises(ValueError):
        estimate_oslc(zero_field(), 0.0, PairSampler(BOX2, H, n_random=0, interfaces=()))


def test_sampler_is_reproducible(sgn):
    a = PairSampler(BOX2, H, seed=3).pairs(sgn)
    b = PairSampler(BOX2, H, seed=3).pairs(sgn)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


# translation bound


def test_translation_bound_sgn_1d_is_tight():
    lhs, rhs = translation_bound(sgn_field(dim=1), 0.0, (-1.0, 1.0), (-0.5, 0.5), 0.1)
    assert rhs == pytest.approx(0.02, rel=1e-12)
    assert lhs == pytest.approx(0.02, abs=1e-4)


def test_translation_bound_constant_field():
    lhs, rhs = translation_bound(constant_field([1.0]), 0.0, (-1.0, 1.0), (-0.5, 0.5), 0.1)
    assert lhs == 0.0 and rhs > 0.0


def test_translation_bound_identity_field():
    f = linear_field([[1.0]], box=((-1.0, 1.0),))
    lhs, rhs = translation_bound(f, 0.0, (-1.0, 1.0), (-0.5, 0.5), 0.1)
    assert lhs == pytest.approx(0.01, rel=1e-9)
    assert rhs == pytest.approx(0.06, rel=1e-12)


def test_translation_bound_requires_room():
    with pytest.raises(ValueError):
        translation_bound(sgn_field(dim=1), 0.0, (-1.0, 1.0), (-0.5, 0.95), 0.1)


@pytest.mark.parametrize("f", [sgn_field(), rotation_field(), oscillatory_field(sgn_field(), 2.0)],
                         ids=lambda f: f.name)
@given(r=st.floats(0.05, 0.3), angle=st.floats(0.0, 2 * math.pi))
def test_translation_bound_holds(f, r, angle):
    # shifts are kept well above the quadrature spacing (3/200) so jumps are resolved
    h = (r * math.cos(angle), r * math.sin(angle))
    lhs, rhs = translation_bound(f, 0.0, BOX2, ((-1.5, 1.5), (-1.5, 1.5)), h, n_per_axis=201)
    assert lhs <= rhs * 1.05 + 1e-15


# jump direction


def test_sgn_jump_is_compressive(sgn):
    rep = jump_direction_check(sgn, [0.0, 0.4], 0.0)
    assert np.array_equal(rep.normal, [1.0, 0.0])
    assert np.array_equal(rep.jump, [-2.0, 0.0])
    assert rep.lam == 2.0 and rep.colinearity_error <= 1e-12 and rep.consistent


def test_spurious_interface_has_no_jump():
    c = lambda t, x: np.broadcast_to([0.3, 0.1], np.shape(x))
    f = piecewise_field(Interface.plane([1.0, 1.0]), c, c, 2, 1.0)
    rep = jump_direction_check(f, [0.5, -0.5], 0.0)
    assert rep.lam == 0.0 and np.all(rep.jump == 0.0)


def test_tangential_jump_is_flagged():
    f = tangential_jump_field()
    rep = jump_direction_check(f, [0.0, 0.0], 0.0)
    assert rep.colinearity_error == pytest.approx(2.0) and not rep.consistent
    delta = 1e-4
    x, y = np.array([-delta, 0.0]), np.array([delta, delta])
    assert oslc_ratio(f, 0.0, x, y) == pytest.approx(2.0 / (5.0 * delta), rel=1e-9)


def test_jump_check_needs_interface_point(sgn):
    with pytest.raises(ValueError):
        jump_direction_check(sgn, [0.2, 0.0], 0.0)


@given(x2=coord, t=st.floats(0.0, 1.0))
def test_oslc_fields_have_compressive_jumps(x2, t):
    f = sgn_field()
    assert not estimate_oslc(f, t, PairSampler(BOX2, H, n_random=64, n_anchor=4)).violated
    rep = jump_direction_check(f, [0.0, x2], t)
    assert rep.lam >= -1e-6 and rep.colinearity_error <= 1e-6


# JSON and CSV definitions


def test_closed_form_from_json():
    f = field_from_json({"kind": "closed_form", "dim": 2, "expr": ["-x1", "sin(t) * x2"],
                         "sup_bound": 3.0, "alpha": 1.0})
    assert not f.autonomous
    assert np.allclose(f(0.5, np.array([1.0, 2.0])), [-1.0, 2.0 * math.sin(0.5)])


def test_piecewise_from_json_matches_sgn_field(sgn):
    f = field_from_json(json.dumps({
        "kind": "piecewise_interface", "dim": 2, "sup_bound": 1.0, "alpha": 0.0,
        "pieces": {"interface": {"normal": [1, 0]}, "plus": ["-1", "0"], "minus": ["1", "0"]}}))
    pts = np.random.default_rng(1).uniform(-2, 2, size=(100, 2))
    pts[:5, 0] = 0.0
    assert np.array_equal(f(0.0, pts), sgn(0.0, pts))


def test_piecewise_constant_modulus_from_json():
    f = field_from_json({"kind": "closed_form", "dim": 1, "expr": ["0"], "sup_bound": 0.0,
                         "alpha": [[0.0, 1.0], [0.5, 3.0]]})
    assert f.oslc_modulus(0.25) == 1.0 and f.oslc_modulus(0.75) == 3.0
    assert f.alpha_integral(0.0, 1.0) == pytest.approx(2.0, abs=1e-9)


def test_grid_csv_round_trip(tmp_path):
    vals = np.random.default_rng(2).normal(size=(4, 3, 2))
    box = ((-1.0, 1.0), (0.0, 2.0))
    write_grid_csv(tmp_path / "g.csv", box, vals)
    box2, vals2 = read_grid_csv(tmp_path / "g.csv")
    assert box2 == box and np.array_equal(vals2, vals)
    f = field_from_json({"kind": "grid_sampled", "dim": 2, "grid": "g.csv", "alpha": 0.0}, tmp_path)
    assert f.kind == "grid_sampled" and np.allclose(f(0.0, np.array([-1.0, 0.0])), vals[0, 0])


@pytest.mark.parametrize("expr", ["__import__('os')", "x1.real", "open('f')", "y"])
def test_unsafe_expressions_rejected(expr):
    with pytest.raises(FieldError):
        field_from_json({"kind": "closed_form", "dim": 1, "expr": [expr], "sup_bound": 1.0,
                         "alpha": 0.0})


def test_missing_modulus_rejected():
    with pytest.raises(FieldError):
        field_from_json({"kind": "closed_form", "dim": 1, "expr": ["x1"], "sup_bound": 1.0})
