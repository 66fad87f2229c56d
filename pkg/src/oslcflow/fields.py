"""Velocity coefficients, their mollification, and one-sided Lipschitz diagnostics.

A :class:`CoefficientField` wraps a vectorized rule ``rule(t, x) -> a`` with
``x`` of shape ``(..., N)``, together with the claimed sup bound and OSLC
modulus. Three kinds exist: ``closed_form``, ``piecewise_interface`` and
``grid_sampled``.
"""

from __future__ import annotations

import ast
import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

KINDS = ("closed_form", "piecewise_interface", "grid_sampled")

MOLLIFIER_POINTS = 9


class FieldError(ValueError):
    """Corrupt or inconsistent field definition."""


@dataclass(frozen=True)
class Interface:
    """Oriented hypersurface given by a signed-distance rule.

    ``normal(x)`` returns the unit normal pointing to the ``+`` side.
    """

    signed_distance: Callable[[np.ndarray], np.ndarray]
    normal: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    @classmethod
    def plane(cls, normal, offset=0.0, name="") -> Interface:
        nu = np.asarray(normal, dtype=float)
        nu = nu / np.linalg.norm(nu)

        def sdist(x):
            return np.asarray(x, dtype=float) @ nu - offset

        def nrm(x):
            return np.broadcast_to(nu, np.shape(x)).copy()

        return cls(sdist, nrm, name or f"plane{tuple(nu.round(6))}@{offset}")

    def project(self, x, iters=3):
        x = np.asarray(x, dtype=float)
        for _ in range(iters):
            x = x - self.signed_distance(x)[..., None] * self.normal(x)
        return x


@dataclass(frozen=True)
class CoefficientField:
    kind: str
    dim: int
    rule: Callable
    sup_bound: float
    alpha: float | Callable[[float], float] = 0.0
    interfaces: tuple[Interface, ...] = ()
    domain: tuple[tuple[float, float], ...] | None = None
    autonomous: bool = True
    axes: tuple[int, ...] | None = None
    differentiable: bool = False
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FieldError(f"unknown field kind {self.kind!r}")
        if self.dim < 1:
            raise FieldError("dim must be >= 1")
        if self.sup_bound < 0:
            raise FieldError("sup_bound must be nonnegative")

    def __call__(self, t, x):
        return evaluate(self, t, x)

    def oslc_modulus(self, t) -> float:
        return float(self.alpha(t)) if callable(self.alpha) else float(self.alpha)

    def alpha_integral(self, t0: float, t1: float) -> float:
        """Integral of the claimed modulus over ``[t0, t1]``."""
        if not callable(self.alpha):
            return float(self.alpha) * (t1 - t0)
        pts = self.meta.get("alpha_breaks")
        return float(integrate.quad(self.alpha, t0, t1, points=pts, limit=200)[0])

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim)) if self.axes is None else tuple(self.axes)


def _raw(field_: CoefficientField, t, x):
    if field_.domain is not None:
        lo = np.array([b[0] for b in field_.domain])
        hi = np.array([b[1] for b in field_.domain])
        x = np.clip(x, lo, hi)
    return np.asarray(field_.rule(t, x), dtype=float)


def evaluate(field_: CoefficientField, t, x) -> np.ndarray:
    """Velocity ``a(t, x)``; ``x`` has shape ``(..., N)``.

    Queries outside a finite domain are clamped to it. Raises
    :class:`FieldError` if the rule produces non-finite values.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != field_.dim:
        raise FieldError(f"point dimension {x.shape[-1]} != field dim {field_.dim}")
    out = np.broadcast_to(_raw(field_, t, x), x.shape)
    if not np.all(np.isfinite(out)):
        raise FieldError(f"non-finite velocity from field {field_.name or field_.kind}")
    return out


# ---------------------------------------------------------------------------
# constructors


def _piecewise_rule(interface, plus, minus):
    def rule(t, x):
        d = interface.signed_distance(x)[..., None]
        ap = plus(t, x)
        am = minus(t, x)
        return np.where(d > 0, ap, np.where(d < 0, am, 0.5 * (ap + am)))
    return rule


def piecewise_field(interface, plus, minus, dim, sup_bound, alpha=0.0, **kw) -> CoefficientField:
    """Field equal to ``plus`` on the positive side of ``interface`` and ``minus``
    on the other; on the interface the mean of both (sgn(0)=0 convention)."""
    return CoefficientField("piecewise_interface", dim, _piecewise_rule(interface, plus, minus),
                            sup_bound, alpha, interfaces=(interface,), **kw)


def zero_field(dim=2) -> CoefficientField:
    return constant_field(np.zeros(dim))


def constant_field(c) -> CoefficientField:
    c = np.atleast_1d(np.asarray(c, dtype=float))

    def rule(t, x):
        return np.broadcast_to(c, np.shape(x))

    return CoefficientField("closed_form", c.size, rule, math.hypot(*c), 0.0,
                            axes=(), differentiable=True, name=f"const{tuple(c)}")


def linear_field(A, sup_bound=None, box=None) -> CoefficientField:
    """``a(x) = A x``; the claimed sup bound is taken over ``box`` if given."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if sup_bound is None:
        if box is None:
            raise FieldError("linear_field needs sup_bound or box")
        corners = np.array(np.meshgrid(*[list(b) for b in box], indexing="ij")).reshape(len(box), -1).T
        sup_bound = float(np.max(np.linalg.norm(corners @ A.T, axis=-1)))
    alpha = float(np.linalg.eigvalsh(0.5 * (A + A.T)).max())

    def rule(t, x):
        return np.asarray(x) @ A.T

    return CoefficientField("closed_form", A.shape[0], rule, float(sup_bound), max(alpha, 0.0),
                            differentiable=True, name="linear", meta={"A": A})


def rotation_field(box=((-2, 2), (-2, 2))) -> CoefficientField:
    return replace(linear_field([[0.0, -1.0], [1.0, 0.0]], box=box), name="rotation")


def sgn_field(sign=-1.0, alpha=0.0, dim=2) -> CoefficientField:
    """``a = (sign * sgn(x1), 0, ...)``; ``sign=-1`` is the compressive example.

    ``alpha`` is the *claimed* modulus; the expansive choice ``sign=+1`` violates
    any finite claim.
    """
    e1 = np.zeros(dim)
    e1[0] = 1.0
    plus = lambda t, x: np.broadcast_to(sign * e1, np.shape(x))
    minus = lambda t, x: np.broadcast_to(-sign * e1, np.shape(x))
    iface = Interface.plane(e1, 0.0, "x1=0")
    return piecewise_field(iface, plus, minus, dim, 1.0, alpha, axes=(0,),
                           name=f"{'+' if sign > 0 else '-'}sgn(x1)")


def tangential_jump_field() -> CoefficientField:
    """``a = (0, sgn x1)``: jump tangent to the interface ``x1 = 0``."""
    e2 = np.array([0.0, 1.0])
    iface = Interface.plane([1.0, 0.0], 0.0, "x1=0")
    return piecewise_field(iface, lambda t, x: np.broadcast_to(e2, np.shape(x)),
                           lambda t, x: np.broadcast_to(-e2, np.shape(x)), 2, 1.0, 0.0,
                           axes=(0,), name="(0,sgn x1)")


def oscillatory_field(base: CoefficientField, n: float) -> CoefficientField:
    """``base + (1/n) sin(n x1) e1``: OSLC modulus ``alpha_base + 1``."""
    def rule(t, x):
        out = np.array(_raw(base, t, x), dtype=float, copy=True)
        out[..., 0] += np.sin(n * x[..., 0]) / n
        return out

    axes = None if base.axes is None else tuple(sorted(set(base.axes) | {0}))
    alpha = (lambda t: base.oslc_modulus(t) + 1.0) if callable(base.alpha) else base.alpha + 1.0
    return CoefficientField("closed_form", base.dim, rule, base.sup_bound + 1.0 / n, alpha,
                            interfaces=base.interfaces, autonomous=base.autonomous, axes=axes,
                            name=f"{base.name}+sin({n}x1)/{n}")


def grid_field(box, values, alpha, sup_bound=None, name="grid") -> CoefficientField:
    """Time-independent field given by node values, multilinear between nodes."""
    values = np.asarray(values, dtype=float)
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    dim = len(box)
    if values.ndim != dim + 1 or values.shape[-1] != dim:
        raise FieldError(f"grid values must have shape (*nx, {dim}), got {values.shape}")
    axes = [lo + (hi - lo) * (np.arange(n) / (n - 1)) for (lo, hi), n in zip(box, values.shape[:-1])]
    interp = RegularGridInterpolator(axes, values, method="linear")

    def rule(t, x):
        x = np.asarray(x, dtype=float)
        return interp(x.reshape(-1, dim)).reshape(x.shape)

    if sup_bound is None:
        sup_bound = float(np.max(np.linalg.norm(values, axis=-1)))
    # axes along which the samples actually vary; mollification integrates only these
    varying = tuple(i for i in range(dim) if np.ptp(values, axis=i).max() > 0)
    return CoefficientField("grid_sampled", dim, rule, float(sup_bound), alpha, domain=box,
                            axes=varying, name=name, meta={"values": values})


# ---------------------------------------------------------------------------
# mollification


def mollifier_rule(n=MOLLIFIER_POINTS):
    """Gauss-Legendre nodes on [-1, 1] with weights of the (1-s^2)^3 kernel, unit mass."""
    s, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s - s[::-1])
    w = 0.5 * (w + w[::-1])
    w = w * (1.0 - s * s) ** 3
    return s, w / w.sum()


def mollify(field_: CoefficientField, eps: float) -> CoefficientField:
    """Spatial convolution with the scaled bump kernel, by fixed tensor quadrature.

    Only the axes the field varies along are integrated (the kernel has unit
    mass along the others). The result is a finite positive combination of
    translates of ``field_``, so sup bound and OSLC modulus carry over exactly.
    """
    if not eps > 0:
        raise ValueError(f"mollification width must be positive, got {eps}")
    axes = field_.spatial_axes
    if not axes:
        return field_
    s, w = mollifier_rule()
    grids = np.meshgrid(*([s] * len(axes)), indexing="ij")
    wts = np.ones_like(grids[0])
    for g in np.meshgrid(*([w] * len(axes)), indexing="ij"):
        wts = wts * g
    offsets = np.zeros((wts.size, field_.dim))
    for j, ax in enumerate(axes):
        offsets[:, ax] = grids[j].ravel()
    wts = wts.ravel()
    M = wts.size
    half = (M - 1) // 2
    shift = eps * offsets

    def rule(t, x):
        x = np.asarray(x, dtype=float)
        acc = wts[half] * _raw(field_, t, x)
        for m in range(half):
            # paired +/- offsets keep odd fields exactly odd
            acc = acc + wts[m] * (_raw(field_, t, x - shift[m]) + _raw(field_, t, x + shift[m]))
        return acc

    return CoefficientField("closed_form", field_.dim, rule, field_.sup_bound, field_.alpha,
                            interfaces=field_.interfaces, domain=None,
                            autonomous=field_.autonomous, axes=field_.axes,
                            differentiable=field_.differentiable,
                            name=f"moll({field_.name},{eps:.4g})",
                            meta={**field_.meta, "eps": eps, "base": field_})


# ---------------------------------------------------------------------------
# OSLC diagnostics


@dataclass(frozen=True)
class PairSampler:
    """Pair-sampling plan: stratified random pairs plus interface-straddling pairs.

    Straddling pairs are centered on interface points at separations
    ``h, h/2, h/4``, along the normal and along oblique directions.
    """

    box: tuple[tuple[float, float], ...]
    h: float
    n_random: int = 1024
    n_anchor: int = 32
    seed: int = 0
    interfaces: tuple[Interface, ...] | None = None

    def pairs(self, field_: CoefficientField | None = None):
        rng = np.random.default_rng(self.seed)
        box = np.asarray(self.box, dtype=float)
        lo, hi = box[:, 0], box[:, 1]
        N = len(box)
        k = max(1, int(math.ceil(self.n_random ** (1.0 / N))))
        cells = np.stack(np.meshgrid(*[np.arange(k)] * N, indexing="ij"), -1).reshape(-1, N)
        cells = cells[: self.n_random] if self.n_random else cells[:0]
        x = lo + (cells + rng.random(cells.shape)) * (hi - lo) / k
        d = rng.normal(size=x.shape)
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        diam = float(np.linalg.norm(hi - lo))
        ell = np.exp(rng.uniform(np.log(self.h / 4), np.log(diam / 2), size=len(x)))
        y = np.clip(x + d * ell[:, None], lo, hi)
        xs, ys = [x], [y]

        ifaces = self.interfaces if self.interfaces is not None else (
            field_.interfaces if field_ is not None else ())
        for iface in ifaces:
            raw = lo + rng.random((4 * self.n_anchor, N)) * (hi - lo)
            p = iface.project(raw)
            p = p[np.all((p >= lo) & (p <= hi), axis=-1)][: self.n_anchor]
            if len(p) == 0:
                continue
            nu = iface.normal(p)
            r = rng.normal(size=p.shape)
            obl = nu + 0.5 * (r - np.sum(r * nu, -1, keepdims=True) * nu)
            obl /= np.linalg.norm(obl, axis=-1, keepdims=True)
            for dirs in (nu, obl):
                for s in (self.h, self.h / 2, self.h / 4):
                    xs.append(p - 0.5 * s * dirs)
                    ys.append(p + 0.5 * s * dirs)
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        keep = np.linalg.norm(y - x, axis=-1) > 1e-14
        return x[keep], y[keep]


def oslc_ratio(field_: CoefficientField, t, x, y) -> np.ndarray:
    """``<a(t,y) - a(t,x), y - x> / |y - x|^2``, symmetric in ``(x, y)``."""
    da = evaluate(field_, t, y) - evaluate(field_, t, x)
    dx = y - x
    return np.sum(da * dx, axis=-1) / np.sum(dx * dx, axis=-1)


@dataclass(frozen=True)
class OslcReport:
    times: np.ndarray
    alpha_hat: np.ndarray
    claimed: np.ndarray
    worst_pair: tuple
    worst_ratio: float
    violated: bool
    pairs_sampled: int
    tolerance: float
    alpha_matrix: np.ndarray | None = None

    @property
    def violations(self) -> np.ndarray:
        return self.alpha_hat > self.claimed + self.tolerance


def _max_sym_eig(field_, t, pts, step=1e-6):
    N = field_.dim
    jac = np.empty(pts.shape[:-1] + (N, N))
    for j in range(N):
        e = np.zeros(N)
        e[j] = step
        jac[..., :, j] = (evaluate(field_, t, pts + e) - evaluate(field_, t, pts - e)) / (2 * step)
    sym = 0.5 * (jac + np.swapaxes(jac, -1, -2))
    return float(np.linalg.eigvalsh(sym)[..., -1].max())


def estimate_oslc(field_: CoefficientField, t, sampler: PairSampler, tol=1e-9) -> OslcReport:
    """Largest sampled OSLC ratio per time, compared with the claimed modulus.

    For fields flagged ``differentiable`` the largest eigenvalue of the
    symmetrized Jacobian (central differences) is reported too, and counts
    towards ``violated`` with a finite-difference slack of 1e-6.
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    x, y = sampler.pairs(field_)
    if len(x) == 0:
        raise ValueError("pair sampler produced no pairs")
    alpha_hat, claimed, amat = [], [], []
    worst = (-np.inf, None)
    for tk in times:
        r = oslc_ratio(field_, tk, x, y)
        i = int(np.argmax(r))
        alpha_hat.append(float(r[i]))
        claimed.append(field_.oslc_modulus(tk))
        excess = r[i] - claimed[-1]
        if worst[1] is None or excess > worst[0]:
            worst = (excess, (float(tk), x[i].copy(), y[i].copy()), float(r[i]))
        if field_.differentiable:
            amat.append(_max_sym_eig(field_, tk, x))
    alpha_hat = np.array(alpha_hat)
    claimed = np.array(claimed)
    violated = bool(np.any(alpha_hat > claimed + tol))
    amat = np.array(amat) if amat else None
    if amat is not None:
        violated = violated or bool(np.any(amat > claimed + max(tol, 1e-6)))
    return OslcReport(times, alpha_hat, claimed, worst[1], worst[2], violated, len(x), tol, amat)


def _as_box(b):
    b = tuple(b)
    if len(b) and np.isscalar(b[0]):
        return ((float(b[0]), float(b[1])),)
    return tuple((float(lo), float(hi)) for lo, hi in b)


def translation_bound(field_: CoefficientField, t, convex_box, inner_region, h, n_per_axis=None):
    """Translation estimate over an inner box ``omega`` of a convex box ``C``.

    Returns ``(lhs, rhs)`` with ``lhs = int_omega |<a(t,x+h) - a(t,x), h>| dx``
    (tensor trapezoid) and ``rhs = 2 (alpha |C| + sup diam(C)^(N-1)) |h|^2``.
    """
    C = np.asarray(_as_box(convex_box))
    om = np.asarray(_as_box(inner_region))
    h = np.atleast_1d(np.asarray(h, dtype=float))
    N = field_.dim
    if C.shape != (N, 2) or om.shape != (N, 2) or h.shape != (N,):
        raise ValueError("box / shift dimensions do not match the field")
    hn = float(np.linalg.norm(h))
    if np.any(om[:, 0] - hn < C[:, 0] - 1e-14) or np.any(om[:, 1] + hn > C[:, 1] + 1e-14):
        raise ValueError("omega enlarged by the |h|-ball is not contained in C")
    if n_per_axis is None:
        n_per_axis = {1: 4001, 2: 801}.get(N, 61)
    axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in om]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    integrand = np.abs(np.sum((evaluate(field_, t, pts + h) - evaluate(field_, t, pts)) * h, -1))
    w = np.ones(pts.shape[:-1])
    for i, ax in enumerate(axes):
        wi = np.full(len(ax), ax[1] - ax[0])
        wi[[0, -1]] *= 0.5
        w = w * wi.reshape([-1 if j == i else 1 for j in range(N)])
    lhs = float(np.sum(integrand * w))
    vol = float(np.prod(C[:, 1] - C[:, 0]))
    diam = float(np.linalg.norm(C[:, 1] - C[:, 0]))
    rhs = 2.0 * (field_.oslc_modulus(t) * vol + field_.sup_bound * diam ** (N - 1)) * hn**2
    return lhs, rhs


@dataclass(frozen=True)
class JumpReport:
    normal: np.ndarray
    jump: np.ndarray
    lam: float
    colinearity_error: float
    consistent: bool


def jump_direction_check(field_: CoefficientField, interface_point, t, tol=1e-9,
                         delta=1e-9, flag_tol=1e-6) -> JumpReport:
    """One-sided limits across a declared interface and the compressive-jump test.

    A jump compatible with the OSLC points against the normal:
    ``[a] = -lam * xi`` with ``lam >= 0``.
    """
    if field_.kind != "piecewise_interface":
        raise ValueError("jump_direction_check needs a piecewise_interface field")
    p = np.asarray(interface_point, dtype=float)
    for iface in field_.interfaces:
        if abs(float(iface.signed_distance(p))) <= tol:
            break
    else:
        raise ValueError(f"point {p} is not on any declared interface")
    xi = np.asarray(iface.normal(p), dtype=float)
    jump = evaluate(field_, t, p + delta * xi) - evaluate(field_, t, p - delta * xi)
    lam = -float(jump @ xi)
    col = float(np.linalg.norm(jump + lam * xi))
    return JumpReport(xi, jump, lam, col, lam >= -flag_tol and col <= flag_tol)


# ---------------------------------------------------------------------------
# JSON / CSV loading

_FUNCS = {name: getattr(np, name) for name in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sign", "tanh", "arctan",
    "minimum", "maximum", "where", "heaviside", "clip", "sinh", "cosh")}
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
            ast.Constant, ast.Compare, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow,
            ast.USub, ast.UAdd, ast.Mod, ast.Lt, ast.Gt, ast.LtE, ast.GtE, ast.Eq, ast.NotEq)


def compile_expr(text: str, dim: int):
    """Compile an arithmetic expression in ``t, x1..xN`` into a vectorized rule."""
    tree = ast.parse(str(text), mode="eval")
    names = {"t", "pi", "e", *(f"x{i + 1}" for i in range(dim)), *_FUNCS}
    uses_t = False
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise FieldError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Name):
            if node.id not in names:
                raise FieldError(f"unknown name {node.id!r} in {text!r}")
            uses_t |= node.id == "t"
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise FieldError(f"disallowed call in {text!r}")
    code = compile(tree, "<expr>", "eval")

    def f(t, x):
        env = {"__builtins__": {}, "t": t, "pi": np.pi, "e": np.e, **_FUNCS}
        for i in range(dim):
            env[f"x{i + 1}"] = x[..., i]
        return np.broadcast_to(eval(code, env), x.shape[:-1])

    return f, uses_t


def _vector_rule(exprs, dim):
    if len(exprs) != dim:
        raise FieldError(f"need {dim} component expressions, got {len(exprs)}")
    comps = [compile_expr(e, dim) for e in exprs]

    def rule(t, x):
        x = np.asarray(x, dtype=float)
        return np.stack([c(t, x) for c, _ in comps], axis=-1)

    return rule, not any(u for _, u in comps)


def _alpha_from_json(a):
    if a is None:
        raise FieldError("field definition needs 'alpha'")
    if isinstance(a, (int, float)):
        return float(a), {}
    pieces = sorted((float(t0), float(v)) for t0, v in a)
    starts = np.array([p[0] for p in pieces])
    vals = np.array([p[1] for p in pieces])

    def alpha(t):
        i = np.searchsorted(starts, t, side="right") - 1
        return float(vals[max(i, 0)])

    return alpha, {"alpha_breaks": list(starts[1:])}


def read_grid_csv(path):
    """Read ``(box, values)`` from a row-major node CSV.

    Line 1 holds the axis sizes followed by the box bounds
    ``n1,..,nN,lo1,hi1,..,loN,hiN``; each further row is one node's velocity.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = [float(v) for v in rows[0]]
    N = len(head) // 3
    if len(head) != 3 * N:
        raise FieldError(f"malformed grid header in {path}")
    nx = tuple(int(v) for v in head[:N])
    box = tuple((head[N + 2 * i], head[N + 2 * i + 1]) for i in range(N))
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if data.shape != (int(np.prod(nx)), N):
        raise FieldError(f"grid CSV {path}: expected {np.prod(nx)} rows of {N} values")
    return box, data.reshape(nx + (N,))


def write_grid_csv(path, box, values):
    values = np.asarray(values, dtype=float)
    nx = values.shape[:-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*nx, *[v for b in box for v in b]])
        for row in values.reshape(-1, values.shape[-1]):
            w.writerow([f"{v:.17g}" for v in row])


def field_from_json(spec, base_dir=".") -> CoefficientField:
    """Build a field from its JSON description (dict, JSON text or path)."""
    if isinstance(spec, (str, Path)) and not str(spec).lstrip().startswith("{"):
        path = Path(base_dir) / spec
        return field_from_json(json.loads(path.read_text()), path.parent)
    if isinstance(spec, str):
        spec = json.loads(spec)
    kind = spec.get("kind")
    dim = int(spec.get("dim", 0))
    alpha, meta = _alpha_from_json(spec.get("alpha"))
    name = spec.get("name", kind)
    if kind == "closed_form":
        rule, autonomous = _vector_rule(spec["expr"], dim)
        if "sup_bound" not in spec:
            raise FieldError("closed_form field needs 'sup_bound'")
        return CoefficientField(kind, dim, rule, float(spec["sup_bound"]), alpha,
                                autonomous=autonomous, name=name, meta=meta)
    if kind == "piecewise_interface":
        pieces = spec["pieces"]
        ifc = pieces["interface"]
        iface = Interface.plane(ifc["normal"], float(ifc.get("offset", 0.0)))
        plus, ap = _vector_rule(pieces["plus"], dim)
        minus, am = _vector_rule(pieces["minus"], dim)
        return piecewise_field(iface, plus, minus, dim, float(spec["sup_bound"]), alpha,
                               autonomous=ap and am, name=name, meta=meta)
    if kind == "grid_sampled":
        g = spec["grid"]
        path = g if isinstance(g, str) else g["grid"]
        box, values = read_grid_csv(Path(base_dir) / path)
        if dim and dim != len(box):
            raise FieldError("grid CSV dimension does not match 'dim'")
        f = grid_field(box, values, alpha, spec.get("sup_bound"), name=name)
        return replace(f, meta={**f.meta, **meta})
    raise FieldError(f"unknown field kind {kind!r}")
