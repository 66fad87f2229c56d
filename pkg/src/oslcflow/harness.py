"""Scenario runner, weak-stability experiments and the nonuniqueness demonstration.

A scenario is a JSON document naming a field, a grid, initial/final data and
a list of diagnostics with tolerances. :func:`run_scenario` solves, measures,
writes CSV/JSON reports and returns an exit status: 0 when every assertion
passes, 1 when one fails, 2 when the configuration is invalid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as bundle_io
from .fields import (CoefficientField, FieldError, PairSampler, constant_field, estimate_oslc,
                     field_from_json, linear_field, mollify, oscillatory_field, sgn_field,
                     zero_field)
from .flow import (ConvergenceFailure, FlowMap, ResolutionError, SupportError,
                   build_transport_flow, check_semigroup, default_schedule, flow_diagnostics,
                   integrate_regularized_flow, trace_back)
from .grid import ScalarField, SpaceTimeGrid, interpolate
from .jacobian import jacobian_det
from .oracles import sgn_backtrace, sgn_flow, sgn_jacobian
from .shapes import from_spec
from .testfunctions import TensorBump, spatial_tests
from .transport import (PairingTrace, WeakResidualReport, _as_final, bv_trace, compact_cutoff,
                        duality_pairing, l1_trace, solve_backward_reversible,
                        solve_forward_duality, weak_residual)

SCENARIO_DIR = Path(__file__).parent / "scenarios"
STAGES = ("all", "oslc-check", "flow", "backward", "forward", "pairing", "stability",
          "nonuniqueness")


class ConfigError(ValueError):
    """Invalid scenario configuration (exit status 2)."""


class StabilityError(RuntimeError):
    """A member of a stability sequence is not admissible."""

    def __init__(self, index, message):
        super().__init__(f"sequence member {index}: {message}")
        self.index = index


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    name: str
    field: dict | str
    grid: dict
    data: dict = field(default_factory=dict)
    flow: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    output: str = "out"
    seed: int = 0
    stability: dict | None = None
    nonuniqueness: dict | None = None
    bundle_every: int = 10
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, source) -> ScenarioConfig:
        """From a dict, a path to JSON, or the name of a shipped scenario."""
        base = Path.cwd()
        if isinstance(source, (str, Path)):
            p = Path(source)
            if not p.exists() and (SCENARIO_DIR / f"{source}.json").exists():
                p = SCENARIO_DIR / f"{source}.json"
            if not p.exists():
                raise ConfigError(f"scenario file {source} not found")
            try:
                source = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{p}: {exc}") from exc
            base = p.parent
        if not isinstance(source, dict):
            raise ConfigError("scenario must be a JSON object")
        known = {"name", "field", "grid", "data", "flow", "diagnostics", "output", "seed",
                 "stability", "nonuniqueness", "bundle_every"}
        extra = set(source) - known
        if extra:
            raise ConfigError(f"unknown scenario keys {sorted(extra)}")
        for key in ("name", "field", "grid"):
            if key not in source:
                raise ConfigError(f"scenario lacks {key!r}")
        cfg = cls(**source, base_dir=base)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.diagnostics, list):
            raise ConfigError("diagnostics must be a list")
        for d in self.diagnostics:
            if not isinstance(d, dict) or "name" not in d:
                raise ConfigError(f"diagnostic entry {d!r} needs a name")
            for k, v in d.items():
                if k in ("tol", "max", "max_drift", "rel", "slack", "factor", "final_ratio") and not (
                        isinstance(v, (int, float)) and v > 0):
                    raise ConfigError(f"diagnostic {d['name']}: {k} must be > 0")
        if isinstance(self.field, str) and not (self.base_dir / self.field).exists():
            raise ConfigError(f"field file {self.field} not found")
        if isinstance(self.field, dict) and self.field.get("kind") == "grid_sampled":
            g = self.field.get("grid")
            path = g if isinstance(g, str) else (g or {}).get("grid", "")
            if not (self.base_dir / path).exists():
                raise ConfigError(f"grid CSV {path} not found")
        try:
            self.build_grid(0.0)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid grid: {exc}") from exc

    def build_grid(self, sup_bound: float) -> SpaceTimeGrid:
        g = self.grid
        box = g.get("box", [[-2.0, 2.0], [-2.0, 2.0]])
        nx = g.get("nx", 129)
        grid = SpaceTimeGrid(box=tuple(tuple(b) for b in box),
                             nx=tuple(nx) if isinstance(nx, list) else (int(nx),) * len(box),
                             t0=float(g.get("t0", 0.0)), T=float(g.get("T", 1.0)),
                             nt=int(g.get("nt", 101)), padding=float(g.get("padding", 0.0)))
        return grid.ensure_padding(sup_bound)

    def build_field(self) -> CoefficientField:
        spec = self.field
        try:
            if isinstance(spec, dict) and "oracle" in spec:
                return oracle_field(spec, self.build_grid(0.0))
            return field_from_json(spec, self.base_dir)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid field definition: {exc}") from exc

    def flow_kwargs(self, grid: SpaceTimeGrid) -> dict:
        f = self.flow
        kw = {}
        if "eps0" in f or "levels" in f:
            kw["schedule"] = default_schedule(grid, int(f.get("levels", 7)), f.get("eps0"))
        if "tol" in f:
            kw["tol"] = float(f["tol"])
        elif "tol_h" in f:
            kw["tol"] = float(f["tol_h"]) * grid.hmax
        return kw


def oracle_field(spec: dict, grid: SpaceTimeGrid) -> CoefficientField:
    name = spec["oracle"]
    if name == "sgn2d":
        return sgn_field(-1.0, float(spec.get("alpha", 0.0)))
    if name == "sgn_expansive":
        return sgn_field(+1.0, float(spec.get("alpha", 0.0)))
    if name == "linear":
        return linear_field(spec["A"], spec.get("sup_bound"), box=grid.box)
    if name == "zero":
        return zero_field(grid.dim)
    if name == "constant":
        return constant_field(spec["c"])
    raise ConfigError(f"unknown oracle field {name!r}")


# ---------------------------------------------------------------------------
# stability experiments


@dataclass(frozen=True)
class ConvergenceReport:
    index: list
    test_ids: list
    dev_pi: np.ndarray
    dev_api: np.ndarray
    dev_u: np.ndarray
    alpha_hat_limit: float
    alpha_hat_seq: np.ndarray

    def _series(self):
        return {"pi": self.dev_pi.max(axis=1), "api": self.dev_api.max(axis=1), "u": self.dev_u}

    @property
    def ratios(self) -> dict:
        out = {}
        for k, s in self._series().items():
            with np.errstate(divide="ignore", invalid="ignore"):
                out[k] = np.where(s[:-1] > 0, s[1:] / s[:-1], 0.0)
        return out

    def nonincreasing(self, rel=1e-9) -> dict:
        return {k: bool(np.all(np.diff(s) <= rel * max(1.0, float(s.max()))))
                for k, s in self._series().items()}

    def final_fraction(self) -> dict:
        return {k: float(s[-1] / s[0]) if s[0] > 0 else 0.0 for k, s in self._series().items()}

    def verdict(self, final_ratio=0.1) -> dict:
        mono = self.nonincreasing()
        frac = self.final_fraction()
        return {k: mono[k] and frac[k] <= final_ratio for k in mono}


def _data_callable(spec):
    if spec is None:
        return None
    if callable(spec):
        return spec
    return from_spec(spec)


def _solve(field_, grid, pi_T, u0, flow_kw, cutoff=False):
    """Backward reversible and forward duality solutions for one field."""
    eps = field_.meta.get("eps")
    if eps is not None and field_.name.startswith("moll("):
        # already smooth at scale eps: integrate as is with matching steps
        F = integrate_regularized_flow(field_, eps, grid, "backward_transport", regularize=False)
        B = integrate_regularized_flow(field_, eps, grid, "backtrace", regularize=False)
    else:
        F = build_transport_flow(field_, grid, **flow_kw)
        B = trace_back(field_, grid, **flow_kw)
    pi = solve_backward_reversible(field_, pi_T, grid, flow=F, cutoff=cutoff) if pi_T is not None else None
    u = solve_forward_duality(field_, u0, grid, trace=B) if u0 is not None else None
    return pi, u


def sgn_oracle_solutions(grid: SpaceTimeGrid, pi_T, u0, cutoff=False):
    """Closed-form reversible and duality solutions for ``a = (-sgn x1, 0)``.

    ``pi = pi_T(X_0^T) J`` (jacobian 1/2 on the edge of the cone) and
    ``u = u0(x + t sgn(x1) e1)``, both read through node interpolation of the
    data as the numeric solvers do.
    """

    T = grid.T
    pi = u = None
    if pi_T is not None:
        vals = _as_final(pi_T, grid, T, "conservative_pi").values[0]
        if cutoff:
            vals = vals * compact_cutoff(grid.box, T - grid.t0)(grid.nodes)
        out = np.stack([interpolate(grid, vals, sgn_flow(0.0, T, t, grid.nodes))
                        * sgn_jacobian(t, grid.nodes, T, midpoint=True) for t in grid.times])
        out[-1] = vals
        pi = ScalarField(grid, grid.times, out, "conservative_pi")
    if u0 is not None:
        vals = _as_final(u0, grid, grid.t0, "nonconservative_u").values[0]
        out = np.stack([interpolate(grid, vals, sgn_backtrace(t - grid.t0, grid.nodes))
                        for t in grid.times])
        u = ScalarField(grid, grid.times, out, "nonconservative_u")
    return pi, u


def sgn_oracle_functionals(grid: SpaceTimeGrid, pi_T, tests, cutoff=False, n_gauss=160):
    """Limit functionals ``int pi phi`` and ``int a pi . grad phi`` for the sgn field.

    The closed-form reversible solution jumps across ``|x1| = T - t``; the
    integrals are taken by Gauss-Legendre quadrature on each side of the jump
    so no grid-dependent quadrature error enters the limit. The data enters
    through its node interpolant, exactly as the solvers read it. Returns two arrays
    of shape ``(nt, ntests)``.
    """

    # the solvers see the data through its node interpolant; so does the limit
    vals = _as_final(pi_T, grid, grid.T, "conservative_pi").values[0]
    if cutoff:
        vals = vals * compact_cutoff(grid.box, grid.T - grid.t0)(grid.nodes)
    data = lambda x: interpolate(grid, vals, x)
    s, w = np.polynomial.legendre.leggauss(n_gauss)
    (lo1, hi1), (lo2, hi2) = grid.box
    y2 = 0.5 * (hi2 + lo2) + 0.5 * (hi2 - lo2) * s
    w2 = 0.5 * (hi2 - lo2) * w
    T = grid.T
    Lpi = np.zeros((grid.nt, len(tests)))
    Lapi = np.zeros((grid.nt, len(tests)))
    for k, t in enumerate(grid.times):
        c = T - t
        for a, b, sign in ((lo1, -c, -1.0), (c, hi1, 1.0)):
            a, b = max(a, lo1), min(b, hi1)
            if b <= a:
                continue
            y1 = 0.5 * (a + b) + 0.5 * (b - a) * s
            w1 = 0.5 * (b - a) * w
            pts = np.stack(np.meshgrid(y1, y2, indexing="ij"), -1)
            W = np.multiply.outer(w1, w2)
            pi = data(sgn_flow(0.0, T, t, pts))
            for j, phi in enumerate(tests):
                Lpi[k, j] += np.sum(W * pi * phi(pts))
                # a = (-sgn x1, 0) on this side
                Lapi[k, j] += np.sum(W * pi * (-sign) * phi.grad(pts)[..., 0])
    return Lpi, Lapi


def sequence_fields(base: CoefficientField, schedule, grid: SpaceTimeGrid):
    """Expand a schedule spec into ``[(label, field), ...]``.

    ``{"kind": "mollify", "eps": [...]}`` or ``{"kind": "mollify", "eps0_h": 8,
    "count": 5}`` gives ``mollify(base, eps_n)``; ``{"kind": "oscillate",
    "n": [...]}`` gives ``base + sin(n x1)/n e1``. A list of fields is used as is.
    """
    if isinstance(schedule, (list, tuple)):
        return [(i, f) for i, f in enumerate(schedule)]
    kind = schedule.get("kind")
    if kind == "mollify":
        eps = schedule.get("eps")
        if eps is None:
            e0 = float(schedule.get("eps0_h", 8.0)) * grid.hmax
            eps = [e0 * 2.0**-n for n in range(int(schedule.get("count", 5)))]
        return [(n, mollify(base, e)) for n, e in enumerate(eps)]
    if kind == "oscillate":
        return [(int(n), oscillatory_field(base, float(n))) for n in schedule.get("n", [1, 2, 4, 8, 16])]
    raise ConfigError(f"unknown stability schedule {kind!r}")


def stability_experiment(base_field: CoefficientField, schedule, data: dict, grid: SpaceTimeGrid,
                         tests: Sequence[TensorBump] | None = None, limit=None,
                         flow_kw: dict | None = None, sampler: PairSampler | None = None
                         ) -> ConvergenceReport:
    """Deviation of solutions for a sequence ``a_n`` from the solutions for ``a``.

    Per member ``n`` and spatial test ``phi``: ``sup_t |int (pi_n - pi) phi|``
    and ``sup_t |int (a_n pi_n - a pi) . grad phi|``; per member
    ``sup_t ||u_n - u||_L1``. ``limit`` may supply ``(pi, u)`` for ``a``, or
    be ``"oracle"`` for the closed-form solutions of the compressive sgn field
    (limit functionals by exact-split quadrature, see :func:`sgn_oracle_functionals`);
    by default both are computed numerically.
    """
    flow_kw = flow_kw or {}
    grid = grid.ensure_padding(base_field.sup_bound + 1.0)
    pi_T = _data_callable(data.get("pi_T"))
    u0 = _data_callable(data.get("u0"))
    cutoff = bool(data.get("cutoff", False))
    tests = spatial_tests(grid.box) if tests is None else tests
    sampler = sampler or PairSampler(grid.box, grid.hmax, seed=0)
    members = sequence_fields(base_field, schedule, grid)

    sup_cap = base_field.sup_bound + 1.0 + 1e-12
    alphas = []
    for n, f in members:
        if f.sup_bound > sup_cap:
            raise StabilityError(n, f"sup bound {f.sup_bound} exceeds uniform bound {sup_cap}")
        rep = estimate_oslc(f, grid.t0, sampler)
        if rep.violated:
            raise StabilityError(n, f"OSLC violated (alpha_hat={rep.alpha_hat[0]:.3g})")
        alphas.append(float(rep.alpha_hat[0]))
    alpha_lim = float(estimate_oslc(base_field, grid.t0, sampler).alpha_hat[0])

    phis, grads = [], []
    for phi in tests:
        v, gr = phi.on_tensor_grid(grid.axes)
        phis.append(v)
        grads.append(np.stack(gr, -1))
    phis = np.stack(phis)
    grads = np.stack(grads)  # (ntest, *nx, N)

    def flux(field_, pi):
        if field_.autonomous:
            a = np.broadcast_to(field_(grid.t0, grid.nodes), (grid.nt,) + grid.nx + (grid.dim,))
        else:
            a = np.stack([field_(t, grid.nodes) for t in grid.times])
        return pi.values[..., None] * a

    def tables(field_, pi):
        Lpi = grid.integrate(pi.values[:, None] * phis[None])
        proj = np.sum(flux(field_, pi)[:, None] * grads[None], axis=-1)
        return Lpi, grid.integrate(proj)

    if limit is None:
        pi_lim, u_lim = _solve(base_field, grid, pi_T, u0, flow_kw, cutoff)
    elif limit == "oracle":
        _, u_lim = sgn_oracle_solutions(grid, None, u0)
        pi_lim = None
    else:
        pi_lim, u_lim = limit
    if pi_T is None:
        L = None
    elif limit == "oracle":
        L = sgn_oracle_functionals(grid, pi_T, tests, cutoff)
    else:
        L = tables(base_field, pi_lim)

    dpi, dapi, du = [], [], []
    for n, f in members:
        pi_n, u_n = _solve(f, grid, pi_T, u0, flow_kw, cutoff)
        if pi_n is not None:
            Lpi, Lapi = tables(f, pi_n)
            dpi.append(np.max(np.abs(Lpi - L[0]), axis=0))
            dapi.append(np.max(np.abs(Lapi - L[1]), axis=0))
        else:
            dpi.append(np.zeros(len(tests)))
            dapi.append(np.zeros(len(tests)))
        du.append(float(np.max(grid.integrate(np.abs(u_n.values - u_lim.values)))) if u_n is not None else 0.0)
    return ConvergenceReport([n for n, _ in members], [t.id for t in tests], np.array(dpi),
                             np.array(dapi), np.array(du), alpha_lim, np.array(alphas))


# ---------------------------------------------------------------------------
# nonuniqueness


@dataclass(frozen=True)
class NonuniquenessReport:
    flow_difference: float
    jacobian_difference: float
    distance_to_filippov: float
    distance_to_other: float
    deep_nodes: int
    eps_used: float
    h: float
    oracle_semigroup: float
    numeric_semigroup: float
    dt: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


DEFAULT_TRIPLES = ((0.0, 0.25, 0.5), (0.0, 0.5, 1.0), (0.25, 0.5, 0.75), (0.5, 0.75, 1.0))


def nonuniqueness_demo(T: float = 1.0, grid: SpaceTimeGrid | None = None, flow: FlowMap | None = None,
                       deep: float = 0.8, triples=DEFAULT_TRIPLES, flow_kw: dict | None = None
                       ) -> NonuniquenessReport:
    """Two members of the transport-flow family and the mollification limit.

    Reports the flow gap ``max |X_1 - X_0|``, the jacobian gap, and the sup
    distance of the numeric flow to ``X_0`` (all nodes) and to ``X_1`` (min
    over nodes with ``T - t - |x1| >= deep``). Semigroup errors are reported
    for the exact family and for the numeric flow.
    """
    grid = grid or SpaceTimeGrid.square(2.0, 129, T=T, nt=101)
    a = sgn_field()
    if flow is None:
        flow = build_transport_flow(a, grid, direction="general", **(flow_kw or {}))
    grid = flow.grid
    nodes = grid.nodes
    gap = jgap = d0 = 0.0
    d1 = math.inf
    deep_count = 0
    for k, t in enumerate(grid.times):
        X0 = sgn_flow(0.0, T, t, nodes)
        X1 = sgn_flow(1.0, T, t, nodes)
        gap = max(gap, float(np.max(np.linalg.norm(X1 - X0, axis=-1))))
        j0 = sgn_jacobian(t, nodes, T)
        j1 = sgn_jacobian(t, nodes, T)
        jgap = max(jgap, float(np.max(np.abs(j0 - j1))))
        Xn = flow.pair(T, t)
        d0 = max(d0, float(np.max(np.linalg.norm(Xn - X0, axis=-1))))
        mask = (T - t - np.abs(nodes[..., 0])) >= deep - 1e-12
        if mask.any():
            deep_count += int(mask.sum())
            d1 = min(d1, float(np.min(np.linalg.norm(Xn[mask] - X1[mask], axis=-1))))
    pts = nodes.reshape(-1, 2)
    orc = max(check_semigroup(lambda s, t, x, lam=lam: sgn_flow(lam, s, t, x), triples, pts)
              for lam in (-1.0, 0.0, 1.0, 3.0))
    num = check_semigroup(flow, triples) if flow.direction == "general" else math.nan
    return NonuniquenessReport(gap, jgap, d0, d1, deep_count, flow.eps_used, grid.hmax, orc, num,
                               grid.dt)


# ---------------------------------------------------------------------------
# reports


@dataclass
class ScenarioResult:
    scenario: str
    exit_code: int = 0
    assertions: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    pairing: PairingTrace | None = None
    residuals: WeakResidualReport | None = None
    stability: ConvergenceReport | None = None
    message: str = ""

    def check(self, name, value, limit, passed=None, kind="<="):
        if passed is None:
            passed = bool(value <= limit) if kind == "<=" else bool(value >= limit)
        self.assertions[name] = {"passed": bool(passed), "value": _jsonable(value),
                                 "limit": _jsonable(limit)}
        return passed

    @property
    def failed(self) -> list:
        return sorted(k for k, v in self.assertions.items() if not v["passed"])


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def emit_report(result: ScenarioResult, out_dir) -> list[Path]:
    """Write ``pairing.csv``, ``residuals.csv``, ``stability.csv`` and ``summary.json``
    (whichever apply). Output is byte-identical for identical inputs."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    if result.pairing is not None:
        p = result.pairing
        files.append(bundle_io.write_table(d / "pairing.csv", ["t", "value"],
                                           zip(p.times.tolist(), p.values.tolist())))
    if result.residuals is not None:
        r = result.residuals.residuals
        files.append(bundle_io.write_table(d / "residuals.csv", ["test_id", "residual"],
                                           [(k, float(r[k])) for k in sorted(r)]))
    if result.stability is not None:
        s = result.stability
        rows = []
        for i, n in enumerate(s.index):
            for j, tid in enumerate(s.test_ids):
                rows.append((n, tid, float(s.dev_pi[i, j]), float(s.dev_api[i, j]), float(s.dev_u[i])))
        files.append(bundle_io.write_table(d / "stability.csv",
                                           ["n", "test_id", "dev_pi", "dev_api", "dev_u"], rows))
    summary = {"scenario": result.scenario, "exit_code": result.exit_code,
               "assertions": result.assertions, "values": _jsonable(result.values),
               "passed": not result.failed}
    if result.message:
        summary["message"] = result.message
    path = d / "summary.json"
    path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    files.append(path)
    return files


# ---------------------------------------------------------------------------
# scenario runner


def _diag(cfg: ScenarioConfig, name: str):
    for d in cfg.diagnostics:
        if d["name"] == name:
            return d
    return None


def run_scenario(config, stage: str = "all", out_dir=None) -> ScenarioResult:
    """Run a scenario (or one stage of it) and write its reports.

    Never raises for configuration or diagnostic problems: those map to exit
    status 2 and 1 respectively, with the reason in ``message``.
    """
    try:
        cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.load(config)
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")
        field_ = cfg.build_field()
        grid = cfg.build_grid(field_.sup_bound)
    except (ConfigError, FieldError, ValueError, OSError) as exc:
        res = ScenarioResult(getattr(config, "name", str(config)), 2, message=str(exc))
        return res
    out = Path(out_dir) if out_dir is not None else Path(cfg.output)
    res = ScenarioResult(cfg.name)
    try:
        _run(cfg, field_, grid, stage, out, res)
    except (SupportError, ConvergenceFailure, ResolutionError, StabilityError) as exc:
        res.check(type(exc).__name__, 1.0, 0.0, passed=False)
        res.message = str(exc)
    except (ConfigError, FieldError) as exc:
        res.exit_code = 2
        res.message = str(exc)
        return res
    if res.exit_code == 0 and res.failed:
        res.exit_code = 1
        res.message = res.message or "failed: " + ", ".join(res.failed)
    try:
        emit_report(res, out)
    except OSError as exc:
        res.exit_code = 2
        res.message = f"cannot write reports to {out}: {exc}"
    return res


def _run(cfg, field_, grid, stage, out, res):
    h = grid.hmax
    res.values["h"] = h
    flow_kw = cfg.flow_kwargs(grid)

    d = _diag(cfg, "oslc")
    if d is not None or stage == "oslc-check":
        d = d or {}
        sampler = PairSampler(grid.box, h, int(d.get("n_random", 1024)), seed=cfg.seed)
        times = d.get("times", [grid.t0])
        rep = estimate_oslc(field_, times, sampler, float(d.get("tol", 1e-9)))
        res.values["oslc"] = {"alpha_hat": rep.alpha_hat, "claimed": rep.claimed,
                              "worst_ratio": rep.worst_ratio, "pairs": rep.pairs_sampled}
        res.check("oslc", rep.worst_ratio, float(rep.claimed.max()) + rep.tolerance,
                  passed=not rep.violated)
        if rep.violated:
            res.message = (f"OSLC violation: ratio {rep.worst_ratio:.4g} exceeds claimed "
                           f"modulus {rep.claimed.max():.4g}")
            return
    if stage == "oslc-check":
        return

    if stage == "stability":
        _stability(cfg, field_, grid, out, res, flow_kw)
        return
    if stage == "nonuniqueness":
        _nonuniqueness(cfg, grid, res, flow_kw)
        return

    pi_T = _data_callable(cfg.data.get("pi_T"))
    u0 = _data_callable(cfg.data.get("u0"))
    cutoff = bool(cfg.data.get("cutoff", False))
    every = max(1, int(cfg.bundle_every))
    times_idx = sorted(set(range(0, grid.nt, every)) | {grid.nt - 1})

    need_flow = stage in ("all", "flow", "backward", "pairing")
    need_trace = stage in ("all", "forward", "pairing") and u0 is not None
    flow = trace = pi = u = None
    if need_flow:
        flow = build_transport_flow(field_, grid, **flow_kw)
        res.values["eps_used"] = flow.eps_used
        res.values["cauchy"] = flow.meta.get("cauchy", [])
        diag = flow_diagnostics(flow, field_)
        res.values["flow"] = {"lipschitz_max": float(diag.lipschitz.max()),
                              "speed_excess": diag.speed_excess,
                              "identity_residual": diag.identity_residual}
        bundle_io.write_flow_bundle(flow, out / "flow",
                                    pairs=[(grid.nt - 1, k) for k in times_idx],
                                    diagnostics=_jsonable(res.values["flow"]))
        _flow_checks(cfg, field_, flow, diag, res)
    if need_trace:
        trace = trace_back(field_, grid, **flow_kw)
    if stage in ("all", "backward", "pairing") and pi_T is not None:
        pi = solve_backward_reversible(field_, pi_T, grid, flow=flow, cutoff=cutoff)
        bundle_io.write_scalar_bundle(pi, out / "pi", times_idx)
    if need_trace:
        u = solve_forward_duality(field_, u0, grid, trace=trace)
        bundle_io.write_scalar_bundle(u, out / "u", times_idx)
    if stage == "flow":
        return
    _solution_checks(cfg, field_, grid, pi, u, res, stage)
    if stage == "all" and cfg.stability:
        _stability(cfg, field_, grid, out, res, flow_kw)
    if stage == "all" and cfg.nonuniqueness is not None:
        _nonuniqueness(cfg, grid, res, flow_kw)


def _flow_checks(cfg, field_, flow, diag, res):
    g = flow.grid
    h = g.hmax
    d = _diag(cfg, "flow_oracle")
    if d is not None:
        err = max(float(np.max(np.linalg.norm(flow.at(t) - sgn_flow(0.0, g.T, t, g.nodes), axis=-1)))
                  for t in g.times)
        res.values["flow_oracle_error"] = err
        res.check("flow_oracle", err, float(d.get("factor", 5.0)) * (h + flow.eps_used))
    d = _diag(cfg, "flow_lipschitz")
    if d is not None:
        excess = float(np.max(diag.lipschitz / diag.lipschitz_bound)) - 1.0
        res.check("flow_lipschitz", excess, float(d.get("tol", 10.0 * max(h, g.dt))))
        res.check("flow_speed", diag.speed_excess, 10.0 * g.dt)
        res.check("flow_identity", diag.identity_residual, 0.0)
    d = _diag(cfg, "jacobian_nonneg")
    if d is not None:
        jmin = float(jacobian_det(flow).values.min())
        res.values["jacobian_min"] = jmin
        res.check("jacobian_nonneg", -jmin, float(d.get("tol", 10.0 * h)))


def _solution_checks(cfg, field_, grid, pi, u, res, stage="all"):
    """Diagnostics on the solutions; a single-stage run skips those whose
    inputs that stage does not produce."""
    h = grid.hmax
    d = _diag(cfg, "pairing")
    if d is not None and (stage in ("all", "pairing") or (pi is not None and u is not None)):
        if pi is None or u is None:
            raise ConfigError("pairing diagnostic needs both pi_T and u0")
        pt = duality_pairing(u, pi)
        res.pairing = pt
        res.values["pairing_drift"] = pt.drift
        res.check("pairing", pt.drift, float(d.get("max_drift", 1e-3)))
    if pi is not None:
        l1 = l1_trace(pi)
        res.values["l1_trace"] = {"first": float(l1[0]), "last": float(l1[-1]),
                                  "min": float(l1.min()), "max": float(l1.max())}
        d = _diag(cfg, "l1_constant")
        if d is not None:
            rel = float(np.max(np.abs(l1 - l1[-1]))) / max(abs(float(l1[-1])), 1e-300)
            res.check("l1_constant", rel, float(d.get("rel", 0.02)))
        d = _diag(cfg, "l1_nonincreasing")
        if d is not None:
            rise = float(np.max(np.diff(l1))) / max(float(l1.max()), 1e-300)
            res.check("l1_nonincreasing", rise, float(d.get("slack", 0.01)))
        d = _diag(cfg, "weak_residual")
        if d is not None:
            wr = weak_residual(pi, field_)
            res.residuals = wr
            res.values["weak_residual_max"] = wr.max_residual
            res.check("weak_residual", wr.max_residual, float(d.get("max", 10.0 * h)))
        d = _diag(cfg, "cancellation")
        if d is not None:
            T = grid.T
            worst = 0.0
            for k, t in enumerate(grid.times):
                mask = np.abs(grid.nodes[..., 0]) < T - t - 2 * h
                if mask.any():
                    worst = max(worst, float(np.max(np.abs(pi.values[k][mask]))))
            res.check("cancellation", worst, float(d.get("tol", 1e-6)))
    d = _diag(cfg, "bv")
    if d is not None and (stage in ("all", "forward") or u is not None):
        if u is None:
            raise ConfigError("bv diagnostic needs u0")
        bv = bv_trace(u, d.get("x0", [0.0] * grid.dim), float(d.get("R", 0.5)), field_)
        res.values["bv_margin_max"] = float(bv.margin.max())
        res.check("bv", float(bv.margin.max()), float(d.get("slack", 0.05)))


def _stability(cfg, field_, grid, out, res, flow_kw):
    st = cfg.stability or {}
    if "schedule" not in st:
        raise ConfigError("stability section needs a schedule")
    data = {"pi_T": cfg.data.get("pi_T"), "u0": cfg.data.get("u0"),
            "cutoff": cfg.data.get("cutoff", False)}
    if "box" in st or "nx" in st or "nt" in st:
        g = {**cfg.grid, **{k: st[k] for k in ("box", "nx", "nt") if k in st}}
        grid = ScenarioConfig(cfg.name, cfg.field, g).build_grid(field_.sup_bound)
    rep = stability_experiment(field_, st["schedule"], data, grid, limit=st.get("limit"),
                               flow_kw=flow_kw,
                               sampler=PairSampler(grid.box, grid.hmax, seed=cfg.seed))
    res.stability = rep
    res.values["stability"] = {"ratios": rep.ratios, "final_fraction": rep.final_fraction(),
                               "alpha_hat_limit": rep.alpha_hat_limit,
                               "alpha_hat_seq": rep.alpha_hat_seq}
    d = _diag(cfg, "stability")
    if d is not None:
        fr = float(d.get("final_ratio", 0.1))
        for k, ok in rep.verdict(fr).items():
            res.check(f"stability_{k}", rep.final_fraction()[k], fr, passed=ok)


def _nonuniqueness(cfg, grid, res, flow_kw):
    nu = cfg.nonuniqueness or {}
    rep = nonuniqueness_demo(grid.T, grid, deep=float(nu.get("deep", 0.8)), flow_kw=flow_kw)
    res.values["nonuniqueness"] = rep.as_dict()
    h = rep.h
    res.check("filippov_distance", rep.distance_to_filippov, 5.0 * (h + rep.eps_used))
    res.check("other_member_distance", rep.distance_to_other, 0.4, kind=">=")
    res.check("oracle_semigroup", rep.oracle_semigroup, 1e-12)
    res.check("numeric_semigroup", rep.numeric_semigroup, 10.0 * rep.dt)
