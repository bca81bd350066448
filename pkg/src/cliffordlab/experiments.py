"""Batch experiments: validated configs in, deterministic JSON reports out.

Each experiment declares a parameter schema, runs module code, and records
named checks (measured value, tolerance, pass/fail). Everything in a report
except ``timing`` is a pure function of the config.
"""

from __future__ import annotations

import csv
import json
import math
import subprocess
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .algebra import (
    MAX_DIM,
    Multivector,
    gp_arrays,
    sign_table,
    vector_inverse,
    vectors_to_arrays,
)
from .cauchy import (
    MEASURE_ZERO_REFUSAL,
    PositiveMeasureError,
    TestFunction,
    align_quad,
    approximate_on_null_set,
    cauchy_reproduce,
    default_probes,
    estimate_cn,
    gradient_of_potential_check,
    kernel_vectors,
    reference_quad,
)
from .commutator import (
    affine_right,
    diagonal_convergence,
    left_quotient,
    noncommutativity_witness,
    parse_field,
    random_pairs,
    right_quotient,
)
from .fractals import (
    PRESETS,
    SampledSet,
    chord_arc_check,
    circle_cloud,
    curve_from_points,
    generate_fat_cantor,
    generate_ifs,
    line_cloud,
    lipschitz_graph_curve,
    preset,
    read_points_csv,
    sawtooth,
    write_points_csv,
)
from .grid import (
    GridFunction,
    GridSpec,
    dirac,
    factorization_residual,
    interior,
    monogenicity_defect,
    product_rule_residual,
)
from .jets import (
    Hyperplane,
    dirac_of_linear_map,
    dirac_scale,
    extend_from_hyperplane,
    hyperplane_uniqueness_check,
    integrate_prescribed_differentials,
    parse_coefficient,
    rigidity_report,
    tangent_tolerance,
    whitney_compatibility_defect,
)

EPS = np.finfo(float).eps


class ConfigError(ValueError):
    """Invalid experiment config; the message names the parameter and the rule."""


# --- schema --------------------------------------------------------------------


@dataclass(frozen=True)
class Param:
    name: str
    kind: type
    default: Any = None  # None: required
    help: str = ""
    rule: str = ""
    check: Callable[[Any], bool] | None = None

    def convert(self, raw: Any) -> Any:
        if self.kind is bool:
            if isinstance(raw, bool):
                return raw
            if str(raw).lower() in ("1", "true", "yes"):
                return True
            if str(raw).lower() in ("0", "false", "no"):
                return False
            raise ConfigError(f"{self.name}: expected a boolean, got {raw!r}")
        if self.kind is int and isinstance(raw, float) and not raw.is_integer():
            raise ConfigError(f"{self.name}: expected an integer, got {raw!r}")
        try:
            return self.kind(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{self.name}: expected {self.kind.__name__}, got {raw!r}") from None

    def schema(self) -> dict:
        return {
            "type": self.kind.__name__,
            "default": self.default,
            "required": self.default is None,
            "help": self.help,
            "rule": self.rule,
        }


def _positive(v) -> bool:
    return v > 0


def _dims(text: str) -> list[int]:
    return [int(t) for t in str(text).split(",") if t.strip()]


SEED = Param("seed", int, None, "counter-based RNG key", "integer >= 0", lambda v: v >= 0)
SIDE = Param("side", str, "left", "Dirac side", "left or right", lambda v: v in ("left", "right"))


@dataclass(frozen=True)
class Experiment:
    id: str
    summary: str
    params: tuple[Param, ...]
    run: Callable[[dict, Report, ExperimentConfig], None]
    out_kind: str = "report"  # what --out receives: "report", "points" (CSV) or "jet" (JSON)

    def schema(self) -> dict:
        return {"summary": self.summary, "out": self.out_kind, "params": {p.name: p.schema() for p in self.params}}


EXPERIMENTS: dict[str, Experiment] = {}


def _register(id: str, summary: str, params, out_kind: str = "report"):
    def deco(fn):
        EXPERIMENTS[id] = Experiment(id, summary, tuple(params), fn, out_kind)
        return fn

    return deco


# --- config and report ---------------------------------------------------------


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    out: str | None = None
    report: str | None = None
    curves: str | None = None

    def validated(self) -> ExperimentConfig:
        """Fill defaults, convert types, and check every precondition."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; known: {', '.join(sorted(EXPERIMENTS))}")
        exp = EXPERIMENTS[self.experiment]
        known = {p.name for p in exp.params}
        extra = sorted(set(self.params) - known)
        if extra:
            raise ConfigError(f"{self.experiment}: unknown parameter(s) {', '.join(extra)}")
        out = {}
        for p in exp.params:
            raw = self.params.get(p.name, p.default)
            if raw is None:
                raise ConfigError(f"{p.name}: required ({p.help})")
            v = p.convert(raw)
            if p.check is not None and not p.check(v):
                raise ConfigError(f"{p.name}={v!r} violates: {p.rule}")
            out[p.name] = v
        return ExperimentConfig(self.experiment, out, self.out, self.report, self.curves)

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "params": dict(sorted(self.params.items())),
            "outputs": {"out": self.out, "report": self.report, "curves": self.curves},
        }

    @classmethod
    def from_json(cls, obj: dict) -> ExperimentConfig:
        if not isinstance(obj, dict) or "experiment" not in obj:
            raise ConfigError("config must be a JSON object with an 'experiment' field")
        outs = obj.get("outputs", {}) or {}
        return cls(obj["experiment"], dict(obj.get("params", {})), outs.get("out"), outs.get("report"), outs.get("curves"))

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: not valid JSON ({exc})") from None


@dataclass
class Check:
    name: str
    value: Any
    tolerance: Any
    relation: str  # "<=", ">=", "in", "=="
    passed: bool

    def to_json(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "relation": self.relation, "passed": self.passed}


@dataclass
class Report:
    config: ExperimentConfig
    version: str
    checks: list[Check] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)  # name -> (x label, y label, rows)
    wall_clock: float = 0.0

    def check(self, name: str, value, tolerance, relation: str = "<=") -> bool:
        if relation == "<=":
            ok = value <= tolerance
        elif relation == ">=":
            ok = value >= tolerance
        elif relation == "in":
            ok = tolerance[0] <= value <= tolerance[1]
        elif relation == "==":
            ok = value == tolerance
        else:
            raise ValueError(relation)
        ok = bool(ok) and not (isinstance(value, float) and math.isnan(value))
        self.checks.append(Check(name, _plain(value), _plain(tolerance), relation, ok))
        return ok

    def curve(self, name: str, xlabel: str, ylabel: str, rows) -> None:
        self.curves[name] = {"x": xlabel, "y": ylabel, "rows": [[_plain(a), _plain(b)] for a, b in rows]}

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def result_section(self) -> dict:
        """Everything that must be identical across reruns."""
        return _plain(
            {
                "experiment": self.config.experiment,
                "version": self.version,
                "config": self.config.to_json(),
                "passed": self.passed,
                "checks": [c.to_json() for c in self.checks],
                "results": self.results,
                "curves": self.curves,
            }
        )

    def to_json(self) -> dict:
        out = self.result_section()
        out["timing"] = {"wall_clock_s": round(self.wall_clock, 3)}
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    def write_curves(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["curve", "x_label", "y_label", "x", "y"])
            for name in sorted(self.curves):
                c = self.curves[name]
                for x, y in c["rows"]:
                    w.writerow([name, c["x"], c["y"], repr(x), repr(y)])


def _plain(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def version_string() -> str:
    """Package version plus the source revision when run from a git checkout."""
    try:
        rev = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            check=False,
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        suffix = "+g" + rev.stdout.strip() if rev.returncode == 0 and rev.stdout.strip() else ""
    except (OSError, subprocess.SubprocessError):
        suffix = ""
    return f"cliffordlab {__version__}{suffix}"


def run_experiment(config: ExperimentConfig, write: bool = True) -> Report:
    """Validate, dispatch, and (optionally) write the report and curves."""
    cfg = config.validated()
    exp = EXPERIMENTS[cfg.experiment]
    report = Report(cfg, version_string())
    t0 = time.perf_counter()
    exp.run(cfg.params, report, cfg)
    report.wall_clock = time.perf_counter() - t0
    if write:
        target = cfg.report if exp.out_kind != "report" else (cfg.report or cfg.out)
        if target:
            report.write(target)
        if cfg.curves:
            report.write_curves(cfg.curves)
    return report


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


# --- algebra -------------------------------------------------------------------


def _hamilton(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Quaternion product on (w, i, j, k) rows, written out by hand."""
    a1, b1, c1, d1 = p.T
    a2, b2, c2, d2 = q.T
    return np.stack(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ],
        axis=1,
    )


@_register(
    "algebra-check",
    "exact algebra laws on integer coefficients, ulp bounds on float vectors, C(1) = C and C(2) = H",
    [
        Param("n", int, 3, "dimension", f"1 <= n <= {MAX_DIM}", lambda v: 1 <= v <= MAX_DIM),
        SEED,
        Param("trials", int, 1000, "random instances per law", ">= 1000", lambda v: v >= 1000),
    ],
)
def _algebra_check(p: dict, rep: Report, cfg=None) -> None:
    n, trials = p["n"], p["trials"]
    rng = _rng(p["seed"], 0)
    a, b, c = (rng.integers(-5, 6, size=(trials, 1 << n)).astype(float) for _ in range(3))
    ab_c = gp_arrays(gp_arrays(a, b, n), c, n)
    a_bc = gp_arrays(a, gp_arrays(b, c, n), n)
    rep.check("associativity_integer_max_abs", float(np.abs(ab_c - a_bc).max()), 0.0, "==")
    dist = gp_arrays(a, b + c, n) - gp_arrays(a, b, n) - gp_arrays(a, c, n)
    rep.check("distributivity_integer_max_abs", float(np.abs(dist).max()), 0.0, "==")

    gens = vectors_to_arrays(np.eye(n), n)
    worst_anti, worst_sq = 0.0, 0.0
    for j in range(n):
        sq = gp_arrays(gens[j], gens[j], n)
        sq[0] += 1.0
        worst_sq = max(worst_sq, float(np.abs(sq).max()))
        for k in range(n):
            if j != k:
                s = gp_arrays(gens[j], gens[k], n) + gp_arrays(gens[k], gens[j], n)
                worst_anti = max(worst_anti, float(np.abs(s).max()))
    rep.check("generator_square_minus_one", worst_sq, 0.0, "==")
    rep.check("anticommutation", worst_anti, 0.0, "==")

    x = rng.normal(size=(trials, n))
    X = vectors_to_arrays(x, n)
    r2 = np.sum(x * x, axis=1)
    sq = gp_arrays(X, X, n)
    sq[:, 0] += r2
    rep.check("vector_square_ulps", float(np.max(np.abs(sq).max(axis=1) / np.spacing(r2))), 4.0)
    inv_ulps = 0.0
    for row in x[: min(trials, 2000)]:
        v = Multivector(n, vectors_to_arrays(row, n))
        w = vector_inverse(row)
        for prod in (v * w, w * v):
            d = prod.coeffs.copy()
            d[0] -= 1.0
            inv_ulps = max(inv_ulps, float(np.abs(d).max() / np.spacing(1.0)))
    rep.check("vector_inverse_two_sided_ulps", inv_ulps, 4.0)

    pairs = max(trials, 10_000)
    zi = rng.integers(-1000, 1001, size=(pairs, 4)).astype(float)
    cp = gp_arrays(zi[:, :2], zi[:, 2:], 1)
    ref = (zi[:, 0] + 1j * zi[:, 1]) * (zi[:, 2] + 1j * zi[:, 3])
    rep.check("complex_isomorphism_integer_max_abs", float(np.abs(cp - np.stack([ref.real, ref.imag], 1)).max()), 0.0, "==")
    # e1 -> i, e2 -> j, e12 -> k; blade order in C(2) is (1, e1, e2, e12)
    qa = rng.integers(-100, 101, size=(pairs, 4)).astype(float)
    qb = rng.integers(-100, 101, size=(pairs, 4)).astype(float)
    qp = gp_arrays(qa, qb, 2)
    rep.check("quaternion_isomorphism_integer_max_abs", float(np.abs(qp - _hamilton(qa, qb)).max()), 0.0, "==")
    rep.results = {"n": n, "trials": trials, "isomorphism_pairs": pairs, "sign_table_nonzero": int(np.count_nonzero(sign_table(n)))}


# --- grid calculus -------------------------------------------------------------


def _random_poly(rng: np.random.Generator, n: int, degree: int):
    """Random multivector polynomial with all monomials up to ``degree``."""
    exps = [e for e in np.ndindex(*([degree + 1] * n)) if sum(e) <= degree]
    coef = rng.uniform(-1.0, 1.0, size=(len(exps), 1 << n))
    exps_a = np.array(exps, dtype=int)

    def f(x):
        mono = np.prod(x[..., None, :] ** exps_a, axis=-1)
        return mono @ coef

    return f


def _smooth_fields(n: int):
    m = np.zeros(1 << n)
    m[[0, 1, 1 << (n - 1), (1 << n) - 1]] = [1.0, -0.5, 0.75, 0.25]

    def sin_field(x):
        w = np.arange(1, n + 1) * 0.9
        return np.sin(x @ w)[..., None] * m

    def gauss_field(x):
        return np.exp(-np.sum(x * x, axis=-1))[..., None] * m[::-1]

    return {"sin": sin_field, "gaussian": gauss_field}


@_register(
    "factorization",
    "D_L^2 f + lap f and D_R^2 f + lap f: rounding-level on polynomials, O(h^2) on smooth fields",
    [
        Param("n", int, 2, "dimension", "2 <= n <= 3", lambda v: 2 <= v <= 3),
        SEED,
        Param("points", int, 0, "nodes per axis on the coarse grid (0: 33 for n=2, 17 for n=3)", ">= 9 or 0", lambda v: v == 0 or v >= 9),
        Param("poly_points", int, 9, "nodes per axis for the polynomial checks", ">= 7", lambda v: v >= 7),
    ],
)
def _factorization(p: dict, rep: Report, cfg=None) -> None:
    n = p["n"]
    pts = p["points"] or (33 if n == 2 else 17)
    rng = _rng(p["seed"], 1, n)
    spec = GridSpec.cube(n, -1.0, 1.0, pts)
    # the stencils are exact on these polynomials at any h, while rounding in
    # nested differences grows like 1/h^2, so a coarse grid isolates the algebra
    pspec = GridSpec.cube(n, -1.0, 1.0, p["poly_points"])
    quad = GridFunction.sample(pspec, _random_poly(rng, n, 2))
    r = factorization_residual(quad)
    rep.check("quadratic_left_ulps", r.left / np.spacing(r.scale), 1e3)
    rep.check("quadratic_right_ulps", r.right / np.spacing(r.scale), 1e3)

    cubic = GridFunction.sample(pspec, _random_poly(rng, n, 3))
    dl = dirac(dirac(cubic, "left"), "left").values
    dr = dirac(dirac(cubic, "right"), "right").values
    inner = interior(pspec)
    diff = np.linalg.norm((dl - dr)[inner], axis=-1).max()
    scale = max(np.linalg.norm(dl[inner], axis=-1).max(), np.linalg.norm(dr[inner], axis=-1).max())
    rep.check("cubic_left_square_equals_right_square_ulps", float(diff / np.spacing(scale)), 1e3)

    results = {"grid_points": [pts, 2 * pts - 1], "poly_grid_points": p["poly_points"]}
    for name, fn in _smooth_fields(n).items():
        coarse = factorization_residual(GridFunction.sample(spec, fn))
        fine = factorization_residual(GridFunction.sample(spec.refined(), fn))
        for side in ("left", "right"):
            c, f = getattr(coarse, side), getattr(fine, side)
            ratio = c / f
            rep.check(f"{name}_{side}_doubling_ratio", ratio, [3.5, 4.5], "in")
            results[f"{name}_{side}"] = {"coarse": c, "fine": f, "ratio": ratio}
            rep.curve(f"{name}_{side}", "h", "residual", [(spec.h[0], c), (spec.refined().h[0], f)])
    rep.results = results


@_register(
    "product-rule",
    "discrete Leibniz identities for D_L and D_R on random degree-3 polynomial pairs",
    [
        Param("n", int, 2, "dimension", "2 <= n <= 3", lambda v: 2 <= v <= 3),
        SEED,
        Param("pairs", int, 100, "random polynomial pairs", ">= 100", lambda v: v >= 100),
        Param("points", int, 9, "nodes per axis", ">= 7", lambda v: v >= 7),
    ],
)
def _product_rule(p: dict, rep: Report, cfg=None) -> None:
    n = p["n"]
    rng = _rng(p["seed"], 2, n)
    spec = GridSpec.cube(n, -1.0, 1.0, p["points"])
    worst = {"left": 0.0, "right": 0.0}
    for _ in range(p["pairs"]):
        f1 = GridFunction.sample(spec, _random_poly(rng, n, 3))
        f2 = GridFunction.sample(spec, _random_poly(rng, n, 3))
        for side in worst:
            r = product_rule_residual(f1, f2, side)
            worst[side] = max(worst[side], r.residual / np.spacing(r.scale))
    # f1 = x_1 e_1, f2 = x_2 e_2
    e1, e2 = np.eye(1 << n)[1], np.eye(1 << n)[2]
    g1 = GridFunction.sample(spec, lambda x: x[..., :1] * e1)
    g2 = GridFunction.sample(spec, lambda x: x[..., 1:2] * e2)
    for side in worst:
        rep.check(f"random_cubic_pairs_{side}_ulps", worst[side], 1e3)
        r = product_rule_residual(g1, g2, side)
        rep.check(f"x1e1_x2e2_{side}_ulps", r.residual / np.spacing(max(r.scale, EPS)), 1e3)
    rep.results = {"n": n, "pairs": p["pairs"], "worst_ulps": worst}


# --- cauchy kernel -------------------------------------------------------------


@_register(
    "fundamental-solution",
    "E(x) = x / |x|^n: homogeneity, oddness, discrete monogenicity order, gradient-of-potential constant",
    [
        Param("dims", str, "1,2,3", "comma-separated dimensions", "each in 1..3", lambda v: bool(_dims(v)) and all(1 <= d <= 3 for d in _dims(v))),
        SEED,
        Param("points", int, 1000, "random points per check", ">= 1000", lambda v: v >= 1000),
    ],
)
def _fundamental_solution(p: dict, rep: Report, cfg=None) -> None:
    results = {}
    for n in _dims(p["dims"]):
        rng = _rng(p["seed"], 3, n)
        x = rng.normal(size=(p["points"], n))
        t = rng.uniform(0.1, 10.0, size=(p["points"], 1))
        lhs = kernel_vectors(t * x, precise=True)
        # oracle side in extended precision, rounded once
        rhs = (np.longdouble(1) * t ** np.longdouble(1 - n) * kernel_vectors(x, precise=True)).astype(float)
        scale = np.abs(rhs).max(axis=1)
        hom = float(np.max(np.abs(lhs - rhs).max(axis=1) / np.spacing(scale)))
        rep.check(f"n{n}_homogeneity_ulps", hom, 4.0)
        ex = kernel_vectors(x, precise=True)
        odd = float(np.max(np.abs(kernel_vectors(-x, precise=True) + ex).max(axis=1) / np.spacing(np.abs(ex).max(axis=1))))
        rep.check(f"n{n}_oddness_ulps", odd, 4.0)
        pc = gradient_of_potential_check(n, rng.uniform(-2.0, 2.0, size=(p["points"], n)))
        rep.check(f"n{n}_potential_constant_spread", pc.defect, 1e-10)
        entry = {"homogeneity_ulps": hom, "oddness_ulps": odd, "potential_ratio": pc.ratio, "potential_spread": pc.defect}
        if n >= 2:
            # compare on the coarse nodes only: the defect grows like r^-(n+2) near
            # the origin, so letting the fine grid add closer nodes hides the order
            defects = []
            for step, pts in enumerate((41, 81) if n == 2 else (21, 41)):
                spec = GridSpec.cube(n, -1.0, 1.0, pts)
                E = GridFunction.sample(spec, lambda y, n=n: vectors_to_arrays(kernel_vectors(y), n))
                off = np.any(np.indices(spec.shape) % 2 == 1, axis=0) if step else np.zeros(spec.shape, dtype=bool)
                excl = off | (np.linalg.norm(spec.nodes(), axis=-1) <= 0.25)
                defects.append([monogenicity_defect(E, side, exclude=excl) for side in ("left", "right")])
            for k, side in enumerate(("left", "right")):
                order = math.log2(defects[0][k] / defects[1][k])
                rep.check(f"n{n}_dirac_defect_order_{side}", order, 1.8, ">=")
                entry[f"dirac_defect_{side}"] = [defects[0][k], defects[1][k]]
                entry[f"dirac_order_{side}"] = order
        results[f"n{n}"] = entry
    rep.results = results


def _real_probes(n: int, count: int, seed: int):
    rng = _rng(seed, 4, n)
    probes = []
    for _ in range(count):
        radius = rng.uniform(0.6, 0.9)
        center = rng.uniform(-0.1, 0.1, n)
        coeff = np.zeros(1 << n)
        coeff[0] = 2.0 + rng.normal()
        linear = np.zeros((n, 1 << n))
        linear[:, 0] = 0.5 * rng.normal(size=n)
        f = TestFunction.bump(n, center, radius, coeff, linear)
        probes.append((f, center + rng.uniform(-0.25, 0.25, n) * radius))
    return probes


DEFAULT_CELLS = {1: 4096, 2: 256, 3: 48}
CLOSED_FORM = {1: -0.5, 2: -1.0 / (2.0 * math.pi), 3: -1.0 / (4.0 * math.pi)}


@_register(
    "estimate-cn",
    "estimate the reproducing-formula constant c_n from random bump probes",
    [
        Param("n", int, 2, "dimension", "1 <= n <= 3", lambda v: 1 <= v <= 3),
        Param("cells", int, 0, "cells per axis at reference resolution (0: 4096 / 256 / 48 for n = 1 / 2 / 3)", "0 or even >= 8", lambda v: v == 0 or (v >= 8 and v % 2 == 0)),
        Param("probes", int, 5, "probe (test function, point) pairs", ">= 3", lambda v: v >= 3),
        SEED,
        SIDE,
    ],
)
def _estimate_cn(p: dict, rep: Report, cfg=None) -> None:
    n, side = p["n"], p["side"]
    cells = p["cells"] or DEFAULT_CELLS[n]
    probes = default_probes(n, p["probes"], p["seed"])
    coarse = estimate_cn(n, probes, reference_quad(n, cells // 2), side)
    ref = estimate_cn(n, probes, reference_quad(n, cells), side)
    extrap = (4.0 * ref.value - coarse.value) / 3.0
    rep.check("relative_spread_at_reference", ref.relative_spread, 1e-2)
    rep.check("spread_shrinks_under_refinement", ref.spread, coarse.spread, "<=")
    if n == 1:
        rep.check("c1_vs_integration_by_parts_oracle", abs(ref.value + 0.5), 1e-3)
    rel_cf = abs(extrap - CLOSED_FORM[n]) / abs(CLOSED_FORM[n])
    rep.check("extrapolated_vs_minus_one_over_sphere_area_relative", rel_cf, 1e-3)

    # real-valued probes: left and right forms must agree
    quad = reference_quad(n, cells)
    worst = 0.0
    for f, x in _real_probes(n, p["probes"], p["seed"]):
        q = align_quad(quad, x)
        L = cauchy_reproduce(f, x, "left", q).coeffs
        R = cauchy_reproduce(f, x, "right", q).coeffs
        worst = max(worst, float(np.linalg.norm(L - R) / np.linalg.norm(L)))
    rep.check("left_right_agreement_real_probes_relative", worst, 2e-2)
    rep.curve("probe_spread", "cells", "relative_spread", [(cells // 2, coarse.relative_spread), (cells, ref.relative_spread)])
    rep.results = {
        "n": n,
        "side": side,
        "value": ref.value,
        "extrapolated": extrap,
        "closed_form_hypothesis": CLOSED_FORM[n],
        "coarse": coarse.to_json(),
        "reference": ref.to_json(),
        "left_right_relative_gap": worst,
    }


def lattice_box(points: np.ndarray, delta: float, h: float) -> GridSpec:
    """Cube-celled box covering the delta-neighbourhood with points[0] at a cell center."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[1]
    anchor = pts[0]
    below = np.ceil((anchor - (pts.min(axis=0) - delta)) / h - 0.5) + 2
    lo = anchor - (below + 0.5) * h
    cells = int(np.max(np.ceil((pts.max(axis=0) + delta - lo) / h))) + 2
    return GridSpec(n, tuple(lo), tuple(lo + cells * h), cells + 1)


def _load_set(name: str, depth: int) -> SampledSet:
    if name == "fat-cantor":
        return generate_fat_cantor(lambda k: 0.25 * 0.25**k, depth).sampled
    if name not in PRESETS:
        raise ConfigError(f"set: unknown set {name!r}; known: {', '.join(PRESETS + ('fat-cantor',))}")
    return generate_ifs(name, depth)


@_register(
    "approx-null",
    "uniform approximation of f on a measure-zero set by functions monogenic near it, at (delta, rho) and (delta/2, rho/2)",
    [
        Param("set", str, "cantor2d", "IFS preset or fat-cantor", "a known set name"),
        Param("depth", int, 6, "generation depth", "1 <= depth <= 8", lambda v: 1 <= v <= 8),
        Param("f", str, "x1", "values on A, e.g. x1 or 2*x1*e12", "a coefficient expression"),
        Param("delta", float, 0.04, "mollifier support radius", "> 0", _positive),
        Param("rho", float, 0.0005, "excision radius", "0 < rho < delta", _positive),
        Param("spacing", float, 0.0, "cell size (0: 3^-depth for Cantor presets, delta/16 otherwise)", ">= 0", lambda v: v >= 0),
        Param("refine", bool, True, "also run at (delta/2, rho/2)", "boolean"),
        Param("cn_cells", int, 64, "cells per axis for the c_n estimate", "even >= 16", lambda v: v >= 16 and v % 2 == 0),
        SEED,
        SIDE,
    ],
)
def _approx_null(p: dict, rep: Report, cfg=None) -> None:
    if p["rho"] >= p["delta"]:
        raise ConfigError(f"rho={p['rho']!r} violates: 0 < rho < delta")
    A = _load_set(p["set"], p["depth"])
    n = A.n
    if not A.meta.get("measure_zero", False):
        raise PositiveMeasureError(f"set {p['set']!r}: {MEASURE_ZERO_REFUSAL}")
    fA = parse_coefficient(p["f"], n)(A.points)
    h = p["spacing"] or (3.0 ** -p["depth"] if p["set"].startswith("cantor") else p["delta"] / 16)
    probes = default_probes(n, 5, p["seed"])
    coarse_cn = estimate_cn(n, probes, reference_quad(n, p["cn_cells"]))
    fine_cn = estimate_cn(n, probes, reference_quad(n, 2 * p["cn_cells"]))
    cn = (4.0 * fine_cn.value - coarse_cn.value) / 3.0
    runs = [(p["delta"], p["rho"])] + ([(p["delta"] / 2, p["rho"] / 2)] if p["refine"] else [])
    out = []
    for k, (delta, rho) in enumerate(runs):
        approx = approximate_on_null_set(A, fA, delta, rho, lattice_box(A.points, delta, h), cn, p["side"])
        rel_defect = approx.defect / approx.magnitude
        rep.check(f"run{k}_defect_relative_to_magnitude", rel_defect, 1e-3)
        out.append({"delta": delta, "rho": rho, "sup_error": approx.sup_error, "defect": approx.defect, "magnitude": approx.magnitude, "info": approx.info})
    if p["refine"]:
        rep.check("refined_over_coarse_sup_error", out[1]["sup_error"] / out[0]["sup_error"], 0.6)
    rep.curve("sup_error", "delta", "sup_error", [(r["delta"], r["sup_error"]) for r in out])
    rep.results = {"set": p["set"], "depth": p["depth"], "points": len(A), "cell_size": h, "cn_estimate": cn, "runs": out}


# --- sets ----------------------------------------------------------------------


@_register(
    "fractal-gen",
    "generate an IFS point cloud; --out receives the CSV (metadata in a JSON sidecar)",
    [
        Param("preset", str, "gasket", f"one of {', '.join(PRESETS)}", "a known preset", lambda v: v in PRESETS),
        Param("depth", int, 6, "composition depth", ">= 0", lambda v: v >= 0),
    ],
    out_kind="points",
)
def _fractal_gen(p: dict, rep: Report, cfg=None) -> None:
    A = generate_ifs(p["preset"], p["depth"])
    maps = len(preset(p["preset"]).maps)
    rep.check("point_count", len(A), maps ** p["depth"], "==")
    rep.check("min_gap_positive", A.min_gap() if len(A) > 1 else 1.0, 0.0, ">=")
    if cfg is not None and cfg.out:
        write_points_csv(A, cfg.out)
    rep.results = {
        "preset": p["preset"],
        "n": A.n,
        "depth": p["depth"],
        "count": len(A),
        "min_gap": A.min_gap() if len(A) > 1 else None,
        "bounds": [A.points.min(axis=0), A.points.max(axis=0)],
        "meta": A.meta,
    }


def _cloud(p: dict) -> SampledSet:
    if p["in"]:
        return read_points_csv(p["in"])
    if p["cloud"] == "line":
        return line_cloud(p["count"])
    if p["cloud"] == "circle":
        return circle_cloud(p["count"])
    if p["cloud"] in PRESETS:
        return generate_ifs(p["cloud"], p["depth"])
    raise ConfigError(f"cloud: unknown cloud {p['cloud']!r}; use line, circle or an IFS preset")


@_register(
    "rigidity",
    "per-point rank of chord directions: where values on A determine the differential",
    [
        Param("in", str, "", "CSV point cloud (overrides cloud)", "readable file or empty"),
        Param("cloud", str, "gasket", "line, circle, or an IFS preset", "a known cloud"),
        Param("depth", int, 6, "IFS depth", ">= 0", lambda v: v >= 0),
        Param("count", int, 200, "points for line / circle", ">= 3", lambda v: v >= 3),
        Param("radius", float, 0.0, "neighbour radius (0: twice the minimum gap)", ">= 0", lambda v: v >= 0),
        Param("sigma_min", float, 0.0, "singular value threshold relative to the largest (0: 2 r / diameter)", "0 <= sigma_min < 1", lambda v: 0 <= v < 1),
        Param("expect_determined", float, -1.0, "expected determined fraction (-1: no check)", "-1 or in [0, 1]", lambda v: v == -1 or 0 <= v <= 1),
    ],
)
def _rigidity(p: dict, rep: Report, cfg=None) -> None:
    A = _cloud(p)
    r = p["radius"] or 2.0 * A.min_gap()
    rr = rigidity_report(A, r, p["sigma_min"] or None)
    summary = rr.summary()
    if p["expect_determined"] >= 0:
        rep.check("fraction_determined", rr.fraction_determined, p["expect_determined"], "==")
    if A.meta.get("generator") == "circle":
        normals = A.points / np.linalg.norm(A.points, axis=1, keepdims=True)
        rep.check("circle_rank_is_n_minus_1", int(rr.rank.min() == rr.rank.max() == A.n - 1), 1, "==")
        align = [abs(float(fd.reshape(-1, A.n)[0] @ nu)) for fd, nu in zip(rr.free_directions, normals) if len(fd) == 1]
        worst = 1.0 - min(align) if align else 1.0
        rep.check("free_direction_is_normal", worst, 1e-9)
        summary["free_normal_misalignment"] = worst
    summary["cloud"] = p["in"] or p["cloud"]
    summary["n"] = A.n
    rep.results = summary


@_register(
    "jet-integrate",
    "integrate df = B(x) dx (or dx B(x)) along a chord-arc curve; --out receives the jet JSON",
    [
        Param("curve", str, "", "CSV curve (empty: sawtooth Lipschitz graph)", "readable file or empty"),
        Param("slope", float, 1.0, "sawtooth slope", "> 0", _positive),
        Param("samples", int, 400, "samples for the generated curve", ">= 16", lambda v: v >= 16),
        Param("coeff", str, "1", "B as an expression in x1..xn and blades", "a coefficient expression"),
        SIDE,
        Param("radius_factor", float, 2.5, "defect radius in units of the longest segment", ">= 1", lambda v: v >= 1),
    ],
    out_kind="jet",
)
def _jet_integrate(p: dict, rep: Report, cfg=None) -> None:
    def build(samples: int):
        if p["curve"]:
            return curve_from_points(read_points_csv(p["curve"]).points)
        return lipschitz_graph_curve(sawtooth(p["slope"]), p["slope"], samples)

    curve = build(p["samples"])
    n = curve.n
    B = parse_coefficient(p["coeff"], n)
    jet = integrate_prescribed_differentials(curve, B, p["side"])
    seg = float(np.linalg.norm(np.diff(curve.points, axis=0), axis=1).max())
    defect = whitney_compatibility_defect(jet, p["radius_factor"] * seg)
    res = {"n": n, "samples": len(curve.points), "chord_arc": chord_arc_check(curve), "defect": defect, "constant_B": B.constant}
    rep.check("chord_arc_finite", int(math.isfinite(res["chord_arc"])), 1, "==")
    if B.constant:
        Bc = np.broadcast_to(B(curve.points[:1])[0], (len(curve.points), 1 << n))
        d = vectors_to_arrays(curve.points - curve.points[0], n)
        ref = jet.values[0] + (gp_arrays(Bc, d, n) if p["side"] == "left" else gp_arrays(d, Bc, n))
        ulps = float(np.abs(jet.values - ref).max() / np.spacing(max(np.abs(ref).max(), EPS)))
        rep.check("constant_B_affine_ulps", ulps, 8.0)
        res["affine_ulps"] = ulps
    elif not p["curve"]:
        fine = build(2 * p["samples"])
        jf = integrate_prescribed_differentials(fine, B, p["side"])
        seg_f = float(np.linalg.norm(np.diff(fine.points, axis=0), axis=1).max())
        df = whitney_compatibility_defect(jf, p["radius_factor"] * seg_f)
        rep.check("defect_ratio_under_doubling", df / defect, [0.35, 0.65], "in")
        res["defect_doubled"] = df
        rep.curve("whitney_defect", "samples", "defect", [(len(curve.points), defect), (len(fine.points), df)])
    if cfg is not None and cfg.out:
        Path(cfg.out).write_text(json.dumps(_plain({"n": n, "side": p["side"], "coeff": p["coeff"], "jet": jet.to_json()}), sort_keys=True) + "\n")
    rep.results = res


# --- commutator ----------------------------------------------------------------


def _commutes_with_vectors(beta: np.ndarray, n: int) -> bool:
    gens = vectors_to_arrays(np.eye(n), n)
    return all(np.array_equal(gp_arrays(g, beta, n), gp_arrays(beta, g, n)) for g in gens)


@_register(
    "commutator",
    "divided-difference kernels (b(x)-b(y))(x-y)^-1 and mirror on random pairs",
    [
        Param("b", str, "affine-left:beta=e1", "coefficient field name:key=val,...", "a known field"),
        Param("n", int, 3, "dimension", f"1 <= n <= {MAX_DIM}", lambda v: 1 <= v <= MAX_DIM),
        Param("trials", int, 1000, "random pairs", ">= 1000", lambda v: v >= 1000),
        SEED,
    ],
)
def _commutator(p: dict, rep: Report, cfg=None) -> None:
    n = p["n"]
    try:
        b = parse_field(p["b"], n)
    except ValueError as exc:
        raise ConfigError(f"b: {exc}") from None
    x, y = random_pairs(n, p["trials"], p["seed"])
    ql, qr = left_quotient(b, x, y), right_quotient(b, x, y)
    diff = b.diff(x, y)
    d = vectors_to_arrays(x - y, n)
    back = gp_arrays(ql, d, n)
    scale = np.maximum(np.abs(diff).max(axis=1), EPS)
    book = float(np.max(np.abs(back - diff).max(axis=1) / np.spacing(scale)))
    rep.check("bookkeeping_left_quotient_times_difference_ulps", book, 8.0)
    res = {"field": b.tag, "n": n, "trials": p["trials"], "bookkeeping_ulps": book}
    if b.tag == "affine-left":
        beta = b.params["beta"]
        dev = float(np.abs(ql - beta).max() / np.spacing(max(np.abs(beta).max(), EPS)))
        rep.check("affine_left_quotient_is_beta_ulps", dev, 8.0)
        res["beta_deviation_ulps"] = dev
    if b.real:
        gap = float(np.max(np.abs(ql - qr).max(axis=1) / np.spacing(np.maximum(np.abs(ql).max(axis=1), EPS))))
        rep.check("real_b_left_equals_right_ulps", gap, 8.0)
        res["left_right_ulps"] = gap
    if "beta" in b.params:
        beta = b.params["beta"]
        w = noncommutativity_witness(affine_right(n, b.params["alpha"], beta), p["trials"], p["seed"])
        expected = not _commutes_with_vectors(beta, n)
        rep.check("witness_found_iff_beta_not_central", int(w is not None), int(expected), "==")
        res["witness"] = None if w is None else {"x": w.x, "y": w.y, "quotient": w.quotient, "deviation": w.deviation}
    for side, fam in (("left", b.left_diff), ("right", b.right_diff)):
        if fam is None:
            continue
        x0 = np.zeros(n)
        x0[0] = 0.5
        u = np.ones(n) if b.domain == "R^n" else np.eye(n)[0]
        if b.domain == "R^n":
            x0 = np.linspace(0.5, -0.3, n)
        dc = diagonal_convergence(b, x0, u, side)
        res[f"diagonal_{side}"] = {"slope": dc.slope, "constant": dc.constant, "max_error": float(dc.errors.max())}
    rep.results = res


# --- hyperplane extension ------------------------------------------------------


@_register(
    "hyperplane-extend",
    "monogenic extension of linear data from a hyperplane; Dirac defect, restriction, uniqueness",
    [
        Param("dims", str, "2,3,4", "comma-separated dimensions", "each in 2..4", lambda v: bool(_dims(v)) and all(2 <= d <= 4 for d in _dims(v))),
        Param("trials", int, 1000, "random (lambda, H) instances per dimension", ">= 1000", lambda v: v >= 1000),
        SEED,
    ],
)
def _hyperplane_extend(p: dict, rep: Report, cfg=None) -> None:
    results = {}
    for n in _dims(p["dims"]):
        rng = _rng(p["seed"], 5, n)
        worst = {"left": 0.0, "right": 0.0}
        exact = True
        unique = 0
        premise = 0
        for _ in range(p["trials"]):
            lam = rng.normal(size=(n - 1, 1 << n))
            H = Hyperplane.from_normal(rng.normal(size=n))
            Q, _ = np.linalg.qr(rng.normal(size=(n - 1, n - 1)))
            for side in worst:
                ext = extend_from_hyperplane(lam, H, side)
                defect = dirac_of_linear_map(ext, side).max_abs()
                worst[side] = max(worst[side], defect / np.spacing(max(dirac_scale(ext), EPS)))
                exact &= bool(np.array_equal(ext.images[: n - 1], lam))
                # rebuild from the values on a rotated tangent basis of the same plane
                H2 = Hyperplane(n, H.normal, Q @ H.tangents)
                other = extend_from_hyperplane([ext.apply(u) for u in H2.tangents], H2, side)
                t1 = np.array([ext.apply(u) for u in H.tangents])
                t2 = np.array([other.apply(u) for u in H.tangents])
                tol = tangent_tolerance(ext, other, H)
                premise += int(np.max(np.abs(t1 - t2)) <= tol)
                unique += int(hyperplane_uniqueness_check(ext, other, H, side))
        total = 2 * p["trials"]
        for side in worst:
            rep.check(f"n{n}_{side}_dirac_defect_ulps", worst[side], 8.0)
        rep.check(f"n{n}_restriction_exact", int(exact), 1, "==")
        rep.check(f"n{n}_uniqueness_passes", unique, total, "==")
        rep.check(f"n{n}_uniqueness_premise_held", premise, total, "==")
        results[f"n{n}"] = {"defect_ulps": worst, "uniqueness_passes": unique, "premise_held": premise, "instances": total}
    rep.results = results


def list_experiments() -> dict:
    return {k: EXPERIMENTS[k].schema() for k in sorted(EXPERIMENTS)}
