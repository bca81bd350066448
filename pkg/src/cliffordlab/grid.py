"""Finite-difference Dirac operators on uniform grids of C(n)-valued samples.

Partial derivatives use second-order central differences inside the grid and
second-order one-sided stencils on the boundary (``numpy.gradient`` with
``edge_order=2``). All max-norms skip a boundary margin of ``MARGIN`` cells.
"""

from __future__ import annotations

import json
import struct
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algebra import DimensionError, check_dim, gp_arrays

GRID_BUDGET = 2**22
MARGIN = 2
EPS = np.finfo(float).eps

_MAGIC = b"CLGF"
_VERSION = 1


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    n: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    points_per_axis: int

    def __post_init__(self) -> None:
        n = check_dim(self.n)
        lo = tuple(float(v) for v in np.broadcast_to(self.lo, (n,)))
        hi = tuple(float(v) for v in np.broadcast_to(self.hi, (n,)))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if any(b <= a for a, b in zip(lo, hi)):
            raise GridError("need hi > lo on every axis")
        if self.points_per_axis < 5:
            raise GridError("points_per_axis must be at least 5")
        if self.points_per_axis**n > GRID_BUDGET:
            raise GridError(f"{self.points_per_axis}^{n} nodes exceeds the budget of {GRID_BUDGET}")

    @classmethod
    def cube(cls, n: int, lo: float, hi: float, points: int) -> GridSpec:
        return cls(n, (lo,) * n, (hi,) * n, points)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (self.points_per_axis - 1) for a, b in zip(self.lo, self.hi))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.n

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, self.points_per_axis) for a, b in zip(self.lo, self.hi)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def refined(self) -> GridSpec:
        """Same box with the spacing halved."""
        return GridSpec(self.n, self.lo, self.hi, 2 * self.points_per_axis - 1)

    def to_json(self) -> dict:
        return {"n": self.n, "lo": list(self.lo), "hi": list(self.hi), "points_per_axis": self.points_per_axis}

    @classmethod
    def from_json(cls, obj: dict) -> GridSpec:
        return cls(int(obj["n"]), tuple(obj["lo"]), tuple(obj["hi"]), int(obj["points_per_axis"]))


@dataclass(frozen=True, eq=False)
class GridFunction:
    spec: GridSpec
    values: np.ndarray  # shape spec.shape + (2**n,)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        want = self.spec.shape + (1 << self.spec.n,)
        if v.shape != want:
            raise GridError(f"values have shape {v.shape}, expected {want}")
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, spec: GridSpec, fn: Callable[[np.ndarray], np.ndarray]) -> GridFunction:
        """Sample ``fn`` (points ``(..., n)`` -> coefficients ``(..., 2**n)``) at the nodes."""
        return cls(spec, fn(spec.nodes()))

    @classmethod
    def sample_scalar(cls, spec: GridSpec, fn: Callable[[np.ndarray], np.ndarray], blade: int = 0) -> GridFunction:
        vals = np.zeros(spec.shape + (1 << spec.n,))
        vals[..., blade] = fn(spec.nodes())
        return cls(spec, vals)

    def __add__(self, other: GridFunction) -> GridFunction:
        _same_grid(self, other)
        return GridFunction(self.spec, self.values + other.values)

    def __sub__(self, other: GridFunction) -> GridFunction:
        _same_grid(self, other)
        return GridFunction(self.spec, self.values - other.values)

    def times(self, other: GridFunction) -> GridFunction:
        """Nodewise geometric product."""
        _same_grid(self, other)
        return GridFunction(self.spec, gp_arrays(self.values, other.values, self.spec.n))

    def times_const(self, a: np.ndarray, side: str = "right") -> GridFunction:
        a = np.asarray(getattr(a, "coeffs", a), dtype=float)
        if side == "right":
            return GridFunction(self.spec, gp_arrays(self.values, a, self.spec.n))
        return GridFunction(self.spec, gp_arrays(a, self.values, self.spec.n))

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)


def _same_grid(f: GridFunction, g: GridFunction) -> None:
    if f.spec != g.spec:
        raise GridError("grid mismatch")


def _generator(j: int, n: int) -> np.ndarray:
    e = np.zeros(1 << n)
    e[1 << j] = 1.0
    return e


def _check_side(side: str) -> str:
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return side


def partial_derivative(f: GridFunction, axis: int) -> GridFunction:
    """d f / d x_{axis+1}; exact on quadratics up to rounding."""
    n = f.spec.n
    if not 0 <= axis < n:
        raise DimensionError(f"axis {axis} out of range for n={n}")
    if f.spec.points_per_axis < 3:
        raise GridError("need at least 3 nodes per axis")
    d = np.gradient(f.values, f.spec.h[axis], axis=axis, edge_order=2)
    return GridFunction(f.spec, d)


def gradient(f: GridFunction) -> list[GridFunction]:
    return [partial_derivative(f, j) for j in range(f.spec.n)]


def _dirac_from_partials(parts: list[np.ndarray], n: int, side: str) -> np.ndarray:
    # e_j * g only permutes and flips signs, so this stays exact per term
    out = np.zeros_like(parts[0])
    for j, p in enumerate(parts):
        e = _generator(j, n)
        out += gp_arrays(e, p, n) if side == "left" else gp_arrays(p, e, n)
    return out


def dirac(f: GridFunction, side: str = "left") -> GridFunction:
    _check_side(side)
    parts = [partial_derivative(f, j).values for j in range(f.spec.n)]
    return GridFunction(f.spec, _dirac_from_partials(parts, f.spec.n, side))


def dirac_left(f: GridFunction) -> GridFunction:
    """Sum over j of e_j * df/dx_j."""
    return dirac(f, "left")


def dirac_right(f: GridFunction) -> GridFunction:
    """Sum over j of df/dx_j * e_j."""
    return dirac(f, "right")


def _second_difference(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    # one-sided, second order (exact on cubics)
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h**2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def laplacian(f: GridFunction) -> GridFunction:
    if f.spec.points_per_axis < 4:
        raise GridError("need at least 4 nodes per axis")
    total = np.zeros_like(f.values)
    for j, h in enumerate(f.spec.h):
        total += _second_difference(f.values, h, j)
    return GridFunction(f.spec, total)


def interior(spec: GridSpec, margin: int = MARGIN) -> tuple[slice, ...]:
    if spec.points_per_axis <= 2 * margin:
        raise GridError("grid has no interior nodes for this margin")
    return (slice(margin, spec.points_per_axis - margin),) * spec.n


def _max_norm(v: np.ndarray, mask: np.ndarray | None = None) -> float:
    norms = np.linalg.norm(v, axis=-1)
    if mask is not None:
        norms = norms[mask]
    return float(norms.max()) if norms.size else 0.0


@dataclass(frozen=True)
class FactorizationResidual:
    left: float
    right: float
    scale: float  # largest |laplacian| on the interior, for ulp tolerances


def factorization_residual(f: GridFunction, margin: int = MARGIN) -> FactorizationResidual:
    """Interior max of |D_L D_L f + lap f| and |D_R D_R f + lap f|."""
    inner = interior(f.spec, margin)
    lap = laplacian(f).values
    left = dirac_left(dirac_left(f)).values
    right = dirac_right(dirac_right(f)).values
    return FactorizationResidual(
        left=_max_norm((left + lap)[inner]),
        right=_max_norm((right + lap)[inner]),
        scale=max(_max_norm(lap[inner]), _max_norm(left[inner]), _max_norm(right[inner])),
    )


@dataclass(frozen=True)
class ProductRuleResidual:
    residual: float
    scale: float


def product_rule_residual(f1: GridFunction, f2: GridFunction, side: str = "left", margin: int = MARGIN) -> ProductRuleResidual:
    """Discrete check of the Leibniz identities for D_L and D_R.

    Both sides are assembled from the same discrete partials of f1 and f2,
    with d(f1 f2)/dx_j taken as (df1/dx_j) f2 + f1 (df2/dx_j). The residual
    then measures only algebra errors, never truncation.
    Left:  D_L(f1 f2) - [(D_L f1) f2 + sum_j e_j f1 df2/dx_j]
    Right: D_R(f1 f2) - [sum_j df1/dx_j f2 e_j + f1 (D_R f2)]
    """
    _same_grid(f1, f2)
    _check_side(side)
    n = f1.spec.n
    a, b = f1.values, f2.values
    da = [partial_derivative(f1, j).values for j in range(n)]
    db = [partial_derivative(f2, j).values for j in range(n)]
    dprod = [gp_arrays(da[j], b, n) + gp_arrays(a, db[j], n) for j in range(n)]
    lhs = _dirac_from_partials(dprod, n, side)
    rhs = np.zeros_like(lhs)
    if side == "left":
        rhs += gp_arrays(_dirac_from_partials(da, n, "left"), b, n)
        for j in range(n):
            rhs += gp_arrays(gp_arrays(_generator(j, n), a, n), db[j], n)
    else:
        for j in range(n):
            rhs += gp_arrays(gp_arrays(da[j], b, n), _generator(j, n), n)
        rhs += gp_arrays(a, _dirac_from_partials(db, n, "right"), n)
    inner = interior(f1.spec, margin)
    return ProductRuleResidual(_max_norm((lhs - rhs)[inner]), max(_max_norm(lhs[inner]), _max_norm(rhs[inner])))


def product_rule_truncation(f1: GridFunction, f2: GridFunction, side: str = "left", margin: int = MARGIN) -> float:
    """Same identity with D applied to the sampled product directly (O(h^2))."""
    _same_grid(f1, f2)
    n = f1.spec.n
    lhs = dirac(f1.times(f2), side).values
    db = [partial_derivative(f2, j).values for j in range(n)]
    if side == "left":
        rhs = gp_arrays(dirac_left(f1).values, f2.values, n)
        for j in range(n):
            rhs += gp_arrays(gp_arrays(_generator(j, n), f1.values, n), db[j], n)
    else:
        da = [partial_derivative(f1, j).values for j in range(n)]
        rhs = gp_arrays(f1.values, dirac_right(f2).values, n)
        for j in range(n):
            rhs += gp_arrays(gp_arrays(da[j], f2.values, n), _generator(j, n), n)
    return _max_norm((lhs - rhs)[interior(f1.spec, margin)])


def exclusion_mask(spec: GridSpec, exclude) -> np.ndarray:
    """Boolean mask of kept nodes.

    ``exclude`` may be None, a boolean array (True = excluded), a callable on
    node coordinates returning such an array, or ``(center, radius)`` for a
    closed ball.
    """
    if exclude is None:
        return np.ones(spec.shape, dtype=bool)
    if callable(exclude):
        return ~np.asarray(exclude(spec.nodes()), dtype=bool)
    if isinstance(exclude, tuple) and len(exclude) == 2:
        center, radius = exclude
        dist = np.linalg.norm(spec.nodes() - np.asarray(center, dtype=float), axis=-1)
        return dist > radius
    return ~np.asarray(exclude, dtype=bool)


def monogenicity_defect(f: GridFunction, side: str = "left", exclude=None, margin: int = MARGIN) -> float:
    """Max |D f| over interior nodes outside the excluded region."""
    d = dirac(f, side).values
    keep = np.zeros(f.spec.shape, dtype=bool)
    keep[interior(f.spec, margin)] = True
    keep &= exclusion_mask(f.spec, exclude)
    return _max_norm(d, keep)


def save_grid(f: GridFunction, path: str | Path) -> None:
    """Binary container (header + little-endian doubles) plus a JSON sidecar."""
    path = Path(path)
    s = f.spec
    header = _MAGIC + struct.pack("<III", _VERSION, s.n, s.points_per_axis)
    header += struct.pack(f"<{2 * s.n}d", *s.lo, *s.hi)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    sidecar = {"format": "cliffordlab-grid", "version": _VERSION, "spec": s.to_json(), "layout": "row-major nodes, 2**n blade coefficients per node"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_grid(path: str | Path) -> GridFunction:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise GridError("not a grid container")
    version, n, ppa = struct.unpack_from("<III", data, 4)
    if version != _VERSION:
        raise GridError(f"unsupported grid container version {version}")
    off = 16
    bounds = struct.unpack_from(f"<{2 * n}d", data, off)
    off += 16 * n
    spec = GridSpec(n, bounds[:n], bounds[n:], ppa)
    count = ppa**n * (1 << n)
    values = np.frombuffer(data, dtype="<f8", count=count, offset=off)
    if off + 8 * count != len(data):
        raise GridError("grid container has trailing or missing bytes")
    return GridFunction(spec, values.reshape(spec.shape + (1 << n,)).astype(float))

