"""Point-cloud generators for self-similar sets, fat Cantor sets and Lipschitz graphs.

A depth-d cloud is the image of a seed point under every length-d composition
of the IFS maps, ordered lexicographically by composition word (outermost map
first).
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

POINT_BUDGET = 2**22


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityMap:
    scale: float
    offset: np.ndarray
    rotation: np.ndarray | None = None

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        out = pts if self.rotation is None else pts @ self.rotation.T
        return self.scale * out + self.offset


@dataclass(frozen=True)
class IfsSystem:
    n: int
    maps: tuple[SimilarityMap, ...]
    seed: np.ndarray
    name: str = "custom"

    def __post_init__(self) -> None:
        if len(self.maps) < 2:
            raise ValueError("an IFS needs at least two maps")
        if any(not 0 < m.scale < 1 for m in self.maps):
            raise ValueError("all IFS scales must lie in (0, 1)")


@dataclass
class SampledSet:
    n: int
    points: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    def min_gap(self) -> float:
        d, _ = cKDTree(self.points).query(self.points, k=2)
        return float(d[:, 1].min())

    def diameter(self) -> float:
        from scipy.spatial.distance import pdist

        pts = self.points
        if len(pts) > 4096:
            from scipy.spatial import ConvexHull

            if self.n >= 2:
                pts = pts[ConvexHull(pts).vertices]
            else:
                return float(pts.max() - pts.min())
        return float(pdist(pts).max()) if len(pts) > 1 else 0.0

    def index_of(self, p, tol: float = 1e-12) -> int:
        d, i = cKDTree(self.points).query(np.asarray(p, dtype=float))
        if d > tol:
            raise KeyError(f"point {p!r} is not in the set")
        return int(i)


# flags per preset: (measure_zero, totally_disconnected, rectifiably_connected)
_FLAGS = {
    "cantor1d": (True, True, False),
    "cantor2d": (True, True, False),
    "gasket": (True, False, True),
    "carpet": (True, False, True),
    "menger": (True, False, True),
    "koch": (True, False, False),
    "fat_cantor": (False, True, False),
}

_SQ3 = math.sqrt(3.0)


def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def preset(name: str) -> IfsSystem:
    """Built-in systems; seeds are cell centers (koch: the left endpoint)."""
    third = 1.0 / 3.0
    if name == "cantor1d":
        maps = [SimilarityMap(third, np.array([o])) for o in (0.0, 2 * third)]
        return IfsSystem(1, tuple(maps), np.array([0.5]), name)
    if name == "cantor2d":
        maps = [SimilarityMap(third, np.array([a, b])) for a in (0.0, 2 * third) for b in (0.0, 2 * third)]
        return IfsSystem(2, tuple(maps), np.array([0.5, 0.5]), name)
    if name == "gasket":
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, _SQ3 / 2]])
        maps = [SimilarityMap(0.5, 0.5 * v) for v in verts]
        return IfsSystem(2, tuple(maps), verts.mean(axis=0), name)
    if name == "carpet":
        maps = [SimilarityMap(third, np.array([i * third, j * third])) for i in range(3) for j in range(3) if (i, j) != (1, 1)]
        return IfsSystem(2, tuple(maps), np.array([0.5, 0.5]), name)
    if name == "menger":
        maps = [
            SimilarityMap(third, np.array([i, j, k]) * third)
            for i in range(3)
            for j in range(3)
            for k in range(3)
            if (i == 1) + (j == 1) + (k == 1) <= 1
        ]
        return IfsSystem(3, tuple(maps), np.array([0.5, 0.5, 0.5]), name)
    if name == "koch":
        maps = [
            SimilarityMap(third, np.array([0.0, 0.0])),
            SimilarityMap(third, np.array([third, 0.0]), _rot(math.pi / 3)),
            SimilarityMap(third, np.array([0.5, _SQ3 / 6]), _rot(-math.pi / 3)),
            SimilarityMap(third, np.array([2 * third, 0.0])),
        ]
        return IfsSystem(2, tuple(maps), np.array([0.0, 0.0]), name)
    raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")


PRESETS = ("cantor1d", "cantor2d", "gasket", "carpet", "menger", "koch")

PRESET_DIM = {"cantor1d": 1, "cantor2d": 2, "gasket": 2, "carpet": 2, "menger": 3, "koch": 2}


def generate_ifs(system: IfsSystem | str, depth: int, n: int | None = None, budget: int = POINT_BUDGET) -> SampledSet:
    if isinstance(system, str):
        system = preset(system)
    if n is not None and n != system.n:
        raise ValueError(f"preset {system.name!r} lives in R^{system.n}, not R^{n}")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    m = len(system.maps)
    if m**depth > budget:
        raise BudgetError(f"{m}^{depth} points exceeds the budget of {budget}")
    pts = np.asarray(system.seed, dtype=float).reshape(1, system.n)
    for _ in range(depth):
        pts = np.concatenate([f(pts) for f in system.maps])
    mz, td, rc = _FLAGS.get(system.name, (True, False, False))
    meta = {
        "generator": system.name,
        "depth": depth,
        "maps": m,
        "measure_zero": mz,
        "totally_disconnected": td,
        "rectifiably_connected": rc,
        "seed": None,
    }
    return SampledSet(system.n, pts, meta)


@dataclass
class FatCantor:
    intervals: list[tuple[Fraction, Fraction]]
    remaining_length: Fraction
    sampled: SampledSet


def _as_fraction(v) -> Fraction:
    if isinstance(v, float):
        return Fraction(v).limit_denominator(10**15)
    return Fraction(v)


def generate_fat_cantor(removal: Sequence | Callable[[int], object], depth: int, relative: bool = False) -> FatCantor:
    """Remove an open middle interval from every interval, ``depth`` rounds.

    ``removal[k-1]`` (or ``removal(k)``) is the length removed from each
    interval in round k; with ``relative=True`` it is a fraction of that
    interval's length. Arithmetic is exact (``Fraction``).
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    get = removal if callable(removal) else (lambda k: removal[k - 1])
    if not callable(removal) and len(removal) < depth:
        raise ValueError("not enough removal entries for the requested depth")
    intervals = [(Fraction(0), Fraction(1))]
    for k in range(1, depth + 1):
        r = _as_fraction(get(k))
        nxt = []
        for a, b in intervals:
            cut = r * (b - a) if relative else r
            if not 0 <= cut < b - a:
                raise ValueError(f"round {k} removes the whole interval (or a negative amount)")
            mid = (a + b) / 2
            nxt += [(a, mid - cut / 2), (mid + cut / 2, b)]
        intervals = nxt
        if 2 * len(intervals) > POINT_BUDGET:
            raise BudgetError("fat Cantor depth exceeds the point budget")
    remaining = sum((b - a for a, b in intervals), Fraction(0))
    if remaining <= 0:
        raise ValueError("removals exhaust the full measure")
    pts = np.array([[float(v)] for ab in intervals for v in ab])
    meta = {
        "generator": "fat_cantor",
        "depth": depth,
        "measure_zero": False,
        "totally_disconnected": True,
        "rectifiably_connected": False,
        "remaining_length": float(remaining),
        "seed": None,
    }
    return FatCantor(intervals, remaining, SampledSet(1, pts, meta))


@dataclass
class CurveSample:
    n: int
    points: np.ndarray
    arclength: np.ndarray
    chord_arc_constant: float = float("nan")
    # extended-precision prefix sums; arcs are differences of these, rounded once
    arclength_ext: np.ndarray | None = field(default=None, repr=False)


def curve_from_points(points: np.ndarray) -> CurveSample:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("a curve needs at least two points")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(seg == 0):
        raise ValueError("duplicate consecutive points")
    ext = np.concatenate([[np.longdouble(0)], np.cumsum(seg.astype(np.longdouble))])
    curve = CurveSample(pts.shape[1], pts, ext.astype(float), arclength_ext=ext)
    curve.chord_arc_constant = chord_arc_check(curve)
    return curve


def chord_arc_check(curve: CurveSample) -> float:
    """Max over pairs of (arc length between) / (chord length)."""
    pts = curve.points
    s = curve.arclength if curve.arclength_ext is None else curve.arclength_ext
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if len(cKDTree(pts).query_pairs(0.0)):
        raise ValueError("duplicate points give a zero chord")
    best = 1.0
    block = max(1, (1 << 22) // len(pts))
    for i0 in range(0, len(pts) - 1, block):
        i = np.arange(i0, min(i0 + block, len(pts) - 1))
        chord = np.linalg.norm(pts[i, None, :] - pts[None, :, :], axis=-1)
        arc = np.abs(s[i, None] - s[None, :]).astype(float)
        upper = np.arange(len(pts))[None, :] > i[:, None]
        ratio = np.where(upper, arc / np.where(upper, chord, 1.0), 0.0)
        best = max(best, float(ratio.max()))
    return best


def lipschitz_graph_curve(profile: Callable[[np.ndarray], np.ndarray], lipschitz: float, samples: int, interval=(0.0, 1.0)) -> CurveSample:
    """Graph t -> (t, profile(t)) sampled at ``samples`` equispaced t.

    Arc length is the polyline length of the samples.
    """
    if lipschitz < 0 or samples < 2:
        raise ValueError("need M >= 0 and at least two samples")
    t = np.linspace(interval[0], interval[1], samples)
    y = np.asarray(profile(t), dtype=float).reshape(samples, -1)
    if not np.all(np.isfinite(y)):
        raise ValueError("profile returned non-finite values")
    return curve_from_points(np.column_stack([t, y]))


def sawtooth(slope: float, period: float = 0.25) -> Callable[[np.ndarray], np.ndarray]:
    def f(t):
        u = np.mod(t, period) / period
        return slope * period * np.where(u < 0.5, u, 1.0 - u)

    return f


def line_cloud(count: int, direction=(1.0, 0.5), n: int = 2) -> SampledSet:
    """Equally spaced points on a segment through the origin; every chord is parallel."""
    d = np.zeros(n)
    d[: len(direction)] = direction[:n]
    d = d / np.linalg.norm(d)
    t = np.linspace(0.0, 1.0, count)
    return SampledSet(n, t[:, None] * d[None, :], {"generator": "line", "count": count, "measure_zero": True})


def circle_cloud(count: int, radius: float = 1.0) -> SampledSet:
    """Equally spaced points on a circle in R^2."""
    th = 2 * np.pi * np.arange(count) / count
    pts = radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    return SampledSet(2, pts, {"generator": "circle", "count": count, "radius": radius, "measure_zero": True})


def neighbor_graph(points: np.ndarray, radius: float):
    tree = cKDTree(points)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    w = np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1)
    m = len(points)
    return coo_matrix((w, (pairs[:, 0], pairs[:, 1])), shape=(m, m)).tocsr()


@dataclass
class PathResult:
    indices: list[int]
    length: float


def rectifiable_path(setA: SampledSet, p, q, radius: float) -> PathResult | None:
    """Shortest path from p to q in the graph joining points at distance <= radius."""
    i, j = setA.index_of(p), setA.index_of(q)
    g = neighbor_graph(setA.points, radius)
    dist, pred = dijkstra(g, directed=False, indices=i, return_predecessors=True)
    if not np.isfinite(dist[j]):
        return None
    path = [j]
    while path[-1] != i:
        path.append(int(pred[path[-1]]))
    return PathResult(path[::-1], float(dist[j]))


def clusters(points: np.ndarray, scale: float) -> np.ndarray:
    """Single-linkage cluster labels at gap scale ``scale``."""
    _, labels = connected_components(neighbor_graph(points, scale), directed=False)
    return labels


@dataclass
class LocallyConstant:
    values: np.ndarray
    labels: np.ndarray
    sup_error: float


def approximate_locally_constant(setA: SampledSet, fA: np.ndarray, scale: float, override: bool = False) -> LocallyConstant:
    """Piecewise-constant approximation over single-linkage clusters.

    Each cluster gets the midrange of its values (componentwise), so a single
    cluster carries half the oscillation as its error.
    """
    if not setA.meta.get("totally_disconnected", False) and not override:
        raise ValueError("set is not flagged totally disconnected; pass override=True to proceed anyway")
    f = np.asarray(fA, dtype=float)
    squeeze = f.ndim == 1
    f2 = f[:, None] if squeeze else f
    labels = clusters(setA.points, scale)
    out = np.empty_like(f2)
    for lab in np.unique(labels):
        sel = labels == lab
        out[sel] = 0.5 * (f2[sel].min(axis=0) + f2[sel].max(axis=0))
    err = float(np.linalg.norm(out - f2, axis=1).max())
    return LocallyConstant(out[:, 0] if squeeze else out, labels, err)


def write_points_csv(setA: SampledSet, path: str | Path) -> None:
    """One point per row, coordinates only; metadata goes to a JSON sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for p in setA.points:
            w.writerow([repr(float(v)) for v in p])
    sidecar = dict(setA.meta, n=setA.n, count=len(setA))
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def read_points_csv(path: str | Path) -> SampledSet:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    pts = np.array(rows, dtype=float)
    if pts.ndim != 2 or not len(pts):
        raise ValueError(f"no points in {path}")
    side = path.with_suffix(path.suffix + ".json")
    meta = json.loads(side.read_text()) if side.exists() else {"generator": "file"}
    meta.pop("n", None)
    meta.pop("count", None)
    return SampledSet(pts.shape[1], pts, meta)
