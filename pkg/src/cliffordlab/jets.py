"""Whitney 1-jets with C(n) values: Dirac of linear maps, hyperplane extension,
compatibility defects, differential rigidity and jet integration along curves."""

from __future__ import annotations

import re
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .algebra import Multivector, check_dim, gp_arrays, vectors_to_arrays
from .fractals import CurveSample, SampledSet, clusters, neighbor_graph

EPS = np.finfo(float).eps


class PreconditionError(ValueError):
    pass


def _generators(n: int) -> np.ndarray:
    return vectors_to_arrays(np.eye(n), n)


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Real-linear map R^n -> C(n) given by the images of an orthonormal frame.

    ``frame`` rows are the frame vectors (None means the standard basis), and
    ``images[k]`` is the image of ``frame[k]``.
    """

    n: int
    images: np.ndarray
    frame: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = check_dim(self.n)
        imgs = np.asarray(getattr(self.images, "coeffs", self.images), dtype=float)
        if imgs.shape != (n, 1 << n):
            raise ValueError(f"need {n} images of length {1 << n}, got shape {imgs.shape}")
        object.__setattr__(self, "images", imgs)
        if self.frame is not None:
            fr = np.asarray(self.frame, dtype=float)
            if fr.shape != (n, n):
                raise ValueError("frame must be n x n")
            object.__setattr__(self, "frame", fr)

    @classmethod
    def from_multivectors(cls, images: list[Multivector]) -> LinearMap:
        return cls(len(images), np.array([m.coeffs for m in images]))

    @classmethod
    def zero(cls, n: int) -> LinearMap:
        return cls(n, np.zeros((n, 1 << n)))

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        coords = v if self.frame is None else v @ self.frame.T
        return coords @ self.images

    def standard_images(self) -> np.ndarray:
        """Images of e_1..e_n."""
        return self.images if self.frame is None else self.frame.T @ self.images

    def standard(self) -> LinearMap:
        return LinearMap(self.n, self.standard_images())

    def frame_vectors(self) -> np.ndarray:
        return np.eye(self.n) if self.frame is None else self.frame

    def __add__(self, other: LinearMap) -> LinearMap:
        return LinearMap(self.n, self.standard_images() + other.standard_images())

    def to_json(self) -> list[dict]:
        return [Multivector(self.n, row).to_dict() for row in self.standard_images()]


def dirac_of_linear_map(lam: LinearMap, side: str = "left") -> Multivector:
    """Sum_k w_k * lam(w_k) (left) or lam(w_k) * w_k (right) over the frame.

    The sum does not depend on which orthonormal frame is used.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    w = vectors_to_arrays(lam.frame_vectors(), lam.n)
    prods = gp_arrays(w, lam.images, lam.n) if side == "left" else gp_arrays(lam.images, w, lam.n)
    return Multivector(lam.n, prods.sum(axis=0))


def dirac_scale(lam: LinearMap) -> float:
    """Magnitude of the terms summed by ``dirac_of_linear_map``; for ulp bounds."""
    return float(np.abs(lam.images).max()) if lam.images.size else 0.0


@dataclass(frozen=True, eq=False)
class Hyperplane:
    n: int
    normal: np.ndarray
    tangents: np.ndarray  # (n-1, n), orthonormal rows

    def __post_init__(self) -> None:
        n = check_dim(self.n)
        nu = np.asarray(self.normal, dtype=float)
        t = np.asarray(self.tangents, dtype=float).reshape(n - 1, n)
        tol = 4 * n * EPS
        if nu.shape != (n,) or abs(np.linalg.norm(nu) - 1.0) > tol:
            raise PreconditionError("hyperplane normal must be a unit vector")
        frame = np.vstack([t, nu])
        if np.max(np.abs(frame @ frame.T - np.eye(n))) > tol:
            raise PreconditionError("tangent basis must be orthonormal and orthogonal to the normal")
        object.__setattr__(self, "normal", nu)
        object.__setattr__(self, "tangents", t)

    @classmethod
    def from_normal(cls, normal) -> Hyperplane:
        nu = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(nu)
        if not np.isfinite(norm) or norm == 0.0:
            raise PreconditionError("degenerate hyperplane: zero normal")
        nu = nu / norm
        n = len(nu)
        # complete nu to an orthonormal basis; keep axis-aligned cases exact
        k = int(np.argmax(np.abs(nu)))
        if np.count_nonzero(nu) == 1:
            t = np.delete(np.eye(n), k, axis=0)
            return cls(n, nu, t)
        q, _ = np.linalg.qr(np.column_stack([nu, np.delete(np.eye(n), k, axis=1)]))
        return cls(n, nu, q[:, 1:].T)

    @property
    def frame(self) -> np.ndarray:
        return np.vstack([self.tangents, self.normal])


def extend_from_hyperplane(lam, H: Hyperplane, side: str = "left") -> LinearMap:
    """Monogenic extension of tangential data lam(u_k) to all of R^n.

    Left: with S = sum_k u_k lam(u_k), set Lambda(nu) = nu S, so that
    D_L Lambda = S + nu nu S = 0. Right is mirrored. The result is expressed
    in the frame (u_1, ..., u_{n-1}, nu), so its values on the u_k are lam(u_k).
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    n = H.n
    lam = np.asarray([getattr(m, "coeffs", m) for m in lam], dtype=float).reshape(n - 1, 1 << n)
    u = vectors_to_arrays(H.tangents, n)
    nu = vectors_to_arrays(H.normal, n)
    if side == "left":
        S = gp_arrays(u, lam, n).sum(axis=0)
        normal_image = gp_arrays(nu, S, n)
    else:
        S = gp_arrays(lam, u, n).sum(axis=0)
        normal_image = gp_arrays(S, nu, n)
    return LinearMap(n, np.vstack([lam, normal_image]), H.frame)


def tangent_tolerance(lam1: LinearMap, lam2: LinearMap, H: Hyperplane, ulps: float = 8.0) -> float:
    """Rounding allowance for comparing images through different frames.

    Each image is a sum of n rounded products, hence the factor n.
    """
    return ulps * H.n * EPS * max(1.0, dirac_scale(lam1), dirac_scale(lam2))


def hyperplane_uniqueness_check(lam1: LinearMap, lam2: LinearMap, H: Hyperplane, side: str = "left", ulps: float = 8.0) -> bool:
    """True iff agreement on the tangent basis forces agreement on the normal.

    Both maps must be monogenic on ``side``; a violation raises
    ``PreconditionError``.
    """
    for name, lam in (("first", lam1), ("second", lam2)):
        defect = dirac_of_linear_map(lam, side).max_abs()
        if defect > ulps * EPS * max(1.0, dirac_scale(lam)):
            raise PreconditionError(f"{name} map is not monogenic on the {side} (Dirac defect {defect:.3e})")
    tol = tangent_tolerance(lam1, lam2, H, ulps)
    t1 = np.array([lam1.apply(u) for u in H.tangents])
    t2 = np.array([lam2.apply(u) for u in H.tangents])
    if np.max(np.abs(t1 - t2)) > tol:
        return True  # premise fails, implication holds
    # D Lambda = sum_k u_k Lambda(u_k) + nu Lambda(nu) and unit vectors act
    # isometrically, so the normal images differ by at most the tangent gaps
    # plus both Dirac defects (plus rounding in evaluating through the frames)
    d1 = np.linalg.norm(dirac_of_linear_map(lam1, side).coeffs)
    d2 = np.linalg.norm(dirac_of_linear_map(lam2, side).coeffs)
    bound = float(np.sum(np.linalg.norm(t1 - t2, axis=1))) + d1 + d2 + tol
    n1, n2 = lam1.apply(H.normal), lam2.apply(H.normal)
    rebuilt = extend_from_hyperplane(t1, H, side).images[-1]
    return bool(np.linalg.norm(n1 - n2) <= bound and np.linalg.norm(n1 - rebuilt) <= bound)


@dataclass
class Jet1Field:
    base: SampledSet
    values: np.ndarray  # (N, 2**n)
    differentials: np.ndarray  # (N, n, 2**n), images of e_1..e_n at each point

    def __post_init__(self) -> None:
        N, n = len(self.base.points), self.base.n
        self.values = np.asarray(self.values, dtype=float).reshape(N, 1 << n)
        self.differentials = np.asarray(self.differentials, dtype=float).reshape(N, n, 1 << n)

    @classmethod
    def from_function(cls, base: SampledSet, f: Callable, df: Callable) -> Jet1Field:
        return cls(base, f(base.points), df(base.points))

    def differential(self, i: int) -> LinearMap:
        return LinearMap(self.base.n, self.differentials[i])

    def to_json(self) -> list[dict]:
        n = self.base.n
        return [
            {
                "point": p.tolist(),
                "value": Multivector(n, v).to_dict(),
                "differential": [Multivector(n, row).to_dict() for row in d],
            }
            for p, v, d in zip(self.base.points, self.values, self.differentials)
        ]


class NoPairsError(ValueError):
    pass


def _directed_pairs(points: np.ndarray, radius: float) -> np.ndarray:
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    if not len(pairs):
        raise NoPairsError(f"no point pairs within radius {radius}; the defect is undefined")
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return np.vstack([pairs, pairs[:, ::-1]])


def whitney_compatibility_defect(jet: Jet1Field, radius: float) -> float:
    """max over pairs |y - x| <= r of |f(y) - f(x) - df_x(y - x)| / |y - x|."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    pts = jet.base.points
    pairs = _directed_pairs(pts, radius)
    x, y = pairs[:, 0], pairs[:, 1]
    dv = pts[y] - pts[x]
    lin = np.einsum("pj,pjb->pb", dv, jet.differentials[x])
    rem = jet.values[y] - jet.values[x] - lin
    return float(np.max(np.linalg.norm(rem, axis=1) / np.linalg.norm(dv, axis=1)))


@dataclass
class RigidityReport:
    radius: float
    sigma_min: float  # relative to the largest singular value at each point
    rank: np.ndarray
    determined: np.ndarray
    isolated: np.ndarray
    free_directions: list[np.ndarray] = field(default_factory=list)
    singular_values: list[np.ndarray] = field(default_factory=list)

    @property
    def fraction_determined(self) -> float:
        return float(np.mean(self.determined))

    def summary(self) -> dict:
        ranks, counts = np.unique(self.rank, return_counts=True)
        return {
            "radius": self.radius,
            "sigma_min_relative": self.sigma_min,
            "points": len(self.rank),
            "fraction_determined": self.fraction_determined,
            "isolated": int(self.isolated.sum()),
            "rank_histogram": {str(int(r)): int(c) for r, c in zip(ranks, counts)},
            "criterion": "rank of unit chord directions to r-neighbours (stands in for 'not contained in a C^1 hypersurface')",
        }


def auto_sigma_min(setA: SampledSet, radius: float) -> float:
    """Relative threshold 2 r / diam(A), capped at 1/2.

    Chords of length <= r on a C^2 hypersurface with curvature radius at least
    diam/2 tilt out of the tangent plane by at most about 2 r / diam, so a
    sampled smooth surface stays below this threshold while genuinely spread
    chord directions stay above it.
    """
    diam = setA.diameter()
    return min(0.5, 2.0 * radius / diam) if diam > 0 else 0.5


def rigidity_report(setA: SampledSet, radius: float, sigma_min: float | None = None) -> RigidityReport:
    """Per point, numerical rank of the unit chord directions to its r-neighbours.

    A singular value counts if it is at least ``sigma_min`` times the largest
    one (``None``: ``auto_sigma_min``). Rank n means the differential is fixed
    by the values on the set.
    """
    pts = setA.points
    n = setA.n
    if sigma_min is None:
        sigma_min = auto_sigma_min(setA, radius)
    tree = cKDTree(pts)
    nbrs = tree.query_ball_point(pts, radius)
    rank = np.zeros(len(pts), dtype=int)
    isolated = np.zeros(len(pts), dtype=bool)
    free, svals = [], []
    for i, idx in enumerate(nbrs):
        idx = [j for j in idx if j != i]
        if not idx:
            isolated[i] = True
            free.append(np.eye(n))
            svals.append(np.zeros(0))
            continue
        d = pts[idx] - pts[i]
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
        _, s, vt = np.linalg.svd(d, full_matrices=True)
        r = int(np.sum(s >= sigma_min * s[0]))
        rank[i] = r
        free.append(vt[r:])
        svals.append(s)
    return RigidityReport(radius, sigma_min, rank, rank == n, isolated, free, svals)


def _field_values(B, points: np.ndarray, n: int) -> np.ndarray:
    vals = B(points) if callable(B) else np.asarray(getattr(B, "coeffs", B), dtype=float)
    vals = np.broadcast_to(vals, (len(points), 1 << n)).astype(float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("coefficient field has non-finite values")
    return vals


def _compensated_cumsum(incr: np.ndarray) -> np.ndarray:
    """Running sums with Neumaier compensation, so telescoping stays at ulp level."""
    out = np.empty_like(incr)
    total = np.zeros(incr.shape[1:])
    comp = np.zeros(incr.shape[1:])
    for k, v in enumerate(incr):
        t = total + v
        big = np.abs(total) >= np.abs(v)
        comp += np.where(big, (total - t) + v, (v - t) + total)
        total = t
        out[k] = total + comp
    return out


_COORD = re.compile(r"x(\d+)$")


def parse_coefficient(text: str, n: int) -> Callable[[np.ndarray], np.ndarray]:
    """Parse a sum of products such as ``"x1"``, ``"2*x1*e12 + e1"`` or ``"1 - x2*x2*e2"``.

    Factors are numbers, coordinates ``x1..xn`` and blade literals; the result
    maps points (N, n) to coefficient rows (N, 2^n).
    """
    terms = []
    for sign, body in re.findall(r"([+-]?)\s*([^+-]+)", text.replace(" ", "")):
        coords, consts = [], []
        for factor in body.split("*"):
            m = _COORD.match(factor)
            if m:
                k = int(m.group(1))
                if not 1 <= k <= n:
                    raise ValueError(f"coordinate {factor!r} out of range for n = {n}")
                coords.append(k - 1)
            else:
                consts.append(Multivector.parse(factor, n))
        c = Multivector.scalar(-1.0 if sign == "-" else 1.0, n)
        for m in consts:
            c = c * m
        terms.append((coords, c.coeffs))
    if not terms:
        raise ValueError(f"empty coefficient expression {text!r}")

    def field(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((len(pts), 1 << n))
        for coords, c in terms:
            w = np.ones(len(pts))
            for k in coords:
                w = w * pts[:, k]
            out += w[:, None] * c[None, :]
        return out

    field.constant = all(not coords for coords, _ in terms)  # type: ignore[attr-defined]
    return field


def integrate_prescribed_differentials(curve: CurveSample, B, side: str = "left", f0=None) -> Jet1Field:
    """Build f on the curve with df_x(v) = B(x) v (left) or v B(x) (right).

    Left-endpoint sums: f(p_{k+1}) = f(p_k) + B(p_k) (p_{k+1} - p_k); constant
    B therefore gives an exactly affine f up to summation rounding, which the
    compensated running sum keeps at a few ulps.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if not np.isfinite(curve.chord_arc_constant):
        raise PreconditionError("curve must have a finite chord-arc constant")
    n = curve.n
    pts = curve.points
    Bv = _field_values(B, pts, n)
    f0 = np.zeros(1 << n) if f0 is None else np.asarray(getattr(f0, "coeffs", f0), dtype=float)
    steps = vectors_to_arrays(np.diff(pts, axis=0), n)
    incr = gp_arrays(Bv[:-1], steps, n) if side == "left" else gp_arrays(steps, Bv[:-1], n)
    values = np.vstack([f0, f0 + _compensated_cumsum(incr)])
    gens = _generators(n)
    if side == "left":
        diffs = gp_arrays(Bv[:, None, :], gens[None, :, :], n)
    else:
        diffs = gp_arrays(gens[None, :, :], Bv[:, None, :], n)
    base = SampledSet(n, pts, {"generator": "curve", "chord_arc_constant": curve.chord_arc_constant, "measure_zero": True})
    return Jet1Field(base, values, diffs)


def vanishing_differential_consequence(setA: SampledSet, jet: Jet1Field, radius: float) -> dict:
    """What df = 0 forces at scale r.

    Each edge of the r-neighbour graph satisfies |f(y) - f(x)| <= rate |y - x|
    with rate the compatibility defect, so along any path
    |f(p) - f(q)| <= rate * length. On a connected graph a small rate
    certifies near-constancy; otherwise only per-cluster oscillation is
    constrained.
    """
    if np.any(jet.differentials != 0):
        raise PreconditionError("jet must have vanishing differentials")
    pts = setA.points
    vals = jet.values
    labels = clusters(pts, radius)
    n_clusters = int(labels.max()) + 1
    per_cluster = []
    for lab in range(n_clusters):
        v = vals[labels == lab]
        per_cluster.append(float(np.max(np.linalg.norm(v - v[0], axis=1))) if len(v) > 1 else 0.0)
    try:
        rate = whitney_compatibility_defect(jet, radius)
    except NoPairsError:
        rate = 0.0
    graph = neighbor_graph(pts, radius)
    dist = dijkstra(graph, directed=False, indices=0)
    far = int(np.argmax(np.linalg.norm(vals - vals[0], axis=1)))
    path_len = float(dist[far])
    osc = float(np.max(np.linalg.norm(vals - vals[0], axis=1)))
    out = {
        "radius": radius,
        "defect_rate": rate,
        "clusters": n_clusters,
        "connected": n_clusters == 1,
        "per_cluster_oscillation": per_cluster,
        "max_cluster_oscillation": max(per_cluster),
        "global_oscillation": osc,
        "witness_pair": [0, far],
        "path_exists": bool(np.isfinite(path_len)),
        "path_length": path_len if np.isfinite(path_len) else None,
    }
    if np.isfinite(path_len):
        out["oscillation_bound"] = rate * path_len
        out["certified_constant"] = rate <= 1e-12 * max(1.0, float(np.abs(vals).max()))
    else:
        out["oscillation_bound"] = None
        out["certified_constant"] = False
    return out
