"""Divided-difference kernels (b(x) - b(y)) (x - y)^-1 and (x - y)^-1 (b(x) - b(y))."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .algebra import Multivector, check_dim, gp_arrays, vectors_to_arrays


class DiagonalError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """A closed-form C(n)-valued b on R^n.

    ``left_diff`` / ``right_diff`` give B(x) when db_x(v) = B(x) v or v B(x);
    ``domain`` notes where that differential family is valid. ``difference``,
    when given, evaluates b(x) - b(y) in closed form so constant terms cancel
    exactly instead of through rounding.
    """

    n: int
    tag: str
    fn: Callable[[np.ndarray], np.ndarray]
    left_diff: Callable[[np.ndarray], np.ndarray] | None = None
    right_diff: Callable[[np.ndarray], np.ndarray] | None = None
    real: bool = False
    params: dict = field(default_factory=dict)
    domain: str = "R^n"
    difference: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(x, dtype=float))

    def diff(self, x, y) -> np.ndarray:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if self.difference is not None:
            return self.difference(x, y)
        return self(x) - self(y)


def _const(m: np.ndarray):
    return lambda x: np.broadcast_to(m, np.shape(x)[:-1] + m.shape).copy()


def affine_left(n: int, alpha, beta) -> CoefficientField:
    """b(x) = alpha + beta x; the left quotient is beta."""
    n = check_dim(n)
    a, b = _coeffs(alpha, n), _coeffs(beta, n)
    fn = lambda x: a + gp_arrays(b, vectors_to_arrays(x, n), n)
    d = lambda x, y: gp_arrays(b, vectors_to_arrays(x - y, n), n)
    return CoefficientField(n, "affine-left", fn, left_diff=_const(b), params={"alpha": a, "beta": b}, difference=d)


def affine_right(n: int, alpha, beta) -> CoefficientField:
    """b(x) = alpha + x beta; the right quotient is beta, the left one is not."""
    n = check_dim(n)
    a, b = _coeffs(alpha, n), _coeffs(beta, n)
    fn = lambda x: a + gp_arrays(vectors_to_arrays(x, n), b, n)
    d = lambda x, y: gp_arrays(vectors_to_arrays(x - y, n), b, n)
    return CoefficientField(n, "affine-right", fn, right_diff=_const(b), params={"alpha": a, "beta": b}, difference=d)


def constant(n: int, value) -> CoefficientField:
    n = check_dim(n)
    c = _coeffs(value, n)
    zero = np.zeros(1 << n)
    d = lambda x, y: np.zeros(np.shape(x)[:-1] + (1 << n,))
    return CoefficientField(
        n, "constant", _const(c), _const(zero), _const(zero), real=not np.any(c[1:]), params={"value": c}, difference=d
    )


def real_quadratic(n: int, weights=None) -> CoefficientField:
    """b(x) = sum_j w_j x_j^2 + x_1, real valued."""
    n = check_dim(n)
    w = np.arange(1, n + 1, dtype=float) if weights is None else np.asarray(weights, dtype=float)

    def fn(x):
        out = np.zeros(np.shape(x)[:-1] + (1 << n,))
        out[..., 0] = np.sum(w * x * x, axis=-1) + x[..., 0]
        return out

    return CoefficientField(n, "real-quadratic", fn, real=True, params={"weights": w})


def x1_vector(n: int) -> CoefficientField:
    """b(x) = x_1 x.

    On the x_1-axis b = x_1^2 e_1, whose differential along the axis is
    multiplication by the scalar 2 x_1 on either side. Off the axis no
    left or right multiplication represents db, so the family is only
    valid there.
    """
    n = check_dim(n)
    fn = lambda x: x[..., :1] * vectors_to_arrays(x, n)

    def B(x):
        out = np.zeros(np.shape(x)[:-1] + (1 << n,))
        out[..., 0] = 2.0 * x[..., 0]
        return out

    return CoefficientField(n, "x1-vector", fn, B, B, domain="x1-axis")


def _coeffs(m, n: int) -> np.ndarray:
    if isinstance(m, Multivector):
        return m.coeffs.copy()
    if isinstance(m, str):
        return Multivector.parse(m, n).coeffs.copy()
    if np.isscalar(m):
        return Multivector.scalar(float(m), n).coeffs.copy()
    return np.asarray(m, dtype=float).reshape(1 << n)


def parse_field(text: str, n: int) -> CoefficientField:
    """Parse ``"name:key=val,key=val"``, e.g. ``"affine-left:beta=e1"``."""
    name, _, rest = text.partition(":")
    kv = {}
    for item in filter(None, rest.split(",")):
        k, sep, v = item.partition("=")
        if not sep:
            raise ValueError(f"bad parameter {item!r} in coefficient field {text!r}")
        kv[k.strip()] = v.strip()
    if name == "affine-left":
        return affine_left(n, kv.get("alpha", "0"), kv.get("beta", "1"))
    if name == "affine-right":
        return affine_right(n, kv.get("alpha", "0"), kv.get("beta", "1"))
    if name == "constant":
        return constant(n, kv.get("value", "1"))
    if name == "real-quadratic":
        return real_quadratic(n)
    if name == "x1-vector":
        return x1_vector(n)
    raise ValueError(f"unknown coefficient field {name!r}")


def _diff_inverse(x: np.ndarray, y: np.ndarray, n: int) -> np.ndarray:
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    sq = np.sum(d * d, axis=-1)
    if np.any(sq == 0):
        raise DiagonalError("x = y: use diagonal_extension on the diagonal")
    return vectors_to_arrays(-d / sq[..., None], n)


def left_quotient(b: CoefficientField, x, y) -> np.ndarray:
    """(b(x) - b(y)) (x - y)^-1, vectorised over leading axes."""
    n = b.n
    return gp_arrays(b.diff(x, y), _diff_inverse(x, y, n), n)


def right_quotient(b: CoefficientField, x, y) -> np.ndarray:
    """(x - y)^-1 (b(x) - b(y))."""
    n = b.n
    return gp_arrays(_diff_inverse(x, y, n), b.diff(x, y), n)


def quotient(b: CoefficientField, x, y, side: str) -> np.ndarray:
    if side == "left":
        return left_quotient(b, x, y)
    if side == "right":
        return right_quotient(b, x, y)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def diagonal_extension(b: CoefficientField, x, side: str = "left") -> Multivector:
    """Continuous value of the quotient at y = x: B(x) for the matching family.

    The left quotient needs db_x(v) = B(x) v, the right one db_x(v) = v B(x).
    """
    fam = b.left_diff if side == "left" else b.right_diff
    if fam is None:
        raise DiagonalError(f"{b.tag} has no {side}-multiplication differential attached")
    return Multivector(b.n, fam(np.asarray(x, dtype=float)))


@dataclass
class DiagonalConvergence:
    distances: np.ndarray
    errors: np.ndarray
    slope: float  # fitted exponent p in error ~ C |y - x|^p
    constant: float  # max error / distance


def diagonal_convergence(b: CoefficientField, x, direction, side: str = "left", steps: int = 12, start: float = 0.1) -> DiagonalConvergence:
    """|quotient(x, y_k) - B(x)| on y_k = x + start 2^-k direction."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    t = start * 0.5 ** np.arange(steps)
    y = x[None, :] + t[:, None] * u[None, :]
    q = quotient(b, np.broadcast_to(x, y.shape), y, side)
    target = diagonal_extension(b, x, side).coeffs
    err = np.linalg.norm(q - target, axis=1)
    positive = err > 0
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(t[positive]), np.log(err[positive]), 1)[0])
    else:
        slope = math.inf  # errors vanish identically
    return DiagonalConvergence(t, err, slope, float(np.max(err / t)))


@dataclass
class Witness:
    x: np.ndarray
    y: np.ndarray
    quotient: np.ndarray
    deviation: float


def random_pairs(n: int, trials: int, seed: int, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Counter-based (Philox) draws; trial i uses the same stream slot on every run."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    pts = gen.uniform(-scale, scale, size=(trials, 2, n))
    return pts[:, 0], pts[:, 1]


def noncommutativity_witness(b: CoefficientField, trials: int, seed: int, threshold: float = 1e-6) -> Witness | None:
    """Look for a pair where the left quotient of b = alpha + x beta is not beta.

    Returns the first such pair, or None (always None when beta is central,
    e.g. scalar, or when n = 1).
    """
    if "beta" not in b.params:
        raise ValueError("noncommutativity_witness needs an affine coefficient field with a beta")
    beta = b.params["beta"]
    x, y = random_pairs(b.n, trials, seed)
    keep = np.linalg.norm(x - y, axis=1) > 1e-9
    x, y = x[keep], y[keep]
    q = left_quotient(b, x, y)
    dev = np.linalg.norm(q - beta, axis=1)
    hits = np.flatnonzero(dev > threshold)
    if not len(hits):
        return None
    i = int(hits[0])
    return Witness(x[i], y[i], q[i], float(dev[i]))

