"""Dense arithmetic in the real Clifford algebra C(n).

Generators e_1..e_n square to -1 and anticommute. A basis blade is indexed
by a bitmask: bit j set means e_{j+1} is a factor, factors in increasing
order. Coefficients are stored densely, 2**n doubles per multivector.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cache

import numpy as np

MAX_DIM = 6

_BLADE_RE = re.compile(r"^e([1-9]+)$")


class DimensionError(ValueError):
    pass


class AlgebraDomainError(ValueError):
    """Raised for inputs outside an operation's domain (e.g. inverting 0)."""


def check_dim(n: int) -> int:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_DIM:
        raise DimensionError(f"dimension must be an integer in [1, {MAX_DIM}], got {n!r}")
    return int(n)


def _reorder_count(a: int, b: int) -> int:
    # transpositions needed to move the generators of b past those of a
    a >>= 1
    total = 0
    while a:
        total += (a & b).bit_count()
        a >>= 1
    return total


def blade_product(a: int, b: int, n: int) -> tuple[int, int]:
    """Product of two basis blades: returns ``(sign, blade)``."""
    n = check_dim(n)
    size = 1 << n
    for m in (a, b):
        if not isinstance(m, (int, np.integer)) or not 0 <= m < size:
            raise DimensionError(f"blade mask {m!r} out of range for n={n}")
    a, b = int(a), int(b)
    swaps = _reorder_count(a, b)
    squares = (a & b).bit_count()  # each repeated e_j contributes e_j^2 = -1
    sign = -1 if (swaps + squares) & 1 else 1
    return sign, a ^ b


@cache
def sign_table(n: int) -> np.ndarray:
    """``sign_table(n)[a, b]`` is the sign of blade a times blade b."""
    size = 1 << n
    table = np.empty((size, size), dtype=np.int8)
    for a in range(size):
        for b in range(size):
            table[a, b] = blade_product(a, b, n)[0]
    table.setflags(write=False)
    return table


def blade_name(mask: int) -> str:
    if mask == 0:
        return "1"
    digits = [str(j + 1) for j in range(MAX_DIM) if mask >> j & 1]
    return "e" + "".join(digits)


def parse_blade(name: str, n: int) -> int:
    if name == "1":
        return 0
    m = _BLADE_RE.match(name)
    if not m:
        raise ValueError(f"bad blade name {name!r}")
    digits = [int(c) for c in m.group(1)]
    if digits != sorted(set(digits)):
        raise ValueError(f"blade {name!r} must list generators once, ascending")
    if digits[-1] > n:
        raise DimensionError(f"blade {name!r} needs more than {n} generators")
    return sum(1 << (d - 1) for d in digits)


def gp_arrays(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """Geometric product of coefficient arrays with trailing axis 2**n.

    Leading axes broadcast. The accumulation order is fixed (by left blade),
    so results are reproducible bit for bit.
    """
    size = 1 << n
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != size or b.shape[-1] != size:
        raise DimensionError("trailing axis must have length 2**n")
    signs = sign_table(n).astype(float)
    idx = np.arange(size)
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=float)
    for blade in range(size):
        col = a[..., blade : blade + 1]
        if not np.any(col):
            continue
        # blade ^ idx is a permutation, so fancy-index accumulation is safe
        out[..., blade ^ idx] += col * (signs[blade] * b)
    return out


def vectors_to_arrays(x: np.ndarray, n: int) -> np.ndarray:
    """Embed an array of R^n vectors (trailing axis n) as grade-1 coefficients."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise DimensionError(f"expected trailing axis {n}, got {x.shape[-1]}")
    out = np.zeros(x.shape[:-1] + (1 << n,))
    for j in range(n):
        out[..., 1 << j] = x[..., j]
    return out


@dataclass(frozen=True, eq=False)
class Multivector:
    """An element of C(n) with dense coefficients indexed by blade mask."""

    n: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        n = check_dim(self.n)
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (1 << n,):
            raise DimensionError(f"need {1 << n} coefficients for n={n}, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("multivector coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, n: int) -> Multivector:
        return cls(n, np.zeros(1 << check_dim(n)))

    @classmethod
    def scalar(cls, value: float, n: int) -> Multivector:
        c = np.zeros(1 << check_dim(n))
        c[0] = value
        return cls(n, c)

    @classmethod
    def blade(cls, mask: int, n: int, value: float = 1.0) -> Multivector:
        c = np.zeros(1 << check_dim(n))
        if not 0 <= mask < len(c):
            raise DimensionError(f"blade mask {mask} out of range for n={n}")
        c[mask] = value
        return cls(n, c)

    @classmethod
    def basis_vector(cls, j: int, n: int) -> Multivector:
        """The generator e_j, 1-based."""
        if not 1 <= j <= n:
            raise DimensionError(f"no generator e{j} in C({n})")
        return cls.blade(1 << (j - 1), n)

    @classmethod
    def from_dict(cls, terms: dict[str, float], n: int) -> Multivector:
        c = np.zeros(1 << check_dim(n))
        for name, value in terms.items():
            c[parse_blade(name, n)] += float(value)
        return cls(n, c)

    @classmethod
    def parse(cls, text: str, n: int) -> Multivector:
        """Parse a literal such as ``"1 + 2e1 - 0.5e23"``."""
        c = np.zeros(1 << check_dim(n))
        s = text.replace(" ", "")
        if not s:
            raise ValueError("empty multivector literal")
        pos = 0
        # no exponent notation: "2e1" means 2*e1
        term_re = re.compile(r"([+-]?)(\d+(?:\.\d*)?|\.\d+)?\*?(e[1-9]+)?")
        while pos < len(s):
            m = term_re.match(s, pos)
            if m is None or m.end() == pos or (m.group(2) is None and m.group(3) is None):
                raise ValueError(f"cannot parse multivector literal {text!r}")
            sign = -1.0 if m.group(1) == "-" else 1.0
            coef = float(m.group(2)) if m.group(2) else 1.0
            mask = parse_blade(m.group(3), n) if m.group(3) else 0
            c[mask] += sign * coef
            pos = m.end()
        return cls(n, c)

    def to_dict(self) -> dict[str, float]:
        return {blade_name(k): float(v) for k, v in enumerate(self.coeffs) if v != 0.0}

    def to_json(self) -> dict:
        return {"n": self.n, "terms": self.to_dict()}

    @classmethod
    def from_json(cls, obj: dict) -> Multivector:
        return cls.from_dict(obj["terms"], int(obj["n"]))

    def _check(self, other: Multivector) -> None:
        if not isinstance(other, Multivector):
            raise TypeError(f"expected Multivector, got {type(other).__name__}")
        if other.n != self.n:
            raise DimensionError(f"dimension mismatch: C({self.n}) vs C({other.n})")

    def __add__(self, other: Multivector) -> Multivector:
        self._check(other)
        return Multivector(self.n, self.coeffs + other.coeffs)

    def __sub__(self, other: Multivector) -> Multivector:
        self._check(other)
        return Multivector(self.n, self.coeffs - other.coeffs)

    def __neg__(self) -> Multivector:
        return Multivector(self.n, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, Multivector):
            return geometric_product(self, other)
        if isinstance(other, (int, float, np.floating, np.integer)):
            return scale(self, other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return scale(self, other)
        return NotImplemented

    def __eq__(self, other) -> bool:
        if not isinstance(other, Multivector):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self) -> int:
        return hash((self.n, self.coeffs.tobytes()))

    def __repr__(self) -> str:
        terms = self.to_dict()
        if not terms:
            return f"Multivector(n={self.n}, 0)"
        body = " + ".join(f"{v:g}" + ("" if k == "1" else k) for k, v in terms.items())
        return f"Multivector(n={self.n}, {body})"

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def grade(self, k: int) -> Multivector:
        mask = np.array([i.bit_count() == k for i in range(1 << self.n)])
        return Multivector(self.n, np.where(mask, self.coeffs, 0.0))


def geometric_product(a: Multivector, b: Multivector) -> Multivector:
    a._check(b)
    return Multivector(a.n, gp_arrays(a.coeffs, b.coeffs, a.n))


def add(a: Multivector, b: Multivector) -> Multivector:
    return a + b


def scale(a: Multivector, s: float) -> Multivector:
    return Multivector(a.n, float(s) * a.coeffs)


def embed_vector(x: Sequence[float] | np.ndarray) -> Multivector:
    """Identify x in R^n with x_1 e_1 + ... + x_n e_n."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("embed_vector expects a single vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector entries must be finite")
    return Multivector(check_dim(len(x)), vectors_to_arrays(x, len(x)))


def vector_inverse(x: Sequence[float] | np.ndarray) -> Multivector:
    """Inverse of an embedded nonzero vector: -x / |x|^2."""
    x = np.asarray(x, dtype=float)
    sq = float(np.dot(x, x))
    if sq == 0.0:
        raise AlgebraDomainError("the zero vector is not invertible")
    return embed_vector(-x / sq)


def right_mult_matrix(a: Multivector) -> np.ndarray:
    """Matrix M with M @ x.coeffs == (x * a).coeffs."""
    size = 1 << a.n
    eye = np.eye(size)
    return gp_arrays(eye, a.coeffs, a.n).T


def left_mult_matrix(a: Multivector) -> np.ndarray:
    """Matrix M with M @ x.coeffs == (a * x).coeffs."""
    size = 1 << a.n
    eye = np.eye(size)
    return gp_arrays(a.coeffs, eye, a.n).T


def op_norm(matrix: np.ndarray) -> float:
    return float(np.linalg.norm(matrix, 2))


def basis(n: int) -> list[Multivector]:
    return [Multivector.basis_vector(j, n) for j in range(1, n + 1)]


def msum(items: Iterable[Multivector], n: int) -> Multivector:
    total = np.zeros(1 << n)
    for m in items:
        total = total + m.coeffs
    return Multivector(n, total)


def ulp_scale(*values: float) -> float:
    """Spacing of doubles near the largest of ``values`` (at least near 1)."""
    return math.ulp(max([1.0] + [abs(v) for v in values]))
