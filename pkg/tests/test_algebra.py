import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cliffordlab.algebra import (
    MAX_DIM,
    AlgebraDomainError,
    DimensionError,
    Multivector,
    blade_name,
    blade_product,
    embed_vector,
    geometric_product,
    gp_arrays,
    left_mult_matrix,
    parse_blade,
    right_mult_matrix,
    sign_table,
    vector_inverse,
)


def word_product(a: int, b: int, n: int) -> tuple[int, int]:
    """Oracle: rewrite the generator word of a then b by adjacent swaps.

    Bubble sort the word; each swap of distinct neighbours flips the sign,
    each adjacent equal pair e_j e_j is replaced by -1.
    """
    word = [j for j in range(n) if a >> j & 1] + [j for j in range(n) if b >> j & 1]
    sign = 1
    changed = True
    while changed:
        changed = False
        for i in range(len(word) - 1):
            if word[i] > word[i + 1]:
                word[i], word[i + 1] = word[i + 1], word[i]
                sign = -sign
                changed = True
                break
            if word[i] == word[i + 1]:
                del word[i : i + 2]
                sign = -sign
                changed = True
                break
    return sign, sum(1 << j for j in word)


@pytest.mark.parametrize("n", range(1, 6))
def test_blade_product_matches_word_rewriting(n):
    for a in range(1 << n):
        for b in range(1 << n):
            assert blade_product(a, b, n) == word_product(a, b, n)


def test_blade_product_examples():
    assert blade_product(0b1, 0b1, 2) == (-1, 0)
    assert blade_product(0, 0b10, 2) == (1, 0b10)
    assert blade_product(0b11, 0b11, 2) == (-1, 0)


def test_blade_out_of_range():
    with pytest.raises(ValueError):
        blade_product(4, 1, 2)


def test_sign_table_is_read_only():
    t = sign_table(3)
    with pytest.raises(ValueError):
        t[0, 0] = -1


def test_dimension_cap():
    with pytest.raises(DimensionError):
        Multivector.zero(MAX_DIM + 1)
    with pytest.raises(DimensionError):
        Multivector.zero(0)


def test_product_examples():
    e1, e2 = Multivector.basis_vector(1, 2), Multivector.basis_vector(2, 2)
    assert e1 * e2 == Multivector.blade(0b11, 2)
    assert e2 * e1 == -Multivector.blade(0b11, 2)
    v = Multivector.parse("3e1+4e2", 2)
    assert v * v == Multivector.scalar(-25.0, 2)
    m = Multivector.parse("1 - 2e1 + 0.5e12", 2)
    assert Multivector.scalar(1.0, 2) * m == m


def test_add_and_scale_examples():
    e1 = Multivector.basis_vector(1, 2)
    e2 = Multivector.basis_vector(2, 2)
    assert e1 + e1 == 2 * e1
    assert 0 * Multivector.parse("1+e12", 2) == Multivector.zero(2)
    assert (e1 + e2) + (e1 - e2) == 2 * e1
    with pytest.raises(DimensionError):
        e1 + Multivector.basis_vector(1, 3)


def test_embed_and_inverse_examples():
    assert embed_vector([1.0, 0.0]) == Multivector.basis_vector(1, 2)
    assert embed_vector([0.0, 0.0, 0.0]) == Multivector.zero(3)
    assert vector_inverse([1.0, 0.0]) == -Multivector.basis_vector(1, 2)
    assert vector_inverse([3.0, 4.0]) == Multivector.parse("-0.12e1-0.16e2", 2)
    with pytest.raises(AlgebraDomainError):
        vector_inverse([0.0, 0.0])


def test_parse_and_names():
    assert parse_blade("e13", 3) == 0b101
    assert blade_name(0b101) == "e13"
    for bad in ("e31", "e11", "x1"):
        with pytest.raises(ValueError):
            parse_blade(bad, 3)
    with pytest.raises(DimensionError):
        parse_blade("e4", 3)
    # "2e1" is two times e1, never 20.0
    assert Multivector.parse("2e1", 2).to_dict() == {"e1": 2.0}


def test_json_round_trip():
    m = Multivector.parse("1.5 - e2 + 0.25e123", 3)
    obj = json.loads(json.dumps(m.to_json()))
    assert obj == {"n": 3, "terms": {"1": 1.5, "e2": -1.0, "e123": 0.25}}
    assert Multivector.from_json(obj) == m


def test_coefficients_immutable():
    m = Multivector.parse("1+e1", 2)
    with pytest.raises(ValueError):
        m.coeffs[0] = 3.0


def int_mv(n):
    return arrays(np.float64, 1 << n, elements=st.integers(-7, 7).map(float))


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_exact_laws_on_integer_coefficients(n):
    rng = np.random.Generator(np.random.Philox(key=n))
    a, b, c = (rng.integers(-5, 6, size=(1000, 1 << n)).astype(float) for _ in range(3))
    assert np.array_equal(gp_arrays(gp_arrays(a, b, n), c, n), gp_arrays(a, gp_arrays(b, c, n), n))
    assert np.array_equal(gp_arrays(a, b + c, n), gp_arrays(a, b, n) + gp_arrays(a, c, n))
    assert np.array_equal(gp_arrays(a + b, c, n), gp_arrays(a, c, n) + gp_arrays(b, c, n))


@given(st.integers(1, 4).flatmap(lambda n: st.tuples(st.just(n), int_mv(n), int_mv(n), int_mv(n))))
def test_associativity_property(args):
    n, a, b, c = args
    A, B, C = (Multivector(n, v) for v in (a, b, c))
    assert (A * B) * C == A * (B * C)


@pytest.mark.parametrize("n", range(1, MAX_DIM + 1))
def test_generator_relations(n):
    gens = [Multivector.basis_vector(j, n) for j in range(1, n + 1)]
    minus_one = Multivector.scalar(-1.0, n)
    for j, k in itertools.product(range(n), repeat=2):
        if j == k:
            assert gens[j] * gens[j] == minus_one
        else:
            assert gens[j] * gens[k] + gens[k] * gens[j] == Multivector.zero(n)


@given(
    st.integers(1, 6).flatmap(
        lambda n: arrays(np.float64, n, elements=st.floats(-1e3, 1e3, allow_nan=False)).filter(lambda x: np.dot(x, x) > 1e-6)
    )
)
def test_vector_square_and_inverse_ulps(x):
    v = embed_vector(x)
    sq = (v * v).coeffs.copy()
    r2 = float(np.dot(x, x))
    sq[0] += r2
    assert np.abs(sq).max() <= 4 * math.ulp(r2)
    w = vector_inverse(x)
    for prod in (v * w, w * v):
        d = prod.coeffs.copy()
        d[0] -= 1.0
        assert np.abs(d).max() <= 4 * math.ulp(1.0)


def test_complex_isomorphism():
    rng = np.random.Generator(np.random.Philox(key=1))
    z = rng.integers(-1000, 1001, size=(10_000, 4)).astype(float)
    got = gp_arrays(z[:, :2], z[:, 2:], 1)
    ref = (z[:, 0] + 1j * z[:, 1]) * (z[:, 2] + 1j * z[:, 3])
    assert np.array_equal(got, np.stack([ref.real, ref.imag], axis=1))


def test_quaternion_isomorphism():
    # 1, e1, e2, e12 -> 1, i, j, k; quaternion units built as 2x2 complex matrices
    one = np.eye(2, dtype=complex)
    qi = np.array([[1j, 0], [0, -1j]])
    qj = np.array([[0, 1], [-1, 0]], dtype=complex)
    units = [one, qi, qj, qi @ qj]
    rng = np.random.Generator(np.random.Philox(key=2))
    a = rng.integers(-100, 101, size=(10_000, 4)).astype(float)
    b = rng.integers(-100, 101, size=(10_000, 4)).astype(float)
    prod = gp_arrays(a, b, 2)
    as_mat = lambda c: np.einsum("pk,kij->pij", c, np.array(units))
    assert np.array_equal(as_mat(a) @ as_mat(b), as_mat(prod))


def test_multiplication_matrices():
    rng = np.random.Generator(np.random.Philox(key=3))
    a = Multivector(3, rng.normal(size=8))
    x = Multivector(3, rng.normal(size=8))
    assert np.allclose(left_mult_matrix(a) @ x.coeffs, (a * x).coeffs, rtol=0, atol=1e-14)
    assert np.allclose(right_mult_matrix(a) @ x.coeffs, (x * a).coeffs, rtol=0, atol=1e-14)
    assert geometric_product(a, x) == a * x
