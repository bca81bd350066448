import math

import numpy as np
import pytest
from golden_tools import (
    GOLDEN_RUNS,
    assert_matches,
    experiment_results,
    load,
    strip_version,
)
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad as scipy_quad

from cliffordlab.algebra import AlgebraDomainError, Multivector
from cliffordlab.cauchy import (
    PositiveMeasureError,
    QuadratureError,
    TestFunction,
    align_quad,
    approximate_on_null_set,
    cauchy_reproduce,
    default_probes,
    estimate_cn,
    fundamental_solution,
    gradient_of_potential_check,
    kernel_vectors,
    reference_quad,
)
from cliffordlab.experiments import lattice_box
from cliffordlab.fractals import generate_fat_cantor, generate_ifs


def test_kernel_examples():
    assert fundamental_solution([1.0, 0.0]) == Multivector.basis_vector(1, 2)
    assert fundamental_solution([0.0, 2.0, 0.0]) == 0.25 * Multivector.basis_vector(2, 3)
    assert fundamental_solution([-3.0]) == -Multivector.basis_vector(1, 1)
    with pytest.raises(AlgebraDomainError):
        fundamental_solution([0.0, 0.0])


def _ulps_longdouble(got, x, n):
    # oracle: x / |x|^n evaluated independently in extended precision
    xl = np.asarray(x, dtype=np.longdouble)
    ref = xl / np.sqrt(np.sum(xl * xl)) ** n
    ulp = np.array([math.ulp(float(abs(v))) for v in ref])
    return float(np.max(np.abs(got - ref) / np.maximum(ulp, np.finfo(float).tiny)))


@given(
    st.integers(1, 4).flatmap(
        lambda n: st.tuples(
            arrays(np.float64, n, elements=st.floats(-100, 100)).filter(lambda x: np.dot(x, x) > 1e-4),
            st.sampled_from([0.125, 0.5, 2.0, 3.0, 7.5]),
        )
    )
)
def test_homogeneity_and_oddness(args):
    x, t = args
    n = len(x)
    ex = kernel_vectors(x, precise=True)
    assert np.array_equal(kernel_vectors(-x, precise=True), -ex)
    scaled = kernel_vectors(t * x, precise=True) * t ** (n - 1)
    assert _ulps_longdouble(scaled, x, n) <= 4


@pytest.mark.parametrize("n,ratio", [(1, 1.0), (2, 1.0), (3, -1.0)])
def test_gradient_of_potential(n, ratio):
    rng = np.random.Generator(np.random.Philox(key=n))
    pts = rng.uniform(-2, 2, size=(2000, n))
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-3]
    chk = gradient_of_potential_check(n, pts)
    assert abs(chk.ratio - ratio) <= 1e-12
    assert chk.defect <= 1e-10


def test_zero_test_function_reproduces_zero():
    f = TestFunction.zero(2)
    got = cauchy_reproduce(f, [0.1, 0.2], quad=reference_quad(2, 64))
    assert got == Multivector.zero(2)


def test_test_function_gradient_matches_differences():
    rng = np.random.Generator(np.random.Philox(key=4))
    f = TestFunction.bump(2, [0.1, -0.2], 0.8, rng.normal(size=4), rng.normal(size=(2, 4)))
    y = np.array([[0.3, 0.1], [-0.2, -0.5]])
    h = 1e-5
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (f.value(y + e) - f.value(y - e)) / (2 * h)
        assert np.allclose(f.grad(y)[:, j, :], fd, rtol=0, atol=1e-8)
    assert not np.any(f.value(np.array([[0.1, 0.7]])))  # outside the support


def test_one_dimensional_formula_against_scipy():
    # n=1: E(x-y) = sign(x-y) e1 and D f = e1 f', so the integral is
    # -int sign(x-y) f'(y) dy = -2 f(x) for a real f: c_1 = -1/2.
    f = TestFunction.bump(1, [0.0], 1.0, [1.0, 0.0], [[0.3, 0.0]])
    x = 0.2
    fp = lambda y: f.grad(np.array([[y]]))[0, 0, 0]
    left, _ = scipy_quad(fp, -1.0, x, epsabs=1e-13)
    right, _ = scipy_quad(fp, x, 1.0, epsabs=1e-13)
    oracle = -(left - right)
    assert oracle == pytest.approx(-2 * f.value(np.array([x]))[0], abs=1e-12)
    got = cauchy_reproduce(f, [x], quad=align_quad(reference_quad(1, 4096), [x])).coeffs[0]
    assert got == pytest.approx(oracle, rel=1e-5)


def test_two_dimensional_reproduction_within_one_percent():
    probes = default_probes(2, 5, seed=0)
    est = estimate_cn(2, probes[1:], reference_quad(2, 256))
    f, x = probes[0]
    integral = cauchy_reproduce(f, x, quad=align_quad(reference_quad(2, 256), x)).coeffs
    assert np.linalg.norm(est.value * integral - f.value(x)) <= 1e-2 * np.linalg.norm(f.value(x))


def test_estimate_is_probe_order_invariant():
    probes = default_probes(2, 5, seed=3)
    q = reference_quad(2, 64)
    a = estimate_cn(2, probes, q)
    b = estimate_cn(2, probes[::-1], q)
    assert a.value == b.value
    assert a.spread == b.spread


def test_estimate_rejects_bad_probes():
    probes = default_probes(2, 3, seed=1)
    with pytest.raises(ValueError):
        estimate_cn(2, probes[:2], reference_quad(2, 16))
    f = TestFunction.bump(2, [0.0, 0.0], 0.5, [1.0, 0, 0, 0])
    with pytest.raises(ValueError):
        estimate_cn(2, probes[:2] + [(f, np.array([0.49999, 0.0]))], reference_quad(2, 16))


def test_quadrature_box_must_cover_support():
    f = TestFunction.bump(2, [0.0, 0.0], 2.0, [1.0, 0, 0, 0])
    with pytest.raises(QuadratureError):
        cauchy_reproduce(f, [0.0, 0.0], quad=reference_quad(2, 16))


# --- approximation on null sets ---------------------------------------------

CN2 = -1 / (2 * np.pi)  # closed form is fine as an input here; the tests check the scheme


@pytest.fixture(scope="module")
def cantor4():
    A = generate_ifs("cantor2d", 4)
    return A, lattice_box(A.points, 0.04, 3.0**-5)


def test_constant_values(cantor4):
    A, q = cantor4
    kappa = np.array([1.5, 0.0, 0.0, -0.5])
    ap = approximate_on_null_set(A, np.tile(kappa, (len(A.points), 1)), 0.04, 0.0005, q, CN2)
    assert ap.info["evaluation"] == "fft"
    assert ap.sup_error <= 0.05 * np.linalg.norm(kappa)
    assert ap.defect <= 1e-8 * ap.magnitude
    # direct summation agrees with the FFT path
    direct = np.linalg.norm(ap(A.points) - kappa, axis=1).max()
    assert direct == pytest.approx(ap.sup_error, rel=1e-9, abs=1e-13)


def test_monogenic_polynomial_no_worse_than_constant(cantor4):
    A, q = cantor4
    p = A.points
    kappa = np.tile([1.0, 0.0, 0.0, 0.0], (len(p), 1))
    lin = np.stack([0 * p[:, 0], p[:, 0], -p[:, 1], 0 * p[:, 0]], axis=1)  # x1 e1 - x2 e2
    tol = approximate_on_null_set(A, kappa, 0.04, 0.0005, q, CN2).sup_error
    err = approximate_on_null_set(A, lin, 0.04, 0.0005, q, CN2).sup_error
    assert err <= 2 * tol


def test_refinement_reduces_error():
    A = generate_ifs("cantor2d", 3)
    f = A.points[:, 0]
    errs = []
    for h in (3.0**-4, 3.0**-5):
        q = lattice_box(A.points, 0.04, h)
        errs.append(approximate_on_null_set(A, f, 0.04, 0.0005, q, CN2).sup_error)
    assert errs[1] < 0.6 * errs[0]


def test_positive_measure_refused():
    fat = generate_fat_cantor(lambda k: 0.25 * 0.25**k, 4).sampled
    with pytest.raises(PositiveMeasureError):
        approximate_on_null_set(fat, np.zeros(len(fat.points)), 0.04, 0.001, reference_quad(fat.n, 16), CN2)


def test_approx_null_report_golden():
    exp, params = GOLDEN_RUNS["approx_null_cantor2d"]
    assert_matches(strip_version(experiment_results(exp, params)), load("approx_null_cantor2d"))
