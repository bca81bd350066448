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

from cliffordlab.algebra import Multivector, embed_vector
from cliffordlab.fractals import (
    SampledSet,
    circle_cloud,
    generate_ifs,
    line_cloud,
    lipschitz_graph_curve,
    sawtooth,
)
from cliffordlab.jets import (
    Hyperplane,
    Jet1Field,
    LinearMap,
    NoPairsError,
    PreconditionError,
    dirac_of_linear_map,
    dirac_scale,
    extend_from_hyperplane,
    hyperplane_uniqueness_check,
    integrate_prescribed_differentials,
    parse_coefficient,
    rigidity_report,
    vanishing_differential_consequence,
    whitney_compatibility_defect,
)

EPS = np.finfo(float).eps


def dirac_oracle(images, side):
    """Sum_j e_j Lambda(e_j) with Multivector arithmetic."""
    n = len(images)
    total = Multivector.zero(n)
    for j, img in enumerate(images):
        e = Multivector.basis_vector(j + 1, n)
        total = total + (e * img if side == "left" else img * e)
    return total


def test_dirac_of_linear_map_examples():
    assert dirac_of_linear_map(LinearMap.zero(3)) == Multivector.zero(3)
    ident = LinearMap.from_multivectors([Multivector.basis_vector(1, 2), Multivector.basis_vector(2, 2)])
    for side in ("left", "right"):
        assert dirac_of_linear_map(ident, side) == Multivector.scalar(-2.0, 2)
    first = LinearMap.from_multivectors([Multivector.scalar(1.0, 2), Multivector.zero(2)])
    for side in ("left", "right"):
        assert dirac_of_linear_map(first, side) == Multivector.basis_vector(1, 2)


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_dirac_matches_oracle_and_is_linear(n, seed):
    rng = np.random.Generator(np.random.Philox(key=seed))
    a = rng.integers(-9, 10, size=(n, 1 << n)).astype(float)
    b = rng.integers(-9, 10, size=(n, 1 << n)).astype(float)
    A, B = LinearMap(n, a), LinearMap(n, b)
    for side in ("left", "right"):
        assert dirac_of_linear_map(A, side) == dirac_oracle([Multivector(n, r) for r in a], side)
        assert dirac_of_linear_map(A + B, side) == dirac_of_linear_map(A, side) + dirac_of_linear_map(B, side)


def test_hyperplane_example_n2():
    H = Hyperplane.from_normal([0.0, 1.0])
    lam = extend_from_hyperplane([Multivector.scalar(1.0, 2)], H, "left")
    assert Multivector(2, lam.apply([0.0, 1.0])) == -Multivector.blade(0b11, 2)
    assert Multivector(2, lam.apply([1.0, 0.0])) == Multivector.scalar(1.0, 2)
    assert dirac_oracle([Multivector(2, r) for r in lam.standard_images()], "left") == Multivector.zero(2)


def test_zero_data_extends_to_zero():
    H = Hyperplane.from_normal([1.0, 2.0, 2.0])
    lam = extend_from_hyperplane(np.zeros((2, 8)), H)
    assert not np.any(lam.standard_images())


def _random_instance(n, seed):
    rng = np.random.Generator(np.random.Philox(key=seed))
    H = Hyperplane.from_normal(rng.normal(size=n))
    return H, rng.normal(size=(n - 1, 1 << n)), rng


@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_extension_is_monogenic_and_restricts_exactly(n, seed):
    H, data, _ = _random_instance(n, seed)
    for side in ("left", "right"):
        lam = extend_from_hyperplane(data, H, side)
        assert np.array_equal(lam.images[: n - 1], data)
        defect = dirac_of_linear_map(lam, side).max_abs()
        assert defect <= 8 * EPS * dirac_scale(lam)
        # the other side is generally not monogenic, so the check above has teeth
        for k, u in enumerate(H.tangents):
            assert np.allclose(lam.apply(u), data[k], rtol=0, atol=8 * EPS * np.abs(data).max())


@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_extension_is_basis_independent(n, seed):
    H, data, rng = _random_instance(n, seed)
    q, _ = np.linalg.qr(rng.normal(size=(n - 1, n - 1)))
    H2 = Hyperplane(n, H.normal, q @ H.tangents)
    for side in ("left", "right"):
        a = extend_from_hyperplane(data, H, side)
        b = extend_from_hyperplane(q @ data, H2, side)  # same map, other basis
        assert np.allclose(a.standard_images(), b.standard_images(), rtol=0, atol=64 * EPS * max(1, np.abs(data).max()))
        assert hyperplane_uniqueness_check(a, b, H, side)


def test_uniqueness_examples_and_precondition():
    H, data, _ = _random_instance(3, 11)
    lam = extend_from_hyperplane(data, H)
    assert hyperplane_uniqueness_check(lam, lam, H)
    bump = np.zeros((3, 8))
    bump[2, 0] = 0.5  # extra image along the normal, nonzero Dirac
    bumped = LinearMap(3, lam.images + bump, lam.frame)
    with pytest.raises(PreconditionError):
        hyperplane_uniqueness_check(lam, bumped, H)


def test_normal_deviation_bounded_by_defect():
    H, data, rng = _random_instance(4, 5)
    lam = extend_from_hyperplane(data, H)
    for _ in range(20):
        delta = rng.normal(size=16) * 1e-3
        other = LinearMap(4, lam.images + np.vstack([np.zeros((3, 16)), delta]), lam.frame)
        eps = np.linalg.norm(dirac_of_linear_map(other).coeffs)
        diff = np.linalg.norm(other.apply(H.normal) - lam.apply(H.normal))
        assert diff <= eps * (1 + 1e-9) + 16 * EPS


def test_hyperplane_validation():
    with pytest.raises(PreconditionError):
        Hyperplane(2, [0.0, 2.0], [[1.0, 0.0]])
    with pytest.raises(PreconditionError):
        Hyperplane(2, [0.0, 1.0], [[1.0, 0.1]])
    with pytest.raises(PreconditionError):
        Hyperplane.from_normal([0.0, 0.0, 0.0])
    H = Hyperplane.from_normal([3.0, 4.0])
    assert abs(np.linalg.norm(H.normal) - 1) <= 4 * EPS


# --- Whitney compatibility ----------------------------------------------------


def _jet(A, f, df):
    return Jet1Field.from_function(A, f, df)


def test_affine_jet_has_zero_defect():
    A = generate_ifs("gasket", 5)
    beta = np.array([[1.0, 0.5, -2.0, 0.0], [0.0, 3.0, 0.25, 1.0]])
    jet = _jet(A, lambda p: 0.5 + p @ beta, lambda p: np.broadcast_to(beta, (len(p), 2, 4)))
    assert whitney_compatibility_defect(jet, 0.1) <= 1e-13


def test_quadratic_defect_halves_with_radius():
    A = generate_ifs("gasket", 7)
    f = lambda p: np.column_stack([p[:, 0] ** 2, np.zeros((len(p), 3))])
    df = lambda p: np.stack([np.column_stack([2 * p[:, 0], np.zeros((len(p), 3))]), np.zeros((len(p), 4))], axis=1)
    jet = _jet(A, f, df)
    big, small = whitney_compatibility_defect(jet, 0.1), whitney_compatibility_defect(jet, 0.05)
    # Taylor remainder: |dx_1|^2 / |dx| <= r, attained by horizontal chords
    assert big <= 0.1 * (1 + 1e-12)
    assert 0.75 * 2 <= big / small <= 1.25 * 2


def test_inconsistent_jet_defect_near_one():
    A = generate_ifs("gasket", 6)
    jet = _jet(A, lambda p: np.column_stack([p[:, 0], np.zeros((len(p), 3))]), lambda p: np.zeros((len(p), 2, 4)))
    for r in (0.2, 0.05, 0.02):
        assert whitney_compatibility_defect(jet, r) == pytest.approx(1.0, abs=1e-12)


def test_no_pairs_reported():
    A = generate_ifs("cantor2d", 2)
    jet = _jet(A, lambda p: np.zeros((len(p), 4)), lambda p: np.zeros((len(p), 2, 4)))
    with pytest.raises(NoPairsError):
        whitney_compatibility_defect(jet, 0.01)


# --- rigidity -----------------------------------------------------------------


def test_line_rigidity():
    A = line_cloud(50, direction=(1.0, 0.5))
    rr = rigidity_report(A, 2.5 * A.min_gap())
    assert np.all(rr.rank == 1) and not rr.determined.any()
    d = np.array([1.0, 0.5]) / np.linalg.norm([1.0, 0.5])
    for fd in rr.free_directions:
        assert fd.shape == (1, 2) and abs(fd[0] @ d) <= 1e-12


def test_circle_rigidity_small_radius():
    A = circle_cloud(200)
    rr = rigidity_report(A, 2 * A.min_gap())
    assert np.all(rr.rank == 1)
    normals = A.points / np.linalg.norm(A.points, axis=1, keepdims=True)
    for fd, nu in zip(rr.free_directions, normals):
        assert abs(abs(fd[0] @ nu) - 1) <= 1e-9


def test_gasket_rigidity_determined_everywhere():
    A = generate_ifs("gasket", 6)
    rr = rigidity_report(A, 2 * A.min_gap())
    assert np.all(rr.rank == 2) and rr.fraction_determined == 1.0


def test_isolated_points_flagged():
    A = SampledSet(2, np.array([[0.0, 0.0], [10.0, 0.0], [10.1, 0.0]]))
    rr = rigidity_report(A, 0.5, 1e-6)
    assert rr.isolated.tolist() == [True, False, False]
    assert rr.rank[0] == 0


@given(st.integers(0, 2**32 - 1))
def test_rigidity_rotation_invariant(seed):
    rng = np.random.Generator(np.random.Philox(key=seed))
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    A = generate_ifs("cantor2d", 3)
    B = SampledSet(2, A.points @ q.T + rng.normal(size=2), A.meta)
    r = 2.5 * A.min_gap()
    ra, rb = rigidity_report(A, r, 1e-6), rigidity_report(B, r, 1e-6)
    assert np.array_equal(ra.rank, rb.rank)
    for sa, sb in zip(ra.singular_values, rb.singular_values):
        assert np.allclose(sa, sb, rtol=0, atol=1e-10)


@pytest.mark.parametrize("name", [k for k in GOLDEN_RUNS if k.startswith("rigidity")])
def test_rigidity_reports_golden(name):
    exp, params = GOLDEN_RUNS[name]
    assert_matches(strip_version(experiment_results(exp, params)), load(name))


# --- jet integration ----------------------------------------------------------


@pytest.mark.parametrize("side", ["left", "right"])
def test_constant_differential_gives_affine(side):
    curve = lipschitz_graph_curve(sawtooth(1.5), 1.5, 301)
    beta = np.array([0.5, -1.0, 2.0, 0.25])
    f0 = np.array([1.0, 0.0, 0.0, -1.0])
    jet = integrate_prescribed_differentials(curve, beta, side, f0)
    B = Multivector(2, beta)
    p0 = embed_vector(curve.points[0])
    for k in (0, 17, 150, 300):
        d = embed_vector(curve.points[k]) - p0
        want = Multivector(2, f0) + (B * d if side == "left" else d * B)
        assert np.abs(jet.values[k] - want.coeffs).max() <= 8 * np.spacing(np.abs(want.coeffs).max())


def test_zero_differential_gives_constant():
    curve = lipschitz_graph_curve(sawtooth(1.0), 1.0, 50)
    jet = integrate_prescribed_differentials(curve, np.zeros(4), "left", [3.0, 0, 0, 1.0])
    assert np.all(jet.values == np.array([3.0, 0, 0, 1.0]))


@pytest.mark.parametrize("side", ["left", "right"])
def test_varying_differential_defect_halves(side):
    B = parse_coefficient("x1", 2)
    out = []
    for k in (200, 400):
        curve = lipschitz_graph_curve(sawtooth(1.0), 1.0, k + 1)
        jet = integrate_prescribed_differentials(curve, B, side)
        seg = float(np.linalg.norm(np.diff(curve.points, axis=0), axis=1).max())
        out.append(whitney_compatibility_defect(jet, 2.5 * seg))
    assert 0.7 * 2 <= out[0] / out[1] <= 1.3 * 2


def test_non_finite_field_rejected():
    curve = lipschitz_graph_curve(sawtooth(1.0), 1.0, 10)
    with pytest.raises(ValueError):
        integrate_prescribed_differentials(curve, np.array([np.nan, 0, 0, 0]))


def test_jet_json_records():
    curve = lipschitz_graph_curve(sawtooth(1.0), 1.0, 5)
    rec = integrate_prescribed_differentials(curve, np.array([1.0, 0, 0, 0])).to_json()
    assert len(rec) == 5 and set(rec[0]) == {"point", "value", "differential"}
    assert rec[0]["differential"] == [{"e1": 1.0}, {"e2": 1.0}]


# --- df = 0 -------------------------------------------------------------------


def _flat_jet(A, vals):
    return Jet1Field(A, vals, np.zeros((len(A.points), A.n, 1 << A.n)))


def test_constant_on_gasket_is_certified():
    A = generate_ifs("gasket", 5)
    res = vanishing_differential_consequence(A, _flat_jet(A, np.tile([2.0, 0, 0, 0], (len(A.points), 1))), 2 * A.min_gap())
    assert res["global_oscillation"] == 0 and res["certified_constant"] and res["connected"]


def test_two_values_on_dust():
    A = generate_ifs("cantor2d", 3)
    vals = np.zeros((len(A.points), 4))
    vals[A.points[:, 0] > 0.5, 0] = 1.0
    res = vanishing_differential_consequence(A, _flat_jet(A, vals), 2.5 * A.min_gap())
    assert res["max_cluster_oscillation"] == 0
    assert res["global_oscillation"] == 1.0
    assert not res["path_exists"] and not res["certified_constant"]


def test_x1_on_gasket_fails_certificate():
    A = generate_ifs("gasket", 5)
    vals = np.column_stack([A.points[:, 0], np.zeros((len(A.points), 3))])
    res = vanishing_differential_consequence(A, _flat_jet(A, vals), 2 * A.min_gap())
    assert res["defect_rate"] > 0.5 and not res["certified_constant"]
    assert res["global_oscillation"] <= res["oscillation_bound"] * (1 + 1e-12)
    with pytest.raises(PreconditionError):
        vanishing_differential_consequence(A, Jet1Field(A, vals, np.ones((len(A.points), 2, 4))), 0.1)


def test_parse_coefficient():
    f = parse_coefficient("2*x1*e12 + e1 - 0.5", 2)
    pts = np.array([[1.0, 0.0], [0.5, 3.0]])
    assert np.array_equal(f(pts), np.array([[-0.5, 1.0, 0.0, 2.0], [-0.5, 1.0, 0.0, 1.0]]))
    assert not f.constant
    g = parse_coefficient("e2", 3)
    assert g.constant and np.array_equal(g(pts[:, :1].repeat(3, 1)), np.tile([0, 0, 1.0, 0, 0, 0, 0, 0], (2, 1)))
    for bad in ("x3", "e3", "2**x1", ""):
        with pytest.raises(ValueError):
            parse_coefficient(bad, 2)
