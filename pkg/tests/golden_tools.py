"""Golden-file helpers: values recorded once by ``python tests/golden_tools.py``."""

import functools
import json
import sys
from pathlib import Path

import numpy as np

GOLDEN = Path(__file__).parent / "golden"


def gasket_corner_paths() -> dict:
    from scipy.spatial import cKDTree

    from cliffordlab.fractals import generate_ifs, rectifiable_path

    A = generate_ifs("gasket", 6)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2]])
    _, idx = cKDTree(A.points).query(corners)
    radius = 2 * A.min_gap()
    out = {"depth": 6, "radius": radius, "diameter": A.diameter(), "paths": []}
    for i, j in ((0, 1), (0, 2), (1, 2)):
        p, q = A.points[idx[i]], A.points[idx[j]]
        res = rectifiable_path(A, p, q, radius)
        out["paths"].append({"p": p.tolist(), "q": q.tolist(), "length": res.length, "hops": len(res.indices) - 1})
    return out


@functools.cache
def _cached_run(experiment: str, frozen: str) -> tuple[str, float]:
    from cliffordlab.experiments import ExperimentConfig, run_experiment

    rep = run_experiment(ExperimentConfig(experiment, json.loads(frozen)), write=False)
    return json.dumps(rep.result_section(), sort_keys=True), rep.wall_clock


def timed_results(experiment: str, params: dict) -> tuple[dict, float]:
    """(result section, wall-clock seconds) of one run, shared across the session."""
    text, wall = _cached_run(experiment, json.dumps(params, sort_keys=True))
    return json.loads(text), wall


def result_text(experiment: str, params: dict) -> str:
    return _cached_run(experiment, json.dumps(params, sort_keys=True))[0]


def experiment_results(experiment: str, params: dict) -> dict:
    return timed_results(experiment, params)[0]


def assert_matches(got, want, rel: float = 1e-9, path: str = "$") -> None:
    """Structural equality with a relative tolerance on floats."""
    if isinstance(want, dict):
        assert isinstance(got, dict) and set(got) == set(want), f"{path}: keys differ"
        for k in want:
            assert_matches(got[k], want[k], rel, f"{path}.{k}")
    elif isinstance(want, list):
        assert isinstance(got, list) and len(got) == len(want), f"{path}: lengths differ"
        for i, (g, w) in enumerate(zip(got, want)):
            assert_matches(g, w, rel, f"{path}[{i}]")
    elif isinstance(want, float) and not isinstance(want, bool):
        assert isinstance(got, (int, float)), f"{path}: {got!r} is not a number"
        assert abs(got - want) <= rel * max(abs(want), 1e-300), f"{path}: {got!r} != {want!r}"
    else:
        assert got == want, f"{path}: {got!r} != {want!r}"


def witness_record() -> dict:
    from cliffordlab.commutator import noncommutativity_witness, parse_field

    spec, n, trials, seed = "affine-right:beta=e1", 3, 1000, 11
    w = noncommutativity_witness(parse_field(spec, n), trials, seed)
    return {
        "n": n,
        "field": spec,
        "trials": trials,
        "seed": seed,
        "x": w.x.tolist(),
        "y": w.y.tolist(),
        "quotient": w.quotient.tolist(),
        "deviation": w.deviation,
    }


GOLDEN_RUNS = {
    "rigidity_gasket": ("rigidity", {"cloud": "gasket", "depth": 6}),
    "rigidity_line": ("rigidity", {"cloud": "line"}),
    "rigidity_circle": ("rigidity", {"cloud": "circle"}),
    "approx_null_cantor2d": ("approx-null", {"seed": 0}),
}


def load(name: str):
    return json.loads((GOLDEN / f"{name}.json").read_text())


def strip_version(section: dict) -> dict:
    section = dict(section)
    section.pop("version", None)
    return section


def write_all() -> None:
    GOLDEN.mkdir(exist_ok=True)
    (GOLDEN / "gasket_paths.json").write_text(json.dumps(gasket_corner_paths(), indent=2, sort_keys=True) + "\n")
    (GOLDEN / "witness_affine_right_e1.json").write_text(json.dumps(witness_record(), indent=2, sort_keys=True) + "\n")
    for name, (exp, params) in GOLDEN_RUNS.items():
        section = strip_version(experiment_results(exp, params))
        (GOLDEN / f"{name}.json").write_text(json.dumps(section, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    sys.path.insert(0, str(Path(__file__).parent))
    write_all()
