import math

import numpy as np
import pyarrow as pa
import pytest
import yaml

from pogosim.config import OptimAnnotation
from pogosim.optim import (
    CMAES,
    EliteArchive,
    Evaluation,
    OptimError,
    SearchSpace,
    features_default,
    make_evaluator,
    objective_default,
    optimize,
    per_agent_msd,
    space_from_tree,
)

NEG_INF = float("-inf")


def float_dim(path="parameters.a", lo=0.0, hi=1.0, init=None):
    return OptimAnnotation(path=path, kind="float", min=lo, max=hi, init=init)


# -- search space ------------------------------------------------------------


def test_encode_decode_roundtrip_float():
    space = SearchSpace([float_dim(lo=10.0, hi=1000.0)])
    for v in (10.0, 250.0, 999.0, 1000.0):
        x = space.encode({"parameters.a": v})
        assert space.decode(x)["parameters.a"] == pytest.approx(v)


def test_encode_decode_roundtrip_int():
    space = SearchSpace([OptimAnnotation(path="parameters.n", kind="int",
                                         min=1, max=9)])
    for v in range(1, 10):
        x = space.encode({"parameters.n": float(v)})
        assert space.decode(x)["parameters.n"] == v


def test_encode_decode_roundtrip_categorical():
    space = SearchSpace([OptimAnnotation(path="parameters.c", kind="categorical",
                                         choices=("red", "green", "blue"))])
    for v in ("red", "green", "blue"):
        x = space.encode({"parameters.c": v})
        assert space.decode(x)["parameters.c"] == v


def test_decode_always_in_domain():
    space = SearchSpace([float_dim(lo=5.0, hi=6.0)])
    for u in (-1.0, 0.0, 0.5, 1.0, 2.0):
        v = space.decode(np.array([u]))["parameters.a"]
        assert 5.0 <= v <= 6.0


def test_empty_space_rejected():
    with pytest.raises(OptimError, match="nothing to optimize"):
        SearchSpace([])


def test_space_from_tree():
    tree = yaml.safe_load("""
parameters:
  speed:
    optimization_domain: {type: float, min: 0.0, max: 2.0, init: 1.0}
""")
    space = space_from_tree(tree)
    assert space.d == 1
    assert space.initial_point()[0] == pytest.approx(0.5)


# -- default objective ---------------------------------------------------------


def make_table(rows):
    cols = {"time": [], "robot_id": [], "x": [], "y": []}
    for t, rid, x, y in rows:
        cols["time"].append(t)
        cols["robot_id"].append(rid)
        cols["x"].append(x)
        cols["y"].append(y)
    return pa.table({
        "time": pa.array(cols["time"], pa.float64()),
        "robot_id": pa.array(cols["robot_id"], pa.uint16()),
        "x": pa.array(cols["x"], pa.float64()),
        "y": pa.array(cols["y"], pa.float64()),
    })


def test_objective_stationary_zero():
    table = make_table([(t, rid, 3.0, 4.0) for t in (0.0, 1.0, 2.0)
                        for rid in (0, 1)])
    assert objective_default(table) == 0.0


def test_objective_constant_velocity_closed_form():
    # x(t) = v t sampled densely: mean over samples of (v t)^2 -> v^2 T^2 / 3
    v, T, n = 2.0, 10.0, 2000
    times = np.linspace(0.0, T, n)
    table = make_table([(t, 0, v * t, 0.0) for t in times])
    assert objective_default(table) == pytest.approx(v * v * T * T / 3, rel=1e-2)


def test_objective_empty_records():
    assert objective_default(make_table([])) == NEG_INF


def test_objective_ignores_walls_and_membranes():
    rows = [(0.0, 0, 0.0, 0.0), (1.0, 0, 1.0, 0.0),
            (0.0, 65535, 0.0, 0.0), (1.0, 65535, 100.0, 0.0)]
    table = make_table(rows)
    assert objective_default(table) == pytest.approx(0.5)  # mean of {0, 1}


def test_features_default():
    # two agents with MSD {0, 8} -> (8.0, 4.0) with population stddev
    rows = [(0.0, 0, 0.0, 0.0), (1.0, 0, 0.0, 0.0),
            (0.0, 1, 0.0, 0.0), (1.0, 1, 4.0, 0.0)]
    table = make_table(rows)
    # agent 1: samples (0, 16) -> MSD 8
    assert features_default(table) == (8.0, 4.0)


def test_features_empty():
    assert features_default(make_table([])) == (0.0, 0.0)


def test_features_identical_agents_zero_stddev():
    rows = []
    for rid in (0, 1, 2):
        rows += [(0.0, rid, 0.0, 0.0), (1.0, rid, 2.0, 0.0)]
    assert features_default(make_table(rows))[1] == 0.0


# -- CMA-ES -------------------------------------------------------------------


def test_cmaes_popsize_d1():
    assert CMAES(np.array([0.5])).lam == 4


def test_cmaes_sphere_d3():
    space = SearchSpace([float_dim(f"parameters.p{i}") for i in range(3)])

    def ev(x):
        return Evaluation(params=space.decode(x),
                          fitness=-float(np.sum((np.asarray(x) - 0.7) ** 2)))

    result = optimize(space, ev, method="cmaes", max_evals=300, seed=1)
    for i in range(3):
        assert abs(result.best.params[f"parameters.p{i}"] - 0.7) < 1e-2
    assert result.evaluations <= 300


def test_cmaes_beats_random_on_sphere():
    space = SearchSpace([float_dim(f"parameters.p{i}") for i in range(3)])

    def ev(x):
        return Evaluation(params=space.decode(x),
                          fitness=-float(np.sum((np.asarray(x) - 0.7) ** 2)))

    cma = optimize(space, ev, method="cmaes", max_evals=300, seed=1)
    rnd = optimize(space, ev, method="random", max_evals=300, seed=1)
    assert cma.best.fitness > rnd.best.fitness


def test_budget_respected_exactly():
    space = SearchSpace([float_dim()])
    calls = [0]

    def ev(x):
        calls[0] += 1
        return Evaluation(params=space.decode(x), fitness=0.0)

    for method in ("random", "cmaes", "mapelites"):
        calls[0] = 0
        optimize(space, ev, method=method, max_evals=10, seed=0)
        assert calls[0] == 10


def test_final_generation_truncated(caplog):
    import logging

    space = SearchSpace([float_dim()])

    def ev(x):
        return Evaluation(params=space.decode(x), fitness=float(x[0]))

    with caplog.at_level(logging.INFO, logger="pogoptim"):
        optimize(space, ev, method="cmaes", max_evals=10, seed=0)
    pops = [int(r.message.split("pop=")[1]) for r in caplog.records
            if "pop=" in r.message]
    assert pops == [4, 4, 2]


def test_random_budget_one():
    space = SearchSpace([float_dim()])
    seen = []

    def ev(x):
        seen.append(x)
        return Evaluation(params=space.decode(x), fitness=1.0)

    result = optimize(space, ev, method="random", max_evals=1, seed=0)
    assert len(seen) == 1
    assert result.best.fitness == 1.0


def test_best_so_far_monotone():
    space = SearchSpace([float_dim(f"parameters.p{i}") for i in range(2)])

    def ev(x):
        return Evaluation(params=space.decode(x),
                          fitness=-float(np.sum((np.asarray(x) - 0.3) ** 2)),
                          features=(float(x[0]), float(x[1])))

    for method in ("random", "cmaes", "mapelites"):
        result = optimize(space, ev, method=method, max_evals=60, seed=3)
        assert result.history == sorted(result.history)


def test_determinism_same_seed():
    space = SearchSpace([float_dim(f"parameters.p{i}") for i in range(2)])
    trajectories = []
    for _ in range(2):
        xs = []

        def ev(x):
            xs.append(tuple(np.round(x, 12)))
            return Evaluation(params=space.decode(x),
                              fitness=-float(np.sum((np.asarray(x) - 0.5) ** 2)))

        optimize(space, ev, method="cmaes", max_evals=40, seed=9)
        trajectories.append(xs)
    assert trajectories[0] == trajectories[1]


def test_unknown_method():
    space = SearchSpace([float_dim()])
    with pytest.raises(OptimError, match="unknown optimizer"):
        optimize(space, lambda x: Evaluation(params={}, fitness=0.0),
                 method="annealing", max_evals=5)


# -- MAP-Elites archive ----------------------------------------------------------


def test_archive_never_downgrades():
    archive = EliteArchive(bounds=[(0.0, 1.0), (0.0, 1.0)], resolution=4)
    x = np.array([0.5])
    good = Evaluation(params={}, fitness=5.0, features=(0.2, 0.2))
    worse = Evaluation(params={}, fitness=1.0, features=(0.2, 0.2))
    assert archive.add(x, good)
    assert not archive.add(x, worse)
    [(_, held)] = archive.elites()
    assert held.fitness == 5.0


def test_archive_distinct_cells():
    archive = EliteArchive(bounds=[(0.0, 1.0), (0.0, 1.0)], resolution=4)
    archive.add(np.array([0.1]), Evaluation(params={}, fitness=1.0, features=(0.1, 0.1)))
    archive.add(np.array([0.9]), Evaluation(params={}, fitness=2.0, features=(0.9, 0.9)))
    assert len(archive.cells) == 2


# -- simulation-backed evaluation ---------------------------------------------------


OPTIM_YAML = """
seed: 5
simulation_time: 2.0
time_step: 0.01
save_data_period: 0.5
arena_surface: 1.0e5
controller: run_and_tumble
objects:
  robots:
    type: pogobot
    nb: 3
parameters:
  run_duration_min: 10
  run_duration_max:
    optimization_domain: {type: int, min: 10, max: 1000}
  tumble_duration_min: 100
  tumble_duration_max: 200
"""


def test_make_evaluator_runs_simulations():
    tree = yaml.safe_load(OPTIM_YAML)
    space = space_from_tree(tree)
    evaluator = make_evaluator(tree, space, runs_per_eval=2)
    ev = evaluator(np.array([1.0]))
    assert ev.params["parameters.run_duration_max"] == 1000
    assert math.isfinite(ev.fitness)
    assert ev.fitness > 0.0


def test_external_objective_script(tmp_path):
    script = tmp_path / "score.py"
    script.write_text(
        "import sys\n"
        "import pyarrow.feather as feather\n"
        "table = feather.read_table(sys.argv[1])\n"
        "print(float(table.num_rows))\n",
        encoding="utf-8")
    tree = yaml.safe_load(OPTIM_YAML)
    space = space_from_tree(tree)
    evaluator = make_evaluator(tree, space, runs_per_eval=1,
                               objective=str(script))
    ev = evaluator(np.array([0.5]))
    assert ev.fitness == 3 * 4  # 3 robots x 4 sampling instants
