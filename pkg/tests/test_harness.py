import json
import math
import os
import shutil

import numpy as np
import pytest

from dgmbb import harness, kernels
from dgmbb.config import load_plan
from dgmbb.graph import Graph, generate_erdos_renyi, metropolis_weights
from dgmbb.harness import (
    ExperimentPlan,
    MethodSpec,
    ProblemSpec,
    iteration_spread,
    perturbed_steps,
    rate_fit,
    run_experiment,
    sweep_alpha0,
    sweep_inner_loops,
    tune_constant_step,
)
from dgmbb.objective import LeastSquaresInstance, generate_sensing_instance
from dgmbb.records import CSV_COLUMNS, RunRecord
from dgmbb.solvers import SolverConfig, run

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="module")
def small():
    inst = generate_sensing_instance(12, 6, 4, seed=5)
    W = metropolis_weights(generate_erdos_renyi(12, 0.4, 2)).W
    return inst, W


# ---------------------------------------------------------------------------
# rate fits


def test_rate_fit_geometric_sequence():
    assert abs(rate_fit(0.9 ** np.arange(80)) - 0.9) < 1e-10


def test_rate_fit_constant_sequence():
    assert rate_fit(np.full(40, 0.3)) == pytest.approx(1.0, abs=1e-15)


def test_rate_fit_stops_at_floor():
    e = np.concatenate([0.5 ** np.arange(40), np.full(30, 1e-13)])
    assert rate_fit(e, floor=1e-12) == pytest.approx(0.5, rel=1e-10)


def test_rate_fit_rejects_short_window():
    with pytest.raises(ValueError):
        rate_fit(0.9 ** np.arange(12))
    with pytest.raises(ValueError):
        rate_fit(0.9 ** np.arange(50), window=5)


# ---------------------------------------------------------------------------
# step tuning


def test_tune_single_agent_quadratic_brackets_classical_optimum():
    # spectrum {0.5, 1}: the fastest constant step is 2/(mu + L)
    inst = LeastSquaresInstance(M=np.diag(np.sqrt([0.5, 1.0]))[None], y=np.array([[1.0, -2.0]]))
    grid = harness.default_grid(inst.L)
    res = tune_constant_step("dgd", inst, np.eye(1), grid=grid)
    assert res.converged
    target = 2 / (inst.mu + inst.L)
    below, above = grid[grid <= target].max(), grid[grid >= target].min()
    assert res.alpha in (below, above)


def test_tune_one_point_grid(small):
    inst, W = small
    res = tune_constant_step("extra", inst, W, grid=[0.3])
    assert res.alpha == 0.3 and res.converged


def test_tune_matches_brute_force(small):
    inst, W = small
    grid = np.geomspace(0.05, 1.5, 9)
    res = tune_constant_step("extra", inst, W, grid=grid)
    counts = {}
    for a in grid:
        try:
            rec = run(SolverConfig("extra", alpha=float(a), max_iter=10_000, target=1e-6), inst, W)
            counts[float(a)] = rec.iterations if rec.converged else None
        except Exception:
            counts[float(a)] = None
    best = min(k for k in counts.values() if k is not None)
    assert res.iterations == best
    assert res.alpha == min(a for a, k in counts.items() if k == best)


def test_tune_flags_when_nothing_converges(small):
    inst, W = small
    res = tune_constant_step("dgd", inst, W, grid=[0.05, 0.1], max_iter=3000)
    assert not res.converged and res.iterations is None
    assert res.alpha in (0.05, 0.1)


def test_tune_rejects_bb_method(small):
    inst, W = small
    with pytest.raises(ValueError):
        tune_constant_step("dgm-bb-c", inst, W)


def test_perturbed_steps_range_and_determinism():
    a = perturbed_steps(1.0, 500, 3)
    assert a.min() > 0.6 and a.max() < 1.2
    assert np.array_equal(a, perturbed_steps(1.0, 500, 3))


# ---------------------------------------------------------------------------
# sweeps


def test_sweep_alpha0_single_point_equals_plain_run(small):
    inst, W = small
    recs = sweep_alpha0(inst, W, [1.4], R=2, max_iter=100)
    plain = run(SolverConfig("dgm-bb-c", R=2, alpha0=1.4, max_iter=100), inst, W)
    assert recs[1.4].columns == plain.columns


def test_sweep_inner_loops_counts(small):
    inst, W = small
    recs = sweep_inner_loops(inst, W, [1, 2, 3], max_iter=60, target=0.0)
    for R, rec in recs.items():
        K = np.asarray(rec.columns["k"])
        assert rec.columns["comm_rounds"] == (2 * R * K).tolist()


def test_iteration_spread_recount():
    assert iteration_spread([10, 11, 12]) == 12 / 10
    assert iteration_spread([10, None]) == math.inf


# ---------------------------------------------------------------------------
# plans, invariants and artifacts


def test_empty_plan_rejected():
    with pytest.raises(ValueError):
        run_experiment(ExperimentPlan(methods=[]))


def test_seeds_are_derived_and_distinct():
    s = harness.derive_seeds(0)
    assert len(set(s.values())) == 3
    assert s == harness.derive_seeds(0) and s != harness.derive_seeds(1)


def test_run_experiment_writes_artifacts_and_checks(tmp_path):
    plan = ExperimentPlan(
        problem=ProblemSpec(n=10, m=5, p=3, r_c=0.5),
        methods=[MethodSpec("dgm-bb-c", R="auto"), MethodSpec("extra"), MethodSpec("atc-diging")],
        max_iter=400,
        output_dir=str(tmp_path),
    )
    res = run_experiment(plan)
    assert res.ok
    assert sorted(os.listdir(tmp_path)) == ["atc-diging.csv", "dgm-bb-c.csv", "extra.csv", "summary.json"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    s = summary["runs"]["dgm-bb-c"]
    assert s["to_1e-10"]["iterations"] is not None
    assert 1.0 - 1e-9 <= s["alpha_max"] <= 2.0 + 1e-9
    assert s["meta"]["certificate"]["R"] == s["meta"]["R"]
    assert summary["runs"]["atc-diging"]["meta"]["tuned_converged"]
    rec = res.records["dgm-bb-c"]
    cost = np.array(rec.columns["comm_rounds"]) + np.array(rec.columns["grad_evals"]) / 10
    assert np.array_equal(cost, rec.array("cost"))


def test_partial_record_written_on_divergence(tmp_path):
    plan = ExperimentPlan(
        problem=ProblemSpec(n=8, m=4, p=3, r_c=0.6),
        methods=[MethodSpec("dgd", alpha=8.0)],
        max_iter=200,
        output_dir=str(tmp_path),
    )
    res = run_experiment(plan)
    assert not res.ok
    rec = res.records["dgd"]
    assert rec.aborted
    lines = (tmp_path / "dgd.csv").read_text().splitlines()
    assert len(lines) == len(rec) + 1


def test_check_invariants_flags_bad_tracking(small):
    inst, W = small
    rec = run(SolverConfig("diging", alpha=0.1, max_iter=20), inst, W)
    rec.tracking_residual[5] = 1e-3
    assert harness.check_invariants(rec, inst)["gradient_tracking"] is False


def _golden_dir():
    return os.path.join(DATA, f"smoke_{kernels.backend_name()}")


def test_smoke_plan_matches_golden_csv(tmp_path):
    plan = load_plan(os.path.join(DATA, "smoke.ini"))
    plan.output_dir = str(tmp_path)
    res = run_experiment(plan)
    assert res.ok
    for name in ("dgm-bb-c", "extra", "atc-diging"):
        with open(os.path.join(_golden_dir(), f"{name}.csv"), "rb") as fh:
            golden = fh.read()
        assert (tmp_path / f"{name}.csv").read_bytes() == golden, name


def test_smoke_plan_is_deterministic(tmp_path):
    plan = load_plan(os.path.join(DATA, "smoke.ini"))
    a = run_experiment(plan).records["dgm-bb-c"].columns
    b = run_experiment(plan).records["dgm-bb-c"].columns
    assert a == b


def test_fixture_agent_count_mismatch(tmp_path):
    shutil.copy(os.path.join(DATA, "smoke_instance.json"), tmp_path / "i.json")
    from dgmbb import fixtures

    fixtures.save(Graph(4, ((0, 1), (1, 2), (2, 3))), tmp_path / "g.json")
    spec = ProblemSpec(instance_file=str(tmp_path / "i.json"), graph_file=str(tmp_path / "g.json"))
    with pytest.raises(ValueError):
        harness.build_problem(spec, 0)
