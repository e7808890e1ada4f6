import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gloloc import cli, harness
from gloloc.control import BasisSpec
from gloloc.de import DEConfig, Member
from gloloc.gradient import ControlObjective
from gloloc.hybrid import GenerationRecord, HybridConfig
from gloloc.local import LocalOptConfig, group_optimize
from gloloc.surrogates import QuadraticSurrogate

SMALL = {"n_points": 128, "dt": 2e-3}


def small_config(tmp_path, **kw):
    base = dict(
        problem="CS",
        durations_ms=[0.3],
        hybrid=HybridConfig(
            de=DEConfig(population_size=6), local=LocalOptConfig(max_iterations=3), max_generations=2, master_seed=1
        ),
        local=LocalOptConfig(max_iterations=5),
        M=3,
        output_dir=str(tmp_path),
        problem_overrides=dict(SMALL),
    )
    base.update(kw)
    return harness.RunConfig(**base)


def test_config_round_trip(tmp_path):
    cfg = small_config(tmp_path)
    again = harness.config_from_dict(json.loads(json.dumps(harness.config_to_dict(cfg))))
    assert again == cfg
    assert harness.config_hash(again) == harness.config_hash(cfg)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        small_config(tmp_path, durations_ms=[0.0])
    with pytest.raises(ValueError):
        small_config(tmp_path, mode="annealing")
    with pytest.raises(ValueError):
        harness.config_from_dict({"bogus": 1})


def test_yaml_config_with_overrides(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("problem: CS\ndurations_ms: [0.5, 1.0]\nhybrid:\n  de:\n    population_size: 8\n")
    cfg = harness.load_config(path, {"hybrid.master_seed": 7, "problem_overrides.n_points": 64})
    assert cfg.durations_ms == [0.5, 1.0]
    assert cfg.hybrid.de.population_size == 8
    assert cfg.hybrid.master_seed == 7
    assert cfg.problem_overrides == {"n_points": 64}


@given(values=st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
@settings(max_examples=40, deadline=None)
def test_csv_round_trip_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "v.csv"
    harness.write_csv(path, ("i", "value"), enumerate(values))
    header, data = harness.read_csv(path)
    assert header == ["i", "value"]
    assert data[:, 1].tolist() == values


def test_atomic_write_leaves_no_partial_file(tmp_path):
    path = tmp_path / "out.csv"
    harness.write_csv(path, ("a",), [(1.0,)])

    def broken_rows():
        yield (2.0,)
        raise RuntimeError("disk on fire")

    with pytest.raises(RuntimeError):
        harness.write_csv(path, ("a",), broken_rows())
    assert harness.read_csv(path)[1].tolist() == [[1.0]]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out.csv"]


def _records(medians):
    return [
        GenerationRecord(g, np.array([m]), m, m, m, m, 0, 10 * (g + 1))
        for g, m in enumerate(medians)
    ]


def test_export_learning_schema(tmp_path):
    path = harness.export_learning(_records([3.0, 2.0, 2.0, 1.0]), tmp_path / "learn.csv", None, seed=4)
    header, data = harness.read_csv(path)
    assert tuple(header) == harness.LEARNING_COLUMNS
    assert data.shape == (4, 7)
    meta = json.loads(harness.sidecar_path(path).read_text())
    assert meta["seed"] == 4
    assert "numpy" in meta["versions"]


def test_export_learning_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        harness.export_learning([], tmp_path / "empty.csv")
    assert not (tmp_path / "empty.csv").exists()
    with pytest.raises(ValueError):
        harness.export_learning(_records([1.0, 2.0]), tmp_path / "up.csv")


def test_single_local_matches_direct_call(tmp_path):
    cfg = small_config(tmp_path, mode="single-local")
    rec = harness.sweep_F_of_T(cfg, write=False)[0]
    problem = harness.make_problem(cfg)
    T = problem.duration_from_ms(0.3)
    g = harness._initial_genome(cfg.seed, 0, cfg.M, cfg.hybrid.de)
    direct = group_optimize(g[:3], BasisSpec(g[3:], T), ControlObjective(problem, T), cfg.local)
    assert rec.best_coeffs == direct.best_coeffs.tolist()
    assert rec.best_infidelity == direct.best_cost.infidelity
    assert rec.evals == direct.evals


def test_multistart_zero_iterations_gives_best_random_start(tmp_path):
    cfg = small_config(tmp_path, mode="multistart", local=LocalOptConfig(max_iterations=0))
    problem = harness.make_problem(cfg)
    T = problem.duration_from_ms(0.3)
    best, evals, runs = harness.run_multistart(problem, T, cfg)
    obj = ControlObjective(problem, T)
    starts = [harness._initial_genome(cfg.seed, k, 3, cfg.hybrid.de) for k in range(6)]
    costs = [obj.evaluate(g[:3], g[3:]).total for g in starts]
    assert evals == 6
    assert best.cost == min(costs)


def test_multistart_respects_budget(tmp_path):
    cfg = small_config(tmp_path, local=LocalOptConfig(max_iterations=50))
    problem = harness.make_problem(cfg)
    _, evals, runs = harness.run_multistart(problem, problem.duration_from_ms(0.3), cfg, max_evals=40)
    assert evals == 40
    assert len(runs) >= 1


def test_convex_surrogate_multistart_equals_hybrid():
    from gloloc import hybrid

    q = QuadraticSurrogate.random(4, seed=2, condition=5.0)
    basis = BasisSpec(np.zeros(4), 1.0)
    cfg = HybridConfig(de=DEConfig(population_size=8), F_conv=1.0, max_generations=5, master_seed=0)
    h = hybrid.run(q, basis, cfg)
    best_ms = min(
        group_optimize(g[:4], basis, q).best_cost.total
        for g in (harness._initial_genome(0, k, 4, cfg.de) for k in range(8))
    )
    assert h.best.cost == pytest.approx(best_ms, abs=1e-6)


def test_sweep_writes_files_and_replays(tmp_path):
    cfg = small_config(tmp_path)
    records = harness.sweep_F_of_T(cfg)
    assert len(records) == 1 and records[0].error is None
    sweep = tmp_path / "hybrid_sweep.csv"
    learning = tmp_path / "learning_T0.3ms.csv"
    assert sweep.exists() and learning.exists()
    header, data = harness.read_csv(learning)
    assert np.all(np.diff(data[:, header.index("median")]) <= 0)
    rec, member = harness.replay(harness.sidecar_path(sweep))
    assert rec.best_coeffs == records[0].best_coeffs
    assert rec.best_infidelity == records[0].best_infidelity


def test_replay_detects_edits(tmp_path):
    cfg = small_config(tmp_path, mode="single-local")
    harness.sweep_F_of_T(cfg)
    side = tmp_path / "single-local_sweep.json"
    meta = json.loads(side.read_text())
    meta["config"]["M"] = 4
    side.write_text(json.dumps(meta))
    with pytest.raises(ValueError):
        harness.replay(side)


def test_sweep_records_failures(tmp_path):
    cfg = small_config(tmp_path, mode="single-local", durations_ms=[0.3, 0.2])
    cfg = dataclasses.replace(cfg, problem_overrides={**SMALL, "u_bounds": [0.0, 1.0]})
    original = harness.run_point

    def flaky(c, T_ms, *a, **k):
        if T_ms == 0.3:
            raise RuntimeError("worker lost")
        return original(c, T_ms, *a, **k)

    harness.run_point = flaky
    try:
        records = harness.sweep_F_of_T(cfg, write=False)
    finally:
        harness.run_point = original
    assert "worker lost" in records[0].error
    assert records[1].error is None


def test_export_control_pins_endpoints(tmp_path, cs_problem):
    rng = np.random.default_rng(0)
    member = Member(np.r_[rng.uniform(-1, 1, 4), rng.uniform(-0.5, 0.5, 4)], 0.0)
    T = cs_problem.duration_from_ms(0.5)
    path, dens = harness.export_control(member, cs_problem, T, tmp_path / "ctrl.csv")
    header, data = harness.read_csv(path)
    assert header == ["t", "u", "v", "x_mean"]
    assert data[0, 1] == cs_problem.u_start and data[-1, 1] == cs_problem.u_end
    dh, dd = harness.read_csv(dens)
    assert dd.shape == (11, cs_problem.grid.n_points + 1)
    np.testing.assert_allclose(dd[:, 1:].sum(axis=1) * cs_problem.grid.dx, 1.0, atol=1e-10)


def test_cli_single_and_export(tmp_path, capsys):
    args = ["single", "--problem", "CS", "--T", "0.3", "--seed", "2", "--M", "3",
            "--output-dir", str(tmp_path), "--set", "problem_overrides.n_points=128",
            "--set", "local.max_iterations=3"]
    assert cli.main(args) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["records"][0]["T_ms"] == 0.3
    side = tmp_path / "single-local_sweep.json"
    assert cli.main(["export", str(side), "--output", str(tmp_path / "c.csv")]) == 0
    assert (tmp_path / "c_density.csv").exists()


def test_cli_error_json(tmp_path, capsys):
    assert cli.main(["single", "--T", "-1", "--output-dir", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValueError"
    assert cli.main(["export", str(tmp_path / "missing.json"), "--output", str(tmp_path / "x.csv")]) == 1
    assert "error" in json.loads(capsys.readouterr().err)
