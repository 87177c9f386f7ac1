import json

import numpy as np
import pytest

from imdpkit.engine import Policy
from imdpkit.gridding import AVOID, OTHER, TARGET, Specification, build_grid
from imdpkit.harness import export
from imdpkit.harness.cli import EXIT_INVALID, EXIT_OK, main
from imdpkit.harness.config import ConfigError, load_config, resolve, validate_config
from imdpkit.harness.montecarlo import McResult, monte_carlo, wilson_interval
from imdpkit.harness.runner import InitialCheck, RunRecord, set_workers
from imdpkit.models import NoiseFamily, Space, StochasticSystem


# configuration


def test_schema_accepts_a_benchmark_run():
    run = validate_config({"benchmark": "ic2", "engine": {"epsilon": 1e-5}, "montecarlo": {"runs": 50, "seed": 3}})
    assert (run.epsilon, run.runs, run.seed) == (1e-5, 50, 3)


@pytest.mark.parametrize(
    "doc, where",
    [
        ({"benchmark": "ic2", "colour": "red"}, "<root>"),
        ({"benchmark": "ic2", "engine": {"eps": 1}}, "engine"),
        ({"benchmark": "ic2", "engine": {"epsilon": 0}}, "engine/epsilon"),
        ({"benchmark": "ic2", "montecarlo": {"runs": 0}}, "montecarlo/runs"),
        ({"benchmark": "nope"}, "benchmark"),
        ({"benchmark": "ic2", "variant": "huge"}, "variant"),
        ({}, "<root>"),
    ],
)
def test_schema_rejections_name_the_field(doc, where):
    with pytest.raises(ConfigError) as exc:
        validate_config(doc)
    assert any(e.startswith(where) for e in exc.value.errors)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="no such file"):
        load_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)


def test_overrides_are_applied():
    run = validate_config({"benchmark": "ic2", "grid": {"eta": [1.0, 1.0]}, "engine": {"horizon": 3},
                           "montecarlo": {"initial_points": [[0.0, 0.0]]}})
    b = resolve(run)
    assert b.grid().n_states == 441
    assert b.spec.horizon == 3
    assert b.initial_points.tolist() == [[0.0, 0.0]]


def test_inline_model():
    run = validate_config({
        "model": {"A": [[0.5]], "B": [[1.0]], "sigma": [0.1],
                  "state_space": {"lower": [-1], "upper": [1], "eta": [0.5]},
                  "input_space": {"lower": [0], "upper": [0], "eta": [1]}},
        "spec": {"kind": "reach", "target": [{"lower": [-0.25], "upper": [0.25]}], "horizon": 2},
    })
    b = resolve(run)
    assert b.grid().n_states == 5 and b.spec.horizon == 2


# Monte Carlo


def test_wilson_interval_hand_value():
    # n = 100, k = 50, z = 2.5758: centre 0.5, half = z * sqrt(0.0025 + z^2/40000) / (1 + z^2/100)
    z = 2.5758293035489004
    half = z * np.sqrt(0.0025 + z * z / 40000) / (1 + z * z / 100)
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.5 - half, abs=1e-12)
    assert hi == pytest.approx(0.5 + half, abs=1e-12)


def test_wilson_edges():
    lo, hi = wilson_interval(0, 10_000)
    assert lo == 0.0 and 0 < hi < 1e-3
    lo, hi = wilson_interval(10_000, 10_000)
    assert hi == 1.0 and lo > 0.999
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_containment_uses_delta():
    r = McResult(0.5, 50, 100, 0.4, 0.6)
    assert r.delta == pytest.approx(0.1)
    assert r.contained(0.55, 0.9)
    assert not r.contained(0.61, 0.9)


def _walk(drift, sigma=0.1):
    return StochasticSystem("walk", 1, Space.make([0.0], [0.0], [1.0]), lambda x, u, w: x + drift,
                            NoiseFamily.gaussian([sigma]), affine_A=np.eye(1))


def test_mc_starting_in_target_succeeds():
    g = build_grid([0], [4], [1])
    labels = np.array([OTHER, OTHER, OTHER, OTHER, TARGET, AVOID])
    pol = Policy(np.zeros(6, np.int64), True)
    r = monte_carlo(_walk(1.0), g, pol, labels, [[0.0]], Specification("reach"), [4.0], runs=200)
    assert r.frequency == 1.0


def test_mc_deterministic_drift_reaches_target():
    g = build_grid([0], [4], [1])
    labels = np.array([OTHER, OTHER, OTHER, OTHER, TARGET, AVOID])
    pol = Policy(np.zeros(6, np.int64), True)
    spec = Specification("reach", horizon=4)
    assert monte_carlo(_walk(1.0, 0.01), g, pol, labels, [[0.0]], spec, [0.0], runs=500).frequency == 1.0
    short = spec.with_horizon(3)
    assert monte_carlo(_walk(1.0, 0.01), g, pol, labels, [[0.0]], short, [0.0], runs=500).frequency == 0.0


def test_mc_leaving_the_grid_fails_safety():
    g = build_grid([0], [4], [1])
    labels = np.array([OTHER] * 5 + [AVOID])
    pol = Policy(np.zeros(6, np.int64), True)
    r = monte_carlo(_walk(2.0, 0.01), g, pol, labels, [[0.0]], Specification("safety", horizon=3), [0.0], runs=100)
    assert r.frequency == 0.0
    r = monte_carlo(_walk(2.0, 0.01), g, pol, labels, [[0.0]], Specification("safety", horizon=2), [0.0], runs=100)
    assert r.frequency == 1.0


def test_mc_unresolved_runs_are_counted():
    g = build_grid([0], [4], [1])
    labels = np.array([OTHER] * 4 + [TARGET, AVOID])
    pol = Policy(np.zeros(6, np.int64), True)
    r = monte_carlo(_walk(0.0, 0.0), g, pol, labels, [[0.0]], Specification("reach"), [1.0], runs=10, max_steps=5)
    assert r.frequency == 0.0 and r.unresolved == 10


def test_mc_is_reproducible():
    g = build_grid([0], [4], [1])
    labels = np.array([OTHER] * 4 + [TARGET, AVOID])
    pol = Policy(np.zeros(6, np.int64), True)
    args = (_walk(0.3, 0.8), g, pol, labels, [[0.0]], Specification("reach", horizon=10), [1.0])
    a = monte_carlo(*args, runs=1000, seed=4)
    b = monte_carlo(*args, runs=1000, seed=4)
    c = monte_carlo(*args, runs=1000, seed=5)
    assert a == b
    assert a.successes != c.successes


# export


def test_float_text_round_trips():
    for x in (0.1, 1 / 3, 1e-300, 0.0, 1.0, 123456789.123):
        assert float(export.fmt_float(x)) == x
    assert export.fmt_float(0.0) == "0.0"
    assert export.dumps([float("nan"), float("inf")]).strip() == "[null, null]"


def test_record_round_trip(tmp_path):
    rec = RunRecord("ic2", "default", "reach", 5, 1e-6, {"states": 1681}, summary={"max_lower": 0.5},
                    initial=[InitialCheck([0.0, 0.0], 840, 0.25, 0.75, {"frequency": 0.5}, True)],
                    seed=1, runs=10, verdict="pass", timings={"synthesis": 1.5})
    path = export.export_results(rec, tmp_path / "r.json")
    back = export.load_results(path)
    assert back.deterministic() == rec.deterministic()
    assert back.timings == rec.timings
    assert "timings" not in json.loads(path.read_text())


def test_empty_record_exports(tmp_path):
    rec = RunRecord()
    export.export_results(rec, tmp_path / "e.json")
    export.export_results(rec, tmp_path / "e.csv", "csv")
    header, rows = export.read_csv(tmp_path / "e.csv")
    assert header == export.BENCH_HEADER
    assert rows == [[""] * len(header)]
    with pytest.raises(ValueError):
        export.export_results(rec, tmp_path / "e.xml", "xml")


# CLI


def test_cli_missing_config_exits_2(tmp_path, capsys):
    assert main(["bench", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_INVALID
    assert "no such file" in capsys.readouterr().err


def test_cli_invalid_config_exits_2(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"benchmark": "ic2", "engine": {"epsilon": -1}}))
    assert main(["verify", "--config", str(p), "--out", str(tmp_path)]) == EXIT_INVALID
    assert "engine/epsilon" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["bench", "nope"],
        ["bench"],
        ["abstract", "ic2", "--variant", "giant"],
        ["frobnicate"],
        ["bench", "ic2", "--format", "xml"],
    ],
)
def test_cli_usage_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_INVALID


def test_cli_bad_grid_exits_2(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"benchmark": "ic2", "grid": {"eta": [0.3, 0.3]}}))
    assert main(["abstract", "--config", str(p), "--out", str(tmp_path)]) == EXIT_INVALID


def test_cli_abstract_grid_only(tmp_path, capsys):
    assert main(["abstract", "as-grid-only", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "as-grid-only-default-abstraction.json").read_text())
    assert doc["counts"] == {"states": 2541, "actions": 16, "target": 81, "avoid": 0}
    assert doc["imdps"] == []


def test_cli_bench_ic2(tmp_path):
    assert main(["bench", "ic2", "--runs", "2000", "--seed", "1", "--out", str(tmp_path)]) == EXIT_OK
    rec = json.loads((tmp_path / "ic2-default-record.json").read_text())
    assert rec["counts"] == {"states": 1681, "actions": 5, "target": 1089, "avoid": 0}
    assert rec["verdict"] == "pass"
    for name in ("values.csv", "policy.csv", "values.png", "policy.png", "mc.png"):
        assert (tmp_path / f"ic2-default-{name}").is_file()
    header, rows = export.read_csv(tmp_path / "ic2-default-values.csv")
    assert header == ["state", "x1", "x2", "label", "lower", "upper"]
    assert len(rows) == 1682


def test_cli_synthesize_then_simulate(tmp_path):
    out = str(tmp_path)
    assert main(["synthesize", "ic2", "--horizon", "3", "--out", out]) == EXIT_OK
    assert main(["simulate", "ic2", "--horizon", "3", "--runs", "500", "--out", out]) == EXIT_OK
    doc = json.loads((tmp_path / "ic2-default-mc.json").read_text())
    assert all(c["contained"] for c in doc["checks"])


def test_cli_simulate_without_solution_exits_2(tmp_path):
    assert main(["simulate", "ic2", "--out", str(tmp_path)]) == EXIT_INVALID


def test_cli_csv_record(tmp_path):
    assert main(["verify", "ic2", "--horizon", "2", "--format", "csv", "--out", str(tmp_path)]) == EXIT_OK
    header, rows = export.read_csv(tmp_path / "ic2-default-record.csv")
    assert header == export.BENCH_HEADER
    assert rows[0][:4] == ["ic2", "default", "reach", "2"]
    assert rows[0][-1] == "not-simulated"


def test_cli_wdn_profile(tmp_path):
    assert main(["wdn-profile", "--seed", "3", "--days", "3", "--out", str(tmp_path)]) == EXIT_OK
    header, rows = export.read_csv(tmp_path / "synthetic-seed3-profile.csv")
    assert header == ["slot", "prediction", "sigma"] and len(rows) == 96
    assert (tmp_path / "synthetic-seed3-profile.png").is_file()
    csv_in = tmp_path / "synthetic-seed3-consumption.csv"
    assert main(["wdn-profile", "--input", str(csv_in), "--out", str(tmp_path / "b")]) == EXIT_OK
    assert main(["wdn-profile", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_INVALID


def test_workers_are_clamped():
    assert set_workers(1) == 1
    assert 1 <= set_workers(10_000) <= 10_000
    set_workers(1)


def test_cli_output_is_independent_of_workers(tmp_path):
    outs = []
    for w in ("1", "4"):
        d = tmp_path / w
        assert main(["bench", "ic2", "--horizon", "3", "--runs", "1000", "--seed", "9", "--workers", w,
                     "--no-figures", "--out", str(d)]) == EXIT_OK
        outs.append({f: (d / f"ic2-default-{f}").read_bytes() for f in ("record.json", "values.csv", "policy.csv")})
    set_workers(1)
    assert outs[0] == outs[1]
