import json

import pandas as pd
import pytest

from kinex.cli import run_cli
from kinex.core.artifacts import pmf_to_dict, sha256, write_json
from kinex.core.distributions import dirac_pmf


@pytest.fixture(autouse=True)
def _one_worker(single_thread):
    pass


def _run(*argv):
    return run_cli([str(a) for a in argv])


def _json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_single_agent_is_a_configuration_error(tmp_path, capsys):
    assert _run("simulate", "--n", 1, "--output-dir", tmp_path / "out") == 2
    assert "N ≥ 2" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_negative_rate_is_a_configuration_error(tmp_path, capsys):
    code = _run("meanfield", "--law", "poisson", "--law-lambda", -1, "--output-dir", tmp_path / "out")
    assert code == 2
    assert "lambda > 0" in capsys.readouterr().err


def test_oversized_chain_is_refused(tmp_path, capsys):
    assert _run("chain", "--n", 12, "--total", 40, "--output-dir", tmp_path / "out") == 2
    assert "C(total+N-1, N-1)" in capsys.readouterr().err


def test_unknown_flag_exits_with_usage_error(tmp_path):
    assert _run("meanfield", "--no-such-flag", "--output-dir", tmp_path / "out") == 2


def test_bad_config_value_is_reported(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"seed": "abc"}), encoding="utf-8")
    assert _run("chain", "--config", config, "--output-dir", tmp_path / "out") == 2


def test_domain_error_exits_with_two(tmp_path, capsys):
    code = _run("meanfield", "--k", 5, "--K", 12, "--t-end", 3, "--output-dir", tmp_path / "out")
    assert code == 2
    assert "truncation index K" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_unexpected_error_exits_with_one(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr("kinex.cli.execute", boom)
    assert _run("chain", "--n", 2, "--total", 2, "--output-dir", tmp_path / "out") == 1
    assert not (tmp_path / "out").exists()


def test_failed_run_keeps_an_existing_directory(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    assert _run("meanfield", "--k", 5, "--K", 12, "--t-end", 3, "--output-dir", out) == 2
    assert out.is_dir()


def test_coupling_mean_mismatch_is_a_configuration_error(tmp_path, capsys):
    code = _run("couple", "--law", "dirac", "--k", 5, "--lambda", 6, "--output-dir", tmp_path / "out")
    assert code == 2
    assert "lambda = mean of the initial law" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_poisson_initial_law_uses_the_default_truncation(tmp_path):
    out = tmp_path / "out"
    assert _run("meanfield", "--law", "poisson", "--law-lambda", 5, "--t-end", 0.2, "--output-dir", out) == 0
    summary = _json(out / "summary.json")
    assert summary["max_mass_defect"] < 1e-12
    assert summary["w1_final"] < 1e-8
    assert _json(out / "manifest.json")["config"]["meanfield"]["initial"]["K"] is None


def test_meanfield_run_writes_manifest(tmp_path):
    out = tmp_path / "out"
    assert _run("meanfield", "--k", 5, "--t-end", 0.5, "--seed", 3, "--output-dir", out) == 0
    manifest = _json(out / "manifest.json")
    assert manifest["command"] == "meanfield"
    assert manifest["seed"] == 3
    assert manifest["config"]["meanfield"]["ode"]["t_end"] == 0.5
    assert set(manifest["artifacts"]) == {"trajectory.csv", "summary.json"}
    for name, digest in manifest["artifacts"].items():
        assert sha256(out / name) == digest

    trajectory = pd.read_csv(out / "trajectory.csv")
    assert list(trajectory.columns) == ["t", "n", "p_n"]
    summary = _json(out / "summary.json")
    assert summary["mean_drift"] < 1e-10
    assert summary["second_moment_final"] == pytest.approx(summary["second_moment_forecast"], abs=1e-8)


def test_reruns_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert _run("meanfield", "--k", 4, "--t-end", 0.3, "--output-dir", tmp_path / name) == 0
    first = (tmp_path / "a" / "trajectory.csv").read_bytes()
    assert first == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_existing_output_needs_force(tmp_path, capsys):
    out = tmp_path / "out"
    assert _run("chain", "--n", 2, "--total", 2, "--output-dir", out) == 0
    assert _run("chain", "--n", 2, "--total", 2, "--output-dir", out) == 2
    assert "--force" in capsys.readouterr().err
    assert _run("chain", "--n", 2, "--total", 2, "--output-dir", out, "--force") == 0


def test_flags_override_config_file(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "seed": 7,
        "meanfield": {"initial": {"kind": "dirac", "k": 3}, "ode": {"t_end": 0.3}},
    }), encoding="utf-8")
    out = tmp_path / "out"
    assert _run("meanfield", "--config", config, "--t-end", 0.2, "--output-dir", out) == 0
    resolved = _json(out / "manifest.json")["config"]
    assert resolved["seed"] == 7
    assert resolved["meanfield"]["initial"]["k"] == 3
    assert resolved["meanfield"]["ode"]["t_end"] == 0.2


def test_manifest_reruns_the_same_experiment(tmp_path):
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert _run("simulate", "--n", 50, "--events", 2000, "--snapshot-every", 500, "--seed", 5,
                "--output-dir", first) == 0
    assert _run("simulate", "--config", first / "manifest.json", "--output-dir", second) == 0
    for name in ("summary.csv", "final_wealth.csv", "snapshots.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert list(pd.read_csv(first / "snapshots.csv").columns) == ["event", "t_model", "n", "count"]


def test_simulate_replicas(tmp_path):
    out = tmp_path / "out"
    assert _run("simulate", "--n", 55, "--events", 2000, "--snapshot-every", 500, "--replicas", 2,
                "--output-dir", out) == 0
    summary = pd.read_csv(out / "summary.csv")
    assert len(summary) == 10
    assert sorted(summary["replica"].unique()) == [0, 1]
    histograms = pd.read_csv(out / "snapshots.csv")
    assert list(histograms.columns) == ["replica", "event", "t_model", "n", "count"]
    assert histograms.groupby(["replica", "event"])["count"].sum().eq(55).all()
    assert (summary["mean"] == 5.0).all()
    report = _json(out / "simulation.json")
    assert report["replicas"] == 2 and len(report["final_gini"]) == 2
    assert [len(rows) for rows in report["snapshots"]] == [5, 5]
    first = report["snapshots"][0][0]
    assert first["event"] == 0 and first["mean"] == 5.0
    assert first["W1_to_poisson"] > 0 and first["W2_to_poisson"] >= first["W1_to_poisson"]


def test_simulate_continuous_rule_skips_histograms(tmp_path):
    out = tmp_path / "out"
    assert _run("simulate", "--n", 50, "--events", 1000, "--snapshot-every", 500, "--rule", "saving",
                "--s", 0.3, "--output-dir", out) == 0
    assert not (out / "snapshots.csv").exists()
    assert (out / "final_wealth.csv").exists()
    rows = _json(out / "simulation.json")["snapshots"][0]
    assert "W1_to_poisson" not in rows[-1]


def test_chain_command(tmp_path):
    out = tmp_path / "out"
    assert _run("chain", "--n", 2, "--total", 2, "--output-dir", out) == 0
    matrix = pd.read_csv(out / "chain_matrix.csv")
    assert list(matrix.columns) == ["row", "col", "prob"]
    assert matrix["prob"].tolist() == pytest.approx([0.25, 0.5, 0.25] * 3, abs=1e-15)
    report = _json(out / "chain_report.json")
    assert report["states"] == 3
    assert report["max_abs_gap"] < 1e-12


def test_laplace_command(tmp_path):
    out = tmp_path / "out"
    assert _run("laplace", "--law", "binomial", "--law-n", 50, "--gamma", 0.1, "--t-end", 5,
                "--depth", 10, "--output-dir", out) == 0
    report = _json(out / "laplace.json")
    assert report["M"] == 10
    assert report["envelope_violations"] == []
    frame = pd.read_csv(out / "a_system.csv")
    assert list(frame.columns) == ["t", "n", "a_n"]
    assert frame["a_n"].between(0.0, 1.0).all()


def test_couple_command(tmp_path):
    out = tmp_path / "out"
    assert _run("couple", "--m", 200, "--t-end", 1, "--replicas", 2, "--points", 3,
                "--output-dir", out) == 0
    frame = pd.read_csv(out / "coupling.csv")
    assert list(frame.columns) == ["t", "D_mean", "D_stderr", "bound_value"]
    assert frame["t"].tolist() == [0.0, 0.5, 1.0]
    assert _json(out / "coupling.json")["replicas"] == 2


def test_metrics_command(tmp_path):
    inputs = tmp_path / "inputs"
    inputs.mkdir()
    write_json(inputs, "p.json", pmf_to_dict(dirac_pmf(0)))
    write_json(inputs, "q.json", pmf_to_dict(dirac_pmf(2)))
    pd.DataFrame({"value": [0, 1, 2, 2]}).to_csv(inputs / "wealth.csv", index=False)
    out = tmp_path / "out"
    assert _run("metrics", "--p", inputs / "p.json", "--q", inputs / "q.json",
                "--wealth", inputs / "wealth.csv", "--output-dir", out) == 0
    report = _json(out / "metrics.json")
    assert report["distances"] == pytest.approx({"w1": 2.0, "w2": 2.0, "tv": 1.0}, abs=1e-12)
    assert report["gini"] == pytest.approx(0.35, abs=1e-12)


def test_metrics_needs_an_input(tmp_path):
    assert _run("metrics", "--output-dir", tmp_path / "out") == 2


def test_reproduce_fig4_short(tmp_path):
    out = tmp_path / "out"
    assert _run("reproduce", "fig4", "--t-end", 0.5, "--output-dir", out) == 0
    summary = _json(out / "summary.json")
    assert summary["target_lambda"] == 5.0
    assert summary["mean_drift"] < 1e-10
    assert _json(out / "manifest.json")["config"]["reproduce"]["figure"] == "fig4"


def test_reproduce_fig5_short(tmp_path):
    out = tmp_path / "out"
    assert _run("reproduce", "fig5", "--t-end", 3, "--output-dir", out) == 0
    report = _json(out / "fit_decay.json")
    for label in ("W1", "W2"):
        assert report[label]["monotone"]
        assert report[label]["fit"]["exp_rate"] < 0
        assert report[label]["below_sqrt_envelope"]
        assert 0.5 < report[label]["sqrt_envelope"]["anchor"] < 3.0
    assert pd.read_csv(out / "w2_trace.csv")["t"].iloc[-1] == 3.0


def test_reproduce_fig1_short(tmp_path):
    out = tmp_path / "out"
    assert _run("reproduce", "fig1", "--n", 500, "--events", 50_000, "--snapshot-every", 10_000,
                "--output-dir", out) == 0
    report = _json(out / "poisson_comparison.json")
    assert report["total_conserved"]
    assert [row["event"] for row in report["snapshots"]] == list(range(0, 50_001, 10_000))
    assert report["final_w1"] < 0.5 * report["snapshots"][0]["w1"]
    assert list(pd.read_csv(out / "snapshots.csv").columns) == ["event", "t_model", "n", "count"]


def test_reproduce_rules_orders_the_gini(tmp_path):
    out = tmp_path / "out"
    assert _run("reproduce", "rules", "--n", 2000, "--events", 400_000, "--snapshot-every", 100_000,
                "--output-dir", out) == 0
    report = _json(out / "rules.json")
    assert report["order_holds"], report["final_gini"]
    assert report["final_gini"]["repeated_average"] < 0.01
    traces = pd.read_csv(out / "gini_traces.csv")
    assert sorted(traces["rule"].unique()) == ["binomial", "repeated_average", "saving", "uniform"]
