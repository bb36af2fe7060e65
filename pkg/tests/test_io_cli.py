import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from sncure import io as panel_io
from sncure.cli import main
from sncure.data import Panel, validate_panel
from sncure.errors import ValidationError
from sncure.estimator import EstimatorConfig
from sncure.montecarlo import SUMMARY_COLUMNS, run_replications
from sncure.simulation import SimConfig, simulate_study

from .oracles import toys
from .support import make_individual, toy_panel


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    res = invoke("simulate", "--seed", 3, "--n", 120, "--out", out)
    assert res.exit_code == 0, res.output
    return out


def test_round_trip_is_byte_identical(tmp_path):
    panel = simulate_study(SimConfig(n=40, seed=1))
    panel_io.write_panel(panel, tmp_path / "a")
    again = panel_io.read_panel(tmp_path / "a")
    assert validate_panel(again).ok
    panel_io.write_panel(again, tmp_path / "b")
    for name in (panel_io.PANEL_FILE, panel_io.EVENTS_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for x, y in zip(panel.individuals, again.individuals):
        assert np.array_equal(x.exposures, y.exposures)
        assert np.array_equal(x.event_times, y.event_times)
        assert x.x_time == y.x_time and x.death_observed == y.death_observed


def test_corrupt_row_is_named(tmp_path):
    panel_io.write_panel(simulate_study(SimConfig(n=5, seed=1)), tmp_path)
    path = tmp_path / panel_io.PANEL_FILE
    lines = path.read_text().splitlines()
    fields = lines[6].split(",")
    fields[2] = "oops"
    lines[6] = ",".join(fields)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError) as info:
        panel_io.read_panel(tmp_path)
    assert "row 7" in str(info.value)


def test_simulate_metadata_records_the_truth(simulated):
    meta = json.loads((simulated / panel_io.META_FILE).read_text())
    assert meta["simulation"]["beta_true"] == [0.1, 0.05, 0.025, 0, 0]
    assert meta["simulation"]["seed"] == 3
    assert meta["c"] > 0


def test_same_seed_gives_identical_files(tmp_path, simulated):
    res = invoke("simulate", "--seed", 3, "--n", 120, "--out", tmp_path)
    assert res.exit_code == 0
    for name in (panel_io.PANEL_FILE, panel_io.EVENTS_FILE, panel_io.META_FILE):
        assert (tmp_path / name).read_bytes() == (simulated / name).read_bytes()


def test_simulate_usage_errors(tmp_path):
    assert invoke("simulate", "--seed", 1, "--n", 0, "--out", tmp_path).exit_code == 2
    assert invoke("simulate", "--n", 10, "--out", tmp_path).exit_code == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    res = invoke("simulate", "--seed", 1, "--config", cfg, "--out", tmp_path)
    assert res.exit_code == 2 and "bogus" in res.output


def test_fit_point_estimates_only(simulated, tmp_path):
    out = tmp_path / "est.json"
    res = invoke("fit", "--panel", simulated, "--estimator", "parametric", "--M-lags", 2,
                 "--R", 0, "--out", out)
    assert res.exit_code == 0, res.output
    est = json.loads(out.read_text())
    assert len(est["beta"]) == 3
    assert "se" not in est and "bootstrap_replicates" not in est
    assert est["config"]["estimator"] == "parametric" and est["config"]["M_lags"] == 2
    assert est["timings"]["fit_seconds"] >= 0
    assert "lags" in est["diagnostics"]


def test_fit_with_bootstrap(simulated, tmp_path):
    out = tmp_path / "est.json"
    res = invoke("fit", "--panel", simulated, "--M-lags", 1, "--R", 3, "--threads", 1,
                 "--out", out)
    assert res.exit_code == 0, res.output
    est = json.loads(out.read_text())
    assert len(est["se"]) == 2 and len(est["ci"]) == 2
    assert len(est["bootstrap_replicates"]) == 3


def test_config_file_precedence(simulated, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"M_lags": 1, "bins": 3}))
    out = tmp_path / "est.json"
    res = invoke("fit", "--panel", simulated, "--config", cfg, "--bins", 4, "--out", out)
    assert res.exit_code == 0, res.output
    est = json.loads(out.read_text())
    assert len(est["beta"]) == 2
    assert est["config"]["bins"] == 4


def test_fit_exit_codes(simulated, tmp_path):
    assert invoke("fit", "--panel", tmp_path / "missing").exit_code == 5
    bad = tmp_path / "bad"
    panel_io.write_panel(simulate_study(SimConfig(n=5, seed=1)), bad)
    text = (bad / panel_io.EVENTS_FILE).read_text() + "0,99.5\n"
    (bad / panel_io.EVENTS_FILE).write_text(text)
    res = invoke("fit", "--panel", bad)
    assert res.exit_code == 3 and "event after X" in res.output
    assert invoke("fit", "--panel", simulated, "--R", -1).exit_code == 2
    flat = tmp_path / "flat"
    panel = simulate_study(SimConfig(n=30, seed=1, beta_true=(0,) * 5, c=0.0))
    panel_io.write_panel(panel, flat)
    res = invoke("fit", "--panel", flat, "--M-lags", 0, "--bins", 2, "--min-risk-set", 0,
                 "--estimator", "parametric")
    assert res.exit_code == 0, res.output


def test_numerical_failure_exit_code(tmp_path):
    panel = toy_panel(toys.TOY2)
    panel_io.write_panel(panel, tmp_path)
    res = invoke("fit", "--panel", tmp_path, "--M-lags", 0, "--min-risk-set", 0)
    assert res.exit_code == 4
    assert "Degenerate" in res.output


def test_counterfactual_command(simulated, tmp_path):
    est = tmp_path / "est.json"
    assert invoke("fit", "--panel", simulated, "--R", 2, "--threads", 1,
                  "--out", est).exit_code == 0
    out = tmp_path / "cf.csv"
    res = invoke("counterfactual", "--panel", simulated, "--estimates", est, "--cap", 0.3,
                 "--cap", 2.0, "--out", out)
    assert res.exit_code == 0, res.output
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["label", "cap", "period", "cumulative_averted", "lo", "hi"]
    labels = {r["label"] for r in rows}
    assert labels == {"cap=0.3", "cap=2"}
    assert all(float(r["cumulative_averted"]) == 0.0 for r in rows if r["label"] == "cap=2")


def test_counterfactual_toy_total(tmp_path):
    panel = Panel((make_individual(0, [2.0, 0.0], 1.0),), 0, 1, 1.5)
    panel_io.write_panel(panel, tmp_path / "p")
    est = tmp_path / "est.json"
    est.write_text(json.dumps({"beta": [0.1]}))
    out = tmp_path / "cf.csv"
    res = invoke("counterfactual", "--panel", tmp_path / "p", "--estimates", est, "--cap", 1.0,
                 "--out", out)
    assert res.exit_code == 0, res.output
    rows = list(csv.DictReader(out.open()))
    assert float(rows[-1]["cumulative_averted"]) == pytest.approx(0.1, rel=1e-15)


def test_replicate_command(tmp_path):
    out = tmp_path / "mc.csv"
    res = invoke("replicate", "--seed", 1, "--n", 150, "--reps", 1, "--R", 2,
                 "--estimators", "parametric", "--M-lags", 1, "--threads", 1, "--out", out)
    assert res.exit_code == 0, res.output
    rows = list(csv.reader(out.open()))
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert [r[:2] for r in rows[1:]] == [["parametric", "0"], ["parametric", "1"]]
    assert all(float(r[4]) in (0.0, 1.0) for r in rows[1:])
    meta = json.loads((tmp_path / "mc.csv.json").read_text())
    assert meta["config"]["reps"] == 1


def test_replicate_requires_a_seed(tmp_path):
    assert invoke("replicate", "--out", tmp_path / "x.csv").exit_code == 2
    res = invoke("replicate", "--seed", 1, "--estimators", "nope", "--out", tmp_path / "x.csv")
    assert res.exit_code == 2


def test_monte_carlo_summary_layout():
    res = run_replications(SimConfig(n=150, seed=0), {"p": EstimatorConfig("parametric", M_lags=0)},
                           reps=2, R=0, seed=4)
    rows = res.summary()
    assert len(rows) == 1 and rows[0][0] == "p" and rows[0][1] == 0
    assert np.isnan(rows[0][3])
