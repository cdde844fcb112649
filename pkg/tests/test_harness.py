import json
from dataclasses import replace
from pathlib import Path

import pytest
import yaml

from semivirial import eigen, harness
from semivirial.cli import main
from semivirial.harness import (
    COLUMNS,
    ConfigError,
    check_conditions,
    config_from_dict,
    emit,
    load_config,
    load_sweep,
    plot_series,
    report_to_dict,
    rows_csv,
    rows_from_json,
    run_scenario,
    save_sweep,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

BASE = {
    "name": "h",
    "potential": {"name": "power", "params": {"d": 1, "alpha": 2}},
    "lambda0": 1.0,
    "eps0": 0.2,
    "hbar": [0.2, 0.1, 0.05],
    "checks": ["virial", "regions", "theorem33", "prop37", "prop32"],
}


def cfg(**over):
    data = json.loads(json.dumps(BASE))
    data.update(over)
    return config_from_dict(data)


@pytest.fixture(scope="module")
def report():
    return run_scenario(cfg())


@pytest.mark.parametrize("over,field", [
    ({"eps0": 1.0}, "eps0"),
    ({"eps0": 1.5}, "eps0"),
    ({"hbar": []}, "hbar"),
    ({"hbar": [0.1, 0.2]}, "hbar"),
    ({"checks": ["virial", "bogus"]}, "checks"),
    ({"checks": ["kato"]}, "kato"),
    ({"potential": {"name": "nope"}}, "potential"),
])
def test_config_validation_names_the_field(over, field):
    with pytest.raises(ConfigError) as info:
        cfg(**over)
    assert info.value.field == field


def test_missing_key():
    data = dict(BASE)
    del data["lambda0"]
    with pytest.raises(ConfigError, match="lambda0"):
        config_from_dict(data)


@pytest.mark.parametrize("name", ["harmonic", "quartic", "double_well", "separable"])
def test_shipped_scenarios_load_and_round_trip(name, tmp_path):
    c = load_config(SCENARIOS / f"{name}.yaml")
    harness.save_config(c, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == c


def test_harmonic_report_rows_and_summary(report):
    assert all(s == "pass" for s in report.summary.values())
    assert report.exit_code == 0
    lines = rows_csv(report.rows).splitlines()
    assert lines[0] == ",".join(COLUMNS)
    # one row per (hbar, pair): 1 + 1 + 2 window pairs
    assert [r.hbar for r in report.rows] == [0.2, 0.1, 0.05, 0.05]
    for r in report.rows:
        assert r.K_over_lambda == pytest.approx(0.5, abs=1e-3)
        assert r.thm33_pass and r.prop37_pass


def test_json_round_trip(report, tmp_path):
    emit(report, tmp_path, "json", figures=False)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["schema"] == "1"
    assert rows_from_json(data) == report.rows
    again = harness.report_from_json(data)
    assert again.summary == report.summary and again.config == report.config


def test_plot_series_lengths(report, tmp_path):
    series = plot_series(report)
    assert all(len(v) == 3 for v in series.values())
    paths = emit(report, tmp_path, "csv")
    assert (tmp_path / "plot_data" / "K.csv").read_text().count("\n") == 4
    assert any(p.suffix == ".png" for p in paths)


def test_not_executed_checks_are_blank():
    r = run_scenario(cfg(checks=["virial"], hbar=[0.1]))
    row = r.rows[0]
    assert row.forbidden_mass is None and row.thm33_pass is None
    cells = rows_csv(r.rows).splitlines()[1].split(",")
    assert cells[COLUMNS.index("thm33_pass")] == ""
    assert r.summary == {"virial": "pass"}


def test_failure_isolation(monkeypatch):
    real = harness.solve_window

    def flaky(grid, v, hbar, *a, **k):
        if hbar == 0.1:
            raise eigen.EigenSolverError("synthetic", 1.0)
        return real(grid, v, hbar, *a, **k)

    monkeypatch.setattr(harness, "solve_window", flaky)
    r = run_scenario(cfg())
    assert "0.1" in r.failures and "synthetic" in r.failures["0.1"]
    assert {row.hbar for row in r.rows} == {0.2, 0.05}
    assert r.summary.get("execution") != "error"


def test_all_hbar_failing_is_an_execution_error(monkeypatch):
    def broken(*a, **k):
        raise eigen.EigenSolverError("synthetic", 1.0)

    monkeypatch.setattr(harness, "solve_window", broken)
    r = run_scenario(cfg())
    assert r.exit_code == 1


def test_determinism_and_report_reproduction(tmp_path):
    c = cfg()
    a = run_scenario(c)
    b = run_scenario(c)
    assert rows_csv(a.rows) == rows_csv(b.rows)
    save_sweep(a, tmp_path)
    emit(a, tmp_path, "both", figures=False)
    original = (tmp_path / "report.csv").read_bytes()
    again = load_sweep(tmp_path)
    emit(again, tmp_path / "re", "csv", figures=False)
    assert (tmp_path / "re" / "report.csv").read_bytes() == original


def test_check_conditions_never_solves():
    before = eigen.SOLVE_COUNT
    cond = check_conditions(cfg())
    assert eigen.SOLVE_COUNT == before
    assert cond.thm33_ready and cond.c0 == pytest.approx(1.6, rel=0.02)


def test_kato_and_separable_sections():
    c = cfg(checks=["kato"], kato={"hbar": [0.11, 0.10, 0.09], "level": 0}, hbar=[0.1])
    r = run_scenario(c)
    assert r.summary["kato"] == "pass" and len(r.kato) == 1


# --- command line ----------------------------------------------------------


def _write(tmp_path, **over):
    data = json.loads(json.dumps(BASE))
    data.update(over)
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(data))
    return p


def test_cli_sweep_and_report(tmp_path, capsys):
    path = _write(tmp_path, hbar=[0.2, 0.1, 0.05])
    out = tmp_path / "out"
    assert main(["sweep", str(path), "--out", str(out), "--seed", "3"]) == 0
    csv = (out / "report.csv").read_bytes()
    assert b",3\n" in csv
    assert (out / "figures" / "energy_balance.png").exists()
    assert main(["report", str(out), "--format", "csv"]) == 0
    assert (out / "report.csv").read_bytes() == csv


def test_cli_check_conditions_exit_codes(tmp_path):
    good = _write(tmp_path)
    assert main(["check-conditions", str(good), "--out", str(tmp_path / "c")]) == 0
    assert json.loads((tmp_path / "c" / "conditions.json").read_text())["c0"] > 0
    barrier = _write(tmp_path, potential={"name": "double_well"}, lambda0=1.0, eps0=0.1)
    assert main(["check-conditions", str(barrier), "--out", str(tmp_path / "b")]) == 2


def test_cli_errors(tmp_path, capsys):
    bad = _write(tmp_path, eps0=2.0)
    assert main(["sweep", str(bad)]) == 1
    assert "eps0" in capsys.readouterr().err
    assert main(["sweep", str(tmp_path / "missing.yaml")]) == 1


def test_cli_max_points_budget(tmp_path):
    path = _write(tmp_path, hbar=[0.1])
    # every hbar exceeds the budget, so the sweep has no data
    assert main(["sweep", str(path), "--out", str(tmp_path / "o"), "--max-points", "100"]) == 1


def test_cli_verify_virial(tmp_path, capsys):
    path = _write(tmp_path, hbar=[0.1])
    assert main(["verify-virial", str(path), "--out", str(tmp_path / "v")]) == 0
    assert "generalized" in capsys.readouterr().out
