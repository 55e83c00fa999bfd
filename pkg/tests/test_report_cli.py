"""Report assembly, artifact files, and the command-line interface."""

import json
import subprocess
import sys

import numpy as np
import pytest

from coastplan.iccg import iccg_solve
from coastplan.report import (build_report, read_plan_json, write_artifacts,
                              write_plan_json)


@pytest.fixture(scope="module")
def demo_outcome(demo6):
    return iccg_solve(demo6, k_seg=4, facets=8)


def test_breakdown_sums_to_total(demo6, demo_outcome):
    rep = build_report(demo_outcome, demo6, mode="iccg", k_seg=4, facets=8)
    assert rep.total == pytest.approx(sum(rep.breakdown.values()), abs=1e-9)
    assert rep.breakdown["subsidy"] <= 0.0
    for name, v in rep.breakdown.items():
        if name != "subsidy":
            assert v >= 0.0
    assert rep.breakdown["network_loss"] == pytest.approx(
        demo_outcome.worst_case.value)


def test_voltage_and_intensity_shapes(demo6, demo_outcome):
    rep = build_report(demo_outcome, demo6, mode="iccg", k_seg=4, facets=8)
    assert rep.voltage_pu.shape == (6, 4)
    assert rep.carbon_intensity.shape == (6, 4)
    assert np.all(rep.voltage_pu > 0.9)
    assert np.all(rep.carbon_intensity >= -1e-12)


def test_artifacts_and_plan_roundtrip(tmp_path, demo6, demo_outcome):
    rep = build_report(demo_outcome, demo6, mode="iccg", k_seg=4, facets=8)
    write_artifacts(rep, demo_outcome.trace, tmp_path)
    for name in ("report.json", "plan.json", "trace.csv", "convergence.csv",
                 "voltage_profiles.csv", "intensity_heatmap.csv"):
        assert (tmp_path / name).exists(), name
    plan = read_plan_json(tmp_path / "plan.json")
    assert plan.z == demo_outcome.plan.z
    assert plan.y == demo_outcome.plan.y
    data = json.loads((tmp_path / "report.json").read_text())
    assert "wall" not in json.dumps(data)


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "coastplan.cli", *args],
                          capture_output=True, text=True)


def test_cli_plan_and_evaluate(tmp_path):
    out_dir = tmp_path / "run"
    r = run_cli("plan", "--instance", "demo6", "--out-dir", str(out_dir),
                "--loss-segments", "4", "--facets", "8")
    assert r.returncode == 0, r.stderr
    assert (out_dir / "report.json").exists()
    r2 = run_cli("evaluate", "--instance", "demo6",
                 "--plan", str(out_dir / "plan.json"),
                 "--out-dir", str(tmp_path / "eval"))
    assert r2.returncode == 0, r2.stderr
    ev = json.loads((tmp_path / "eval" / "evaluation.json").read_text())
    assert ev["loss_cost_surrogate"] <= ev["loss_cost_true"] + 1e-9


def test_cli_rejects_unknown_instance(tmp_path):
    r = run_cli("plan", "--instance", "no-such-network",
                "--out-dir", str(tmp_path))
    assert r.returncode == 1


def test_cli_reports_partial_result_on_iteration_cap(tmp_path):
    r = run_cli("plan", "--instance", "demo6", "--out-dir", str(tmp_path),
                "--max-iterations", "1", "--mode", "ccg")
    assert r.returncode == 2
    assert (tmp_path / "report.json").exists()


def test_cli_oracle_modes():
    for which in ("topology", "ambiguity", "ess"):
        r = run_cli("oracle", "--which", which, "--instance", "demo6")
        assert r.returncode == 0, (which, r.stderr)
        payload = json.loads(r.stdout)
        assert payload["agree"] is True


def test_reports_are_deterministic(tmp_path):
    dirs = []
    for tag in ("a", "b"):
        out_dir = tmp_path / tag
        r = run_cli("plan", "--instance", "demo6", "--seed", "11",
                    "--out-dir", str(out_dir))
        assert r.returncode == 0, r.stderr
        dirs.append(out_dir)
    for name in ("report.json", "plan.json", "convergence.csv",
                 "voltage_profiles.csv", "intensity_heatmap.csv"):
        a = (dirs[0] / name).read_bytes()
        b = (dirs[1] / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"
