import hashlib
import json
import subprocess
import sys

import pytest
from conftest import standing_scenario

from stepup.cli import main
from stepup.model import CoMState
from stepup.scenario_io import (
    TRAJECTORY_COLUMNS,
    canonical_scenario_text,
    read_trajectory_csv,
    serialize_scenario,
    validate_document,
)


def write_scenario(path, scenario):
    path.write_text(json.dumps(serialize_scenario(scenario)))
    return str(path)


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def standing_file(tmp_path):
    return write_scenario(tmp_path / "standing.json", standing_scenario(knots=4))


@pytest.fixture(scope="module")
def canonical_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scenario") / "canonical.json"
    path.write_text(canonical_scenario_text())
    return str(path)


class TestPlan:
    def test_small_scenario_outputs(self, tmp_path, standing_file):
        out = tmp_path / "out"
        assert main(["plan", "--scenario", standing_file, "--out", str(out)]) == 0
        for name, schema in (("plan.json", "plan"), ("audit.json", "audit")):
            validate_document(json.loads((out / name).read_text()), schema)
        header, table = read_trajectory_csv(out / "trajectory.csv")
        assert header == TRAJECTORY_COLUMNS
        assert len(table) == 4 * 20 + 1
        plan_doc = json.loads((out / "plan.json").read_text())
        assert plan_doc["report"]["status"] == "Converged"
        assert plan_doc["report"]["wall_time"] is None

    def test_outputs_are_deterministic(self, tmp_path, standing_file):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["--scenario", standing_file, "--substeps", "7"]
        assert main(["plan", *args, "--out", str(a)]) == 0
        assert main(["plan", *args, "--out", str(b)]) == 0
        for name in ("plan.json", "audit.json", "trajectory.csv"):
            assert digest(a / name) == digest(b / name), name

    def test_gradient_mode_flag(self, tmp_path, standing_file):
        out = tmp_path / "fd"
        code = main(["plan", "--scenario", standing_file, "--out", str(out),
                     "--gradient-mode", "central_difference"])
        assert code == 0

    def test_unreachable_start_fails(self, tmp_path):
        # CoM starts 1.5 m above both feet while legs reach 1.2 m: the fixed initial
        # state violates the leg-length bound, so no feasible plan exists
        sc = standing_scenario(knots=4, height=1.5)
        sc = sc.replace(initial=CoMState([0.0, 0.0, 1.5], [0.0, 0.0, 0.0]))
        path = write_scenario(tmp_path / "bad.json", sc)
        out = tmp_path / "out"
        assert main(["plan", "--scenario", path, "--out", str(out), "--max-iter", "6"]) == 1
        report = json.loads((out / "plan.json").read_text())["report"]
        assert report["status"] in ("Infeasible", "MaxIterations")

    def test_missing_file(self, tmp_path):
        assert main(["plan", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2

    def test_malformed_scenario(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"phases": [}')
        assert main(["plan", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "line 1" in capsys.readouterr().err

    def test_invalid_field(self, tmp_path, capsys, standing_file):
        doc = json.loads(open(standing_file).read())
        doc["phases"][0]["T_min"] = 5.0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        assert main(["plan", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "phases[0].T_min" in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path, standing_file):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["plan", "--scenario", standing_file, "--out", str(blocker / "sub")]) == 2

    def test_bad_flag_value(self, standing_file, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["plan", "--scenario", standing_file, "--out", str(tmp_path), "--substeps", "0"])
        assert info.value.code == 2


class TestValidate:
    def test_saved_plan_is_reaudited(self, tmp_path, standing_file):
        out = tmp_path / "plan"
        assert main(["plan", "--scenario", standing_file, "--out", str(out)]) == 0
        again = tmp_path / "again"
        code = main(["validate", "--scenario", standing_file, "--plan", str(out / "plan.json"),
                     "--out", str(again)])
        assert code == 0
        assert digest(again / "trajectory.csv") == digest(out / "trajectory.csv")

    def test_broken_plan_file(self, tmp_path, standing_file):
        bad = tmp_path / "plan.json"
        bad.write_text('{"plan": {}}')
        code = main(["validate", "--scenario", standing_file, "--plan", str(bad), "--out", str(tmp_path)])
        assert code == 2


class TestCompare:
    def test_zero_weight_scenario_gives_zero_reduction(self, tmp_path):
        sc = standing_scenario(knots=4)
        sc = sc.replace(weights=sc.weights.replace(w_tau=0.0, w_tau_max=0.0))
        path = write_scenario(tmp_path / "flat.json", sc)
        out = tmp_path / "cmp"
        assert main(["compare-torque", "--scenario", path, "--out", str(out)]) == 0
        doc = json.loads((out / "comparison.json").read_text())
        validate_document(doc, "comparison")
        assert doc["relative_reduction"] == 0.0
        for arm in ("with_task", "without_task"):
            assert (out / f"trajectory_{arm}.csv").exists()

    def test_non_converged_arm(self, tmp_path, standing_file):
        out = tmp_path / "cmp"
        assert main(["compare-torque", "--scenario", standing_file, "--out", str(out), "--max-iter", "1"]) == 1
        assert json.loads((out / "comparison.json").read_text())["status"] == "experiment-inconclusive"


@pytest.mark.slow
def test_canonical_plan_end_to_end(tmp_path, canonical_file):
    out = tmp_path / "canonical"
    proc = subprocess.run([sys.executable, "-m", "stepup.cli", "plan", "--scenario", canonical_file,
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    for name in ("plan.json", "trajectory.csv", "audit.json"):
        assert (out / name).stat().st_size > 0
    audit = json.loads((out / "audit.json").read_text())
    assert audit["clean"] and audit["violation_count"] == 0


@pytest.mark.slow
def test_canonical_torque_comparison(tmp_path, canonical_file):
    out = tmp_path / "compare"
    assert main(["compare-torque", "--scenario", canonical_file, "--out", str(out)]) == 0
    doc = json.loads((out / "comparison.json").read_text())
    assert doc["status"] == "ok"
    assert doc["relative_reduction"] >= 0.10
