import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import yaw_matrix
from stepup.errors import PolygonDegenerateError, ScenarioError
from stepup.scenario_io import (
    TRAJECTORY_COLUMNS,
    canonical_scenario_text,
    field_path,
    load_schema,
    parse_scenario,
    read_trajectory_csv,
    serialize_scenario,
    validate_document,
    write_json,
    write_trajectory_csv,
)
from stepup.validation import rollout


@pytest.fixture
def doc():
    return json.loads(canonical_scenario_text())


def minimal():
    foot = {"position": [0.0, 0.1, 0.0]}
    return {
        "phases": [{"mode": "left", "left": foot}],
        "initial_state": {"x": [0.0, 0.1, 1.0]},
        "target": {"x_d": [0.0, 0.1, 1.0]},
    }


class TestParse:
    def test_canonical_geometry(self, canonical):
        assert canonical.n_phases == 5 and canonical.knots_per_phase == 20
        assert [p.mode.value for p in canonical.phases] == ["double", "right", "double", "left", "double"]
        assert canonical.phases[-1].left.position[2] == pytest.approx(0.31)
        np.testing.assert_allclose(canonical.target.x_d, [0.4, 0.0, 1.31])
        assert canonical.leading_foot == "l"

    def test_round_trip(self, doc):
        first = serialize_scenario(parse_scenario(doc))
        second = serialize_scenario(parse_scenario(json.dumps(first)))
        assert first == second

    def test_defaults_applied(self):
        sc = parse_scenario(minimal())
        assert sc.knots_per_phase == 20 and sc.mass == 175.0 and sc.lambda_max == 100.0
        assert sc.friction.mu_s == 0.6 and sc.leg_limits.l_max == 1.2
        assert sc.torque_params.delta_l == pytest.approx(0.9)
        np.testing.assert_array_equal(sc.initial.v, 0.0)
        np.testing.assert_array_equal(sc.phases[0].left.rotation, np.eye(3))
        assert (sc.phases[0].T_min, sc.phases[0].T_max, sc.phases[0].T_desired) == (0.4, 1.6, 0.8)

    def test_yaw_and_matrix_agree(self):
        a, b = minimal(), minimal()
        a["phases"][0]["left"]["yaw_pitch_roll_deg"] = [30.0, 0.0, 0.0]
        b["phases"][0]["left"]["rotation"] = yaw_matrix(30.0).tolist()
        np.testing.assert_allclose(parse_scenario(a).phases[0].left.rotation,
                                   parse_scenario(b).phases[0].left.rotation, atol=1e-15)

    def test_duration_order_error_names_the_field(self, doc):
        doc["phases"][2]["T_min"] = 2.0
        with pytest.raises(ScenarioError) as info:
            parse_scenario(doc)
        assert info.value.path == "phases[2].T_min"
        assert "phases[2].T_min" in str(info.value)

    def test_two_vertex_polygon(self, doc):
        doc["phases"][1]["right"]["polygon"] = [[0.0, 0.0], [0.1, 0.0]]
        with pytest.raises(PolygonDegenerateError) as info:
            parse_scenario(doc)
        assert info.value.path == "phases[1].right.polygon"

    def test_syntax_error_has_line(self):
        with pytest.raises(ScenarioError) as info:
            parse_scenario('{\n  "phases": [\n    {"mode": "flight"},,\n  ]\n}')
        assert info.value.line == 3

    @pytest.mark.parametrize("mutate,path", [
        (lambda d: d["phases"][0].pop("left"), "phases[0].left"),
        (lambda d: d["phases"][0].update(mode="hover"), "phases[0].mode"),
        (lambda d: d["initial_state"].update(x=[0, 1]), "initial_state.x"),
        (lambda d: d.update(mass=-1), "mass"),
        (lambda d: d.update(weights={"w_tau": -0.1}), "weights.w_tau"),
        (lambda d: d.update(leg_limits={"l_min": 1.5, "l_max": 1.0}), "leg_limits.l_min"),
        (lambda d: d["phases"][0]["left"].update(rotation=np.diag([1, 1, -1.0]).tolist()),
         "phases[0].left.rotation"),
        (lambda d: d.update(unknown=1), "<document>"),
    ])
    def test_validation_paths(self, mutate, path):
        d = minimal()
        mutate(d)
        with pytest.raises(ScenarioError) as info:
            parse_scenario(d)
        assert info.value.path == path

    @given(st.floats(0.05, 2.0), st.floats(0.05, 2.0))
    @settings(max_examples=40)
    def test_duration_invariant(self, t_min, t_max):
        d = minimal()
        d["phases"][0].update(T_min=t_min, T_max=t_max, T_desired=min(max(0.8, t_min), t_max))
        if t_min > t_max:
            with pytest.raises(ScenarioError):
                parse_scenario(d)
        else:
            assert parse_scenario(d).phases[0].T_min == t_min


class TestDocuments:
    def test_every_schema_loads(self):
        for name in ("scenario", "report", "plan", "audit", "comparison"):
            assert load_schema(name)["type"] == "object"

    def test_field_path_format(self):
        assert field_path(["phases", 2, "left", "polygon", 0]) == "phases[2].left.polygon[0]"

    def test_write_json_rejects_invalid_report(self, tmp_path):
        with pytest.raises(ScenarioError):
            write_json(tmp_path / "audit.json", {"tolerance": -1}, "audit")

    def test_non_finite_numbers_become_null(self, tmp_path):
        out = write_json(tmp_path / "x.json", {"a": float("nan"), "b": [1.0, float("inf")]})
        assert out == {"a": None, "b": [1.0, None]}
        assert json.loads((tmp_path / "x.json").read_text()) == out


class TestTrajectoryCsv:
    def test_header_and_invariants(self, tmp_path, canonical, canonical_plan):
        result = rollout(canonical_plan, canonical, substeps_per_interval=3)
        path = tmp_path / "trajectory.csv"
        write_trajectory_csv(path, result)
        header, table = read_trajectory_csv(path)
        assert header == TRAJECTORY_COLUMNS and len(header) == 31
        assert table.shape == (len(result.t), 31)
        assert np.all(np.diff(table[:, 0]) > 0)
        assert np.all(np.diff(table[:, -1]) >= 0)
        np.testing.assert_allclose(table[:, 1:4], result.x, rtol=1e-11, atol=1e-12)
        # swing-foot CoP columns are nan, stance columns are finite
        swing = table[:, -1] == 1
        assert np.all(np.isnan(table[swing, 16:19])) and np.all(np.isfinite(table[swing, 19:22]))

    def test_numbers_carry_nine_significant_digits(self, tmp_path, canonical, canonical_plan):
        result = rollout(canonical_plan, canonical, substeps_per_interval=2)
        path = tmp_path / "trajectory.csv"
        write_trajectory_csv(path, result)
        lines = path.read_text().splitlines()[1:]
        row = lines[len(lines) // 2].split(",")
        value = float(row[3])
        assert value == pytest.approx(result.x[len(lines) // 2, 2], rel=1e-9)
        digits = row[3].replace("-", "").replace(".", "").lstrip("0").split("e")[0]
        assert len(digits) >= 9


def test_serialized_scenario_validates(doc):
    validate_document(serialize_scenario(parse_scenario(copy.deepcopy(doc))), "scenario")
