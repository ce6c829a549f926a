"""Scenario documents, report files and trajectory CSVs.

Scenarios are JSON. Every foot pose carries a position plus either a 3x3
``rotation`` matrix or ``yaw_pitch_roll_deg``; both normalize to a matrix.
Omitted optional fields take the library defaults. Reports are JSON checked
against the schemas shipped in ``stepup/schemas`` before they are written.
"""

from __future__ import annotations

import csv
import json
import math
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np
from referencing import Registry, Resource

from .constraints import FrictionParams, LegLimits
from .errors import ConfigurationError, InvalidInputError, PolygonDegenerateError, ScenarioError
from .model import CoMState, ContactMode, FootSpec, check_polygon, check_rotation, rotation_from_ypr
from .objectives import TaskWeights, TerminalTarget, TorqueHeuristicParams
from .transcription import Phase, Scenario

TRAJECTORY_COLUMNS = (
    "t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az",
    "lambda_l", "lambda_r", "pl_x", "pl_y", "pr_x", "pr_y",
    "copl_wx", "copl_wy", "copl_wz", "copr_wx", "copr_wy", "copr_wz",
    "fl_x", "fl_y", "fl_z", "fr_x", "fr_y", "fr_z",
    "tau_l", "tau_r", "phase_index",
)
NUMBER_FORMAT = "{:.12g}"
SCHEMA_NAMES = ("scenario", "report", "plan", "audit", "comparison")
CANONICAL_SCENARIO = "canonical_stepup.json"

_SIDE_KEYS = {"left": "l", "l": "l", "right": "r", "r": "r"}


# ---------------------------------------------------------------- schemas

@lru_cache(maxsize=None)
def load_schema(name):
    """The shipped JSON schema ``<name>.schema.json`` as a dict."""
    if name not in SCHEMA_NAMES:
        raise ConfigurationError(f"unknown schema {name!r}")
    text = resources.files("stepup").joinpath("schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


@lru_cache(maxsize=None)
def _validator(name):
    registry = Registry().with_resources(
        (f"{other}.schema.json", Resource.from_contents(load_schema(other)))
        for other in SCHEMA_NAMES
    )
    schema = load_schema(name)
    cls = jsonschema.validators.validator_for(schema)
    return cls(schema, registry=registry)


def field_path(parts):
    """``["phases", 2, "T_min"]`` -> ``"phases[2].T_min"``."""
    out = ""
    for part in parts:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += f".{part}" if out else str(part)
    return out


def validate_document(doc, schema_name):
    """Raise :class:`ScenarioError` naming the deepest failing field, if any."""
    errors = sorted(_validator(schema_name).iter_errors(doc), key=lambda e: -len(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ScenarioError(err.message, path=field_path(err.absolute_path) or "<document>")


# ---------------------------------------------------------------- parsing

def _checked(path, build):
    """Run a constructor, tagging its validation errors with ``path``."""
    try:
        return build()
    except PolygonDegenerateError as exc:
        err = PolygonDegenerateError(f"{path}: {exc}")
        err.path = path
        raise err from exc
    except (ConfigurationError, InvalidInputError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc), path=path) from exc


def _parse_foot(doc, path):
    if "yaw_pitch_roll_deg" in doc:
        rotation = _checked(f"{path}.yaw_pitch_roll_deg",
                            lambda: rotation_from_ypr(*doc["yaw_pitch_roll_deg"], degrees=True))
    else:
        rotation = _checked(f"{path}.rotation",
                            lambda: check_rotation(np.asarray(doc.get("rotation", np.eye(3)), float)))
    kwargs = {"position": doc["position"], "rotation": rotation}
    if "polygon" in doc:
        kwargs["polygon"] = _checked(f"{path}.polygon", lambda: check_polygon(
            np.asarray(doc["polygon"], dtype=float).reshape(-1, 2)))
    return _checked(path, lambda: FootSpec(**kwargs))


def _parse_phase(doc, path):
    mode = ContactMode(doc["mode"])
    feet = {}
    for side in ("left", "right"):
        if side in doc:
            feet[side] = _parse_foot(doc[side], f"{path}.{side}")
        elif mode.in_contact(side[0]):
            raise ScenarioError(f"a {mode.value} phase needs a {side} foot", path=f"{path}.{side}")
    defaults = Phase.__dataclass_fields__
    t_min = doc.get("T_min", defaults["T_min"].default)
    t_max = doc.get("T_max", defaults["T_max"].default)
    t_des = doc.get("T_desired", defaults["T_desired"].default)
    if t_min > t_max:
        raise ScenarioError(f"T_min={t_min} exceeds T_max={t_max}", path=f"{path}.T_min")
    if not t_min <= t_des <= t_max:
        raise ScenarioError(f"T_desired={t_des} lies outside [T_min, T_max]", path=f"{path}.T_desired")
    return _checked(path, lambda: Phase(mode, feet.get("left"), feet.get("right"), t_min, t_max, t_des))


def parse_scenario(document):
    """Build a validated :class:`Scenario` from JSON text, bytes or an already-decoded dict."""
    if isinstance(document, (bytes, bytearray)):
        document = document.decode("utf-8")
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError(exc.msg, line=exc.lineno) from exc
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ScenarioError("a scenario must be a JSON object", path="<document>")
    validate_document(doc, "scenario")

    phases = tuple(_parse_phase(p, f"phases[{i}]") for i, p in enumerate(doc["phases"]))
    init = doc["initial_state"]
    initial = _checked("initial_state", lambda: CoMState(init["x"], init.get("v", [0.0, 0.0, 0.0])))
    tgt = doc["target"]
    target = _checked("target", lambda: TerminalTarget(
        tgt["x_d"], tgt.get("v_d"), tgt.get("terminal_fraction", 0.3)))
    weights = _checked("weights", lambda: TaskWeights(**doc.get("weights", {})))
    friction = _checked("friction", lambda: FrictionParams(**doc.get("friction", {})))
    limits = doc.get("leg_limits", {})
    leg_limits = _checked("leg_limits.l_min", lambda: LegLimits(**limits))
    torque = None
    if "torque_params" in doc:
        tp = doc["torque_params"]
        default = 0.75 * leg_limits.l_max
        torque = _checked("torque_params", lambda: TorqueHeuristicParams(
            tp.get("delta_l", default), tp.get("delta_r", default)))

    kwargs = {
        "phases": phases, "initial": initial, "target": target,
        "weights": weights, "friction": friction, "leg_limits": leg_limits,
        "torque_params": torque, "name": doc.get("name", ""),
    }
    for key in ("knots_per_phase", "mass", "lambda_max"):
        if key in doc:
            kwargs[key] = doc[key]
    if "gravity" in doc:
        kwargs["gravity"] = np.array([0.0, 0.0, float(doc["gravity"])])
    if "leading_foot" in doc:
        kwargs["leading_foot"] = _SIDE_KEYS[doc["leading_foot"]]
    return _checked("<document>", lambda: Scenario(**kwargs))


def load_scenario(path):
    """Read and parse a scenario file. ``OSError`` propagates for unreadable paths."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario(text)


def canonical_scenario_text():
    return resources.files("stepup").joinpath("data").joinpath(CANONICAL_SCENARIO).read_text()


def canonical_scenario():
    """The shipped 0.31 m step-up scenario."""
    return parse_scenario(canonical_scenario_text())


# ---------------------------------------------------------------- serialization

def _foot_doc(foot):
    return {
        "position": foot.position.tolist(),
        "rotation": foot.rotation.tolist(),
        "polygon": foot.polygon.tolist(),
    }


def serialize_scenario(scenario):
    """Fully explicit JSON-ready dict; ``parse_scenario`` inverts it exactly."""
    phases = []
    for phase in scenario.phases:
        entry = {"mode": phase.mode.value}
        for side, foot in (("left", phase.left), ("right", phase.right)):
            if foot is not None:
                entry[side] = _foot_doc(foot)
        entry.update(T_min=phase.T_min, T_max=phase.T_max, T_desired=phase.T_desired)
        phases.append(entry)
    w = scenario.weights
    return {
        "name": scenario.name,
        "knots_per_phase": scenario.knots_per_phase,
        "mass": float(scenario.mass),
        "gravity": float(scenario.gravity[2]),
        "lambda_max": float(scenario.lambda_max),
        "leading_foot": "left" if scenario.leading_foot == "l" else "right",
        "initial_state": {"x": scenario.initial.x.tolist(), "v": scenario.initial.v.tolist()},
        "target": {
            "x_d": scenario.target.x_d.tolist(),
            "v_d": scenario.target.v_d.tolist(),
            "terminal_fraction": scenario.target.terminal_fraction,
        },
        "weights": {name: float(getattr(w, name)) for name in TaskWeights.__dataclass_fields__},
        "friction": {"mu_s": scenario.friction.mu_s, "mu_t": scenario.friction.mu_t},
        "leg_limits": {"l_min": scenario.leg_limits.l_min, "l_max": scenario.leg_limits.l_max},
        "torque_params": {
            "delta_l": scenario.torque_params.delta_l,
            "delta_r": scenario.torque_params.delta_r,
        },
        "phases": phases,
    }


def json_ready(obj):
    """Convert numpy scalars/arrays and non-finite floats (-> None) for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_ready(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def write_json(path, doc, schema_name=None):
    """Validate (when a schema is named) and write ``doc`` with stable key order."""
    doc = json_ready(doc)
    if schema_name is not None:
        validate_document(doc, schema_name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return doc


# ---------------------------------------------------------------- trajectories

def trajectory_table(result):
    """Dense rollout as an ``(S, len(TRAJECTORY_COLUMNS))`` array."""
    S = len(result.t)
    cols = [
        result.t[:, None], result.x, result.v, result.a,
        result.lambda_l[:, None], result.lambda_r[:, None],
        result.p_l[:, :2], result.p_r[:, :2],
        result.cop_l, result.cop_r, result.force_l, result.force_r,
        result.tau_l[:, None], result.tau_r[:, None], result.phase[:, None].astype(float),
    ]
    table = np.hstack(cols)
    assert table.shape == (S, len(TRAJECTORY_COLUMNS))
    return table


def write_trajectory_csv(path, result):
    """Write the dense rollout. CoP coordinates of a foot out of contact are ``nan``."""
    table = trajectory_table(result)
    phase_col = len(TRAJECTORY_COLUMNS) - 1
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in table:
            cells = [NUMBER_FORMAT.format(v) for v in row[:phase_col]]
            cells.append(str(int(row[phase_col])))
            writer.writerow(cells)


def read_trajectory_csv(path):
    """Read a trajectory CSV back into ``(header, array)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        rows = [[float(c) for c in row] for row in reader]
    return header, np.asarray(rows, dtype=float).reshape(-1, len(header))
