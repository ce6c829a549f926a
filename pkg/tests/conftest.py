import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import stepup  # noqa: E402
from stepup.model import CoMState, FootSpec  # noqa: E402
from stepup.objectives import TerminalTarget  # noqa: E402
from stepup.transcription import Phase, Scenario  # noqa: E402


@pytest.fixture(scope="session")
def canonical():
    return stepup.canonical_scenario()


@pytest.fixture(scope="session")
def torque_experiment(canonical):
    """Both arms of the torque comparison; the first arm doubles as the canonical plan."""
    return stepup.torque_reduction_experiment(canonical, stepup.SolverConfig())


@pytest.fixture(scope="session")
def canonical_plan(torque_experiment):
    return torque_experiment.with_task


def flight_scenario(x0=(0.0, 0.0, 1.0), v0=(0.0, 0.0, 0.0), knots=10, duration=0.5):
    phase = Phase("flight", T_min=duration, T_max=duration, T_desired=duration)
    return Scenario([phase], CoMState(x0, v0), TerminalTarget(x0), knots_per_phase=knots)


def standing_scenario(knots=4, height=1.0, duration=0.5):
    """Double support on flat ground with the CoM centred above both feet."""
    left, right = FootSpec([0.0, 0.1, 0.0]), FootSpec([0.0, -0.1, 0.0])
    phase = Phase("double", left, right, T_min=0.4, T_max=0.6, T_desired=duration)
    x0 = [0.0, 0.0, height]
    return Scenario([phase], CoMState(x0, [0, 0, 0]), TerminalTarget(x0), knots_per_phase=knots)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
