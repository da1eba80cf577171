import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from reachintent.core import make_trajectory
from reachintent.harness import obstacle_scene, standing_scene

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def scene():
    return standing_scene()


@pytest.fixture(scope="session")
def wall_scene():
    return obstacle_scene()


def straight_reach(start, goal, n=30, true_target=None, hand="right"):
    """Constant-speed straight wrist path from ``start`` to ``goal``."""
    u = np.linspace(0.0, 1.0, n)[:, None]
    pts = np.asarray(start, float) + u * (np.asarray(goal, float) - np.asarray(start, float))
    return make_trajectory(pts, hand=hand, true_target=true_target)


def parabolic_reach(start, goal, apex=0.2, n=30, true_target=None):
    """Exact parabola in the frame index: straight in xy, lifted in z."""
    u = np.linspace(0.0, 1.0, n)[:, None]
    s, g = np.asarray(start, float), np.asarray(goal, float)
    pts = s + u * (g - s)
    pts[:, 2] += 4.0 * apex * u[:, 0] * (1.0 - u[:, 0])
    return make_trajectory(pts, true_target=true_target)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
