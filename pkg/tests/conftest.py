from __future__ import annotations

import pytest

from dualrep.demo import DemoPoint, Demonstration, GripperState, Pose
from dualrep.jigs import builtin_registry
from dualrep.scenarios import load_scenario, synthesize


def make_demo(positions, dt=1.0 / 120, gripper=40.0, states=None, registry=None, **kw):
    """Demonstration through ``positions`` with identity orientation."""
    registry = registry or builtin_registry()
    init = registry.initial_states()
    pts = []
    for k, p in enumerate(positions):
        s = states[k] if states is not None else init
        pts.append(DemoPoint(k * dt, Pose(p), GripperState(gripper), s))
    return Demonstration(tuple(pts), registry, round(1.0 / dt, 9), **kw)


@pytest.fixture(scope="session")
def registry():
    return builtin_registry()


@pytest.fixture(scope="session")
def bottle_demo():
    return synthesize(load_scenario("bottle").script)


@pytest.fixture(scope="session")
def pipetting_demo():
    return synthesize(load_scenario("pipetting").script)
