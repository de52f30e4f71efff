import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from relocbench.geometry import Pose, axis_angle
from relocbench.synthetic import default_intrinsics, make_room

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
unit_axis = st.tuples(finite, finite, finite).filter(lambda a: np.linalg.norm(a) > 1e-3)


@st.composite
def poses(draw, max_trans=5.0, max_deg=180.0):
    axis = draw(unit_axis)
    deg = draw(st.floats(-max_deg, max_deg))
    t = draw(st.tuples(*[st.floats(-max_trans, max_trans)] * 3))
    return Pose(axis_angle(axis, deg), t)


@pytest.fixture(scope="session")
def room():
    return make_room()


@pytest.fixture(scope="session")
def k640():
    return default_intrinsics()


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("C", 1)[1].split(" ", 1)[0])):
            terminalreporter.write_line(line)
