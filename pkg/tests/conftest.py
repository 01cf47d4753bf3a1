import pytest
from hypothesis import HealthCheck, settings

from waveguide_stability.geometry import CrossSection, CylinderGrid

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def small_grid():
    return CylinderGrid(CrossSection(0.0, 1.0, 33, (1.0,)), half_length=16.0, n_axial=128, T=1.0, n_time=32)


@pytest.fixture
def target_grid():
    return CylinderGrid(CrossSection(0.0, 1.0, 64, (1.0,)), half_length=16.0, n_axial=512, T=1.0, n_time=256)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
