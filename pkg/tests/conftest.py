import pytest

from afcsim.scenarios import MemoryPipeline, Scenario, calibrate


@pytest.fixture(scope="session")
def baseline_scenario():
    return Scenario()


@pytest.fixture(scope="session")
def pipeline(baseline_scenario):
    return MemoryPipeline(baseline_scenario)


@pytest.fixture(scope="session")
def calibration(baseline_scenario, pipeline):
    """The two fitted scalars, computed once per session."""
    return calibrate(baseline_scenario, pipeline)
