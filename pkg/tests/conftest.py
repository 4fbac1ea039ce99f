import sys

import pytest

from menr_twin.experiment import RunConfig, compress


@pytest.fixture
def fast_config():
    """200 s run at 100 Hz with a 2 s lock-in, noise rescaled to the 2000 s sigma."""
    return compress(RunConfig(), 200.0, time_constant=2.0, sample_rate=100.0)


@pytest.fixture
def quiet_config(fast_config):
    return fast_config.without_noise()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
