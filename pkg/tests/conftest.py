import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cfswipt.config import RunConfig
from cfswipt.estimation import TrainingConfig
from cfswipt.geometry import large_scale_gains, sample_fixed_deployment

settings.register_profile("cfswipt", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cfswipt")


def fixed_gains(seed, n_aps, m_users=3, cfg=None):
    cfg = cfg or RunConfig()
    rng = np.random.default_rng(seed)
    dep = sample_fixed_deployment(rng, cfg.area(), n_aps, m_users)
    return large_scale_gains(dep, cfg.fading(), rng, cfg.shared_shadowing)


@pytest.fixture
def tcfg():
    return TrainingConfig()


@pytest.fixture
def gains64():
    return fixed_gains(11, 64)


@pytest.fixture
def gains8():
    return fixed_gains(3, 8)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Callback recording one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
