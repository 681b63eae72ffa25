import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bswave.channel import ChannelRealization, LinkBudget, PowerDelayProfile, draw_tagwise
from bswave.harness import make_config

settings.register_profile("bswave", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("bswave")


def random_channel(rng, k, n, scale=1.0):
    def cn(shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return ChannelRealization(cn((k, n)), cn((k, n)))


def random_waveform(rng, n, power=1.0):
    w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return w * np.sqrt(2 * power) / np.linalg.norm(w)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def budget():
    return LinkBudget()


def model_b_channel(k, n, index=0, seed=0):
    return draw_tagwise(PowerDelayProfile.model_b(), k, n, seed, index)


def model_b_config(k, n, snr_db=20.0, **kw):
    return make_config(k, n, snr_db, **kw)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
