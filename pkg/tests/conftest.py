import numpy as np
import pytest

from cvsqi.forward import SynthScenario, synthesize_stream

SEEDS = (0, 1, 2)


@pytest.fixture(params=SEEDS)
def seed(request):
    return request.param


@pytest.fixture(scope="session")
def quiet_stream():
    """One motion-free recording with constant RR, shared across tests."""
    scenario = SynthScenario(subject_seed=11, duration_ms=30_000,
                             rr_intervals_ms=(800,), subject_id="quiet")
    return synthesize_stream(scenario)


def rng_for(seed):
    return np.random.default_rng(seed)
