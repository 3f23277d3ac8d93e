import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# The frozen desk-scale corpus: seed and shape are pinned, tests rely on
# its measured properties staying put.
CORPUS_SEED = 7
CORPUS_COUNT = 64
CORPUS_RESOLUTION = (128, 128)


@pytest.fixture(scope="session")
def frozen_corpus():
    from glarekit.data import synthesize_glare

    return synthesize_glare(CORPUS_SEED, CORPUS_COUNT, CORPUS_RESOLUTION)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
