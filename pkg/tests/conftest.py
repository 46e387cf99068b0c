import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_image(rng):
    def make(h=32, w=32, seed=None):
        r = rng if seed is None else np.random.default_rng(seed)
        return r.uniform(0.0, 1.0, size=(h, w, 3)).astype(np.float32)

    return make
