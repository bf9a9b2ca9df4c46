import numpy as np
import pytest

from hsunmix import SceneSpec, generate_scene, sample_library


@pytest.fixture(scope="session")
def library():
    return sample_library()


@pytest.fixture(scope="session")
def small_scene(library):
    """A 16x16 mixed scene at 30 dB used by several modules."""
    spec = SceneSpec(grid=(16, 16), block_size=4, lowpass_window=3, snr_db=30.0, seed=42)
    return generate_scene(library, spec)


def random_simplex_columns(rng, count, pixels):
    """Columns drawn uniformly from the probability simplex."""
    raw = rng.dirichlet(np.ones(count), size=pixels).T
    return raw
