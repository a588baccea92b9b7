import numpy as np
import pytest

from sapinet.core import CellParams, GammaClock
from sapinet.datagen import OdorSeriesSpec, generate_series
from sapinet.epl import EplConfig, build_network, train_one_shot
from sapinet.glomerular import GlomerularPreprocessor


@pytest.fixture(scope="session")
def clock():
    return GammaClock()


@pytest.fixture(scope="session")
def cells():
    return CellParams()


def make_trained_network(seed=1, d=10, n_odors=3, odor_unit=12.0, **epl_overrides):
    """Small trained attractor shared by several test modules."""
    odors = generate_series(OdorSeriesSpec(
        dimension=d, n_similar=max(1, n_odors - 1),
        include_nonoverlapping=n_odors > 1,
        inter_odor_distance=0.5 * odor_unit * np.sqrt(d),
        rng_seed=seed))
    pre = GlomerularPreprocessor(random_state=seed + 100).fit(odors)
    X = pre.transform(odors)
    config = EplConfig(rng_seed=seed + 200, **epl_overrides)
    state = build_network(config, d)
    for i in range(len(odors)):
        train_one_shot(state, X[i], i)
    return odors, pre, X, state


@pytest.fixture(scope="session")
def small_trained():
    return make_trained_network()
