import numpy as np
import pytest

from elmhbf.channel import ChannelModelParams, SystemConfig, generate_channel


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    return SystemConfig.from_snr_db(5.0, K=2, Ns=1, Nt=8, Nr=4, Nrft=4, Nrfr=2)


@pytest.fixture
def reference_cfg():
    return SystemConfig.from_snr_db(0.0, K=3, Ns=2, Nt=16, Nr=16, Nrft=9, Nrfr=3)


@pytest.fixture
def small_channel(small_cfg):
    return generate_channel(small_cfg, ChannelModelParams(), seed=3)
