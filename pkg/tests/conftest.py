import numpy as np
import pytest

from risshield.scenario import (ScenarioConfig, GeometryConfig, PartitionedChannels,
                                build_scenario, partition_channels, initial_partition)
from risshield.algorithms import AlgorithmSettings, judicious_state


def desk_config(seed=0, m=2, gamma_s_db=5.0, gamma_c_db=-10.0, **overrides) -> ScenarioConfig:
    """Small desk-scale scenario; detector placed away from the sensing band so
    the protection gap is structurally visible at only 16 RIS elements."""
    geo = GeometryConfig(detector_azimuth_deg=75.0)
    kwargs = dict(m=m, n=16, n_x=4, n_y=4, k=2, l=4, l_x=2, l_y=2,
                  gamma_s_default=10 ** (gamma_s_db / 10),
                  gamma_c_default=10 ** (gamma_c_db / 10),
                  seed=seed, geometry=geo)
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


def fast_settings(**overrides) -> AlgorithmSettings:
    kwargs = dict(obj_stall_rel=1e-3, max_iter_inner=20, max_iter_outer=3, eps_outer=0.05)
    kwargs.update(overrides)
    return AlgorithmSettings(**kwargs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def desk_cfg():
    return desk_config()


@pytest.fixture
def desk_scene(desk_cfg):
    channels, partition, grid = build_scenario(desk_cfg)
    return desk_cfg, channels, partition, grid


@pytest.fixture
def desk_state(desk_scene):
    cfg, channels, partition, _ = desk_scene
    pch = partition_channels(channels, partition)
    return cfg, pch, judicious_state(pch, cfg)


def random_partitioned(rng, m=2, k=2, n_r=4, n_a=2, l=1) -> PartitionedChannels:
    """Unstructured complex channels for oracle comparisons."""
    def rc(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return PartitionedChannels(
        g_r=rc(n_r, m), h_r=rc(k, n_r), c_r=rc(l, n_r), c_a=rc(l, n_a),
        e_r=rc(n_r), e_a=rc(n_a), d=rc(l),
    )
