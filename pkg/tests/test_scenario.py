import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
import hypothesis.strategies as st

from risshield.scenario import (ScenarioConfig, GeometryConfig, ChannelSet, ElementPartition,
                                build_scenario, config_from_dict, initial_partition,
                                los_channel, partition_channels, rician_channel,
                                save_config, load_config, sensing_grid_angles,
                                steering_vector, path_gain)

from conftest import desk_config


def test_steering_reference_element_is_one():
    for az, el in [(0.3, 1.2), (-2.0, 0.4), (1.1, 2.9)]:
        a = steering_vector(az, el, (3, 2))
        assert a[0] == pytest.approx(1.0)


def test_steering_substitution_examples():
    # element (2,1) is flat index 1 (n_x varies fastest)
    a = steering_vector(0.0, np.pi / 2, (2, 2))
    assert a[1] == pytest.approx(np.exp(1j * np.pi))
    a = steering_vector(0.0, np.pi / 6, (2, 2))
    assert a[1] == pytest.approx(1j)


def test_steering_flattening_is_column_major():
    a = steering_vector(0.4, 1.0, (3, 2))
    ux = np.cos(0.4) * np.sin(1.0)
    uy = np.sin(0.4) * np.sin(1.0)
    # flat index 4 -> n_x = 2, n_y = 2 (zero-based (1, 1))
    assert a[4] == pytest.approx(np.exp(1j * np.pi * (ux + uy)))


@given(az=st.floats(-np.pi, np.pi), el=st.floats(0.0, np.pi),
       nx=st.integers(1, 6), ny=st.integers(1, 6))
@hyp_settings(max_examples=60, deadline=None)
def test_steering_entries_unit_magnitude(az, el, nx, ny):
    a = steering_vector(az, el, (nx, ny))
    assert a.shape == (nx * ny,)
    assert np.allclose(np.abs(a), 1.0, atol=1e-12)


def test_steering_rejects_bad_grid():
    with pytest.raises(ValueError):
        steering_vector(0.0, 1.0, (0, 3))


def test_los_channel_magnitudes(desk_cfg):
    c = los_channel(1.0, 0.2, 1.3, desk_cfg)
    assert np.allclose(np.abs(c), np.sqrt(1e-3))
    c = los_channel(8.0, 0.2, 1.3, desk_cfg)
    assert np.allclose(np.abs(c), np.sqrt(1e-3 / 64))


def test_los_channel_power_law(desk_cfg):
    for d in [0.5, 2.0, 7.3, 31.0]:
        c = los_channel(d, 0.9, 1.1, desk_cfg)
        power = np.abs(c[0]) ** 2
        assert power == pytest.approx(desk_cfg.ref_gain * d ** -desk_cfg.pathloss_exp,
                                      rel=1e-12)


def test_los_channel_phase_convention(desk_cfg):
    d = 8.0
    c = los_channel(d, np.deg2rad(60), np.deg2rad(80), desk_cfg)
    expected = -2 * np.pi * d / desk_cfg.wavelength
    assert np.angle(c[0]) == pytest.approx(np.angle(np.exp(1j * expected)))


def test_los_channel_rejects_nonpositive_distance(desk_cfg):
    with pytest.raises(ValueError):
        los_channel(0.0, 0.1, 0.1, desk_cfg)
    with pytest.raises(ValueError):
        path_gain(-2.0, desk_cfg)


def test_rician_infinite_factor_is_los(rng):
    los = np.exp(1j * rng.uniform(0, 2 * np.pi, (3, 2)))
    h = rician_channel(3, 2, los, 1e12, 0.25, rng)
    assert np.allclose(h, 0.5 * los, atol=1e-5)


def test_rician_rayleigh_moment(rng):
    los = np.ones((400, 250), dtype=complex)
    h = rician_channel(400, 250, los, 0.0, 2.0, rng)
    second_moment = np.mean(np.abs(h) ** 2) / 2.0
    assert abs(second_moment - 1.0) < 3.0 / np.sqrt(h.size)


def test_rician_3db_moment(rng):
    kappa = 10 ** 0.3
    los = np.exp(1j * rng.uniform(0, 2 * np.pi, (400, 250)))
    h = rician_channel(400, 250, los, kappa, 0.7, rng)
    second_moment = np.mean(np.abs(h) ** 2) / 0.7
    # var(|h|^2)/gain^2 = (1 + 2 kappa) / (1 + kappa)^2 for unit-mean Rician power
    sigma = np.sqrt((1 + 2 * kappa) / (1 + kappa) ** 2 / h.size)
    assert abs(second_moment - 1.0) < 3 * sigma


def test_rician_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        rician_channel(3, 2, np.ones((2, 2)), 1.0, 1.0, rng)


def test_rician_deterministic_under_seed():
    a = rician_channel(4, 3, np.ones((4, 3)), 2.0, 1.0, np.random.default_rng(7))
    b = rician_channel(4, 3, np.ones((4, 3)), 2.0, 1.0, np.random.default_rng(7))
    assert np.array_equal(a, b)


def _toy_channels(n=4, m=2, k=2, l=2, seed=5):
    rng = np.random.default_rng(seed)
    def rc(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return ChannelSet(g=rc(n, m), h=rc(k, n), c=rc(l, n), e=rc(n), d=rc(l))


def test_partition_identity_and_complement():
    ch = _toy_channels()
    full = partition_channels(ch, ElementPartition(np.arange(4), np.array([], dtype=int)))
    assert np.array_equal(full.g_r, ch.g)
    assert full.c_a.shape == (2, 0)
    swapped = partition_channels(ch, ElementPartition(np.array([], dtype=int), np.arange(4)))
    assert swapped.e_r.size == 0
    assert np.array_equal(swapped.e_a, ch.e)


def test_partition_selection_semantics():
    ch = _toy_channels()
    part = ElementPartition(np.array([0, 2]), np.array([1, 3]))
    pch = partition_channels(ch, part)
    assert np.array_equal(pch.g_r, ch.g[[0, 2]])
    assert np.array_equal(pch.e_a, ch.e[[1, 3]])
    assert np.array_equal(pch.h_r, ch.h[:, [0, 2]])
    assert np.array_equal(pch.c_a, ch.c[:, [1, 3]])


def test_partition_recovers_parent():
    ch = _toy_channels()
    part = ElementPartition(np.array([1, 3]), np.array([0, 2]))
    pch = partition_channels(ch, part)
    rebuilt = np.empty_like(ch.e)
    rebuilt[part.reflecting] = pch.e_r
    rebuilt[part.absorptive] = pch.e_a
    assert np.array_equal(rebuilt, ch.e)


def test_partition_validation():
    with pytest.raises(ValueError):
        ElementPartition(np.array([0, 1]), np.array([1, 2]))
    with pytest.raises(ValueError):
        ElementPartition(np.array([0, 1]), np.array([3]))
    ch = _toy_channels()
    with pytest.raises(ValueError):
        partition_channels(ch, ElementPartition(np.arange(3), np.array([3, 4])))


def test_partition_reassign_keeps_cover():
    part = initial_partition(6, 4)
    moved = part.reassign(np.array([4]))
    assert moved.n_r == 5 and moved.n_a == 1
    with pytest.raises(ValueError):
        part.reassign(np.array([0]))  # index 0 is reflecting, not absorptive


def test_build_scenario_full_scale_defaults():
    cfg = ScenarioConfig()
    channels, partition, grid = build_scenario(cfg)
    assert channels.c.shape == (9, 64)
    assert partition.n_r == 40
    # all sensing locations at 8 m: path gain fixed by the power law
    assert np.allclose(np.abs(channels.c), np.sqrt(1e-3 / 64), atol=1e-12)
    az = np.rad2deg(grid[:, 0])
    el = np.rad2deg(grid[:, 1])
    assert az.min() == pytest.approx(45) and az.max() == pytest.approx(55)
    assert el.min() == pytest.approx(75) and el.max() == pytest.approx(85)


def test_degenerate_grid_sits_at_center():
    cfg = desk_config(l=1, l_x=1, l_y=1)
    grid = sensing_grid_angles(cfg)
    assert grid.shape == (1, 2)
    assert np.rad2deg(grid[0, 0]) == pytest.approx(50.0)
    assert np.rad2deg(grid[0, 1]) == pytest.approx(80.0)


def test_build_scenario_is_seed_reproducible(desk_cfg):
    a, pa, ga = build_scenario(desk_cfg)
    b, pb, gb = build_scenario(desk_cfg)
    assert np.array_equal(a.g, b.g) and np.array_equal(a.h, b.h)
    assert np.array_equal(a.c, b.c) and np.array_equal(a.e, b.e)
    assert np.array_equal(a.d, b.d)
    c, _, _ = build_scenario(desk_config(seed=desk_cfg.seed + 1))
    assert not np.array_equal(a.g, c.g)


def test_grid_mismatch_rejected():
    with pytest.raises(ValueError):
        ScenarioConfig(l=5, l_x=2, l_y=2)
    with pytest.raises(ValueError):
        ScenarioConfig(n=10, n_x=3, n_y=3)


def test_config_yaml_roundtrip(tmp_path, desk_cfg):
    path = tmp_path / "scenario.yaml"
    save_config(desk_cfg, str(path))
    loaded = load_config(str(path))
    assert loaded == desk_cfg


def test_config_defaults_overridable():
    cfg = config_from_dict({"m": 2, "n": 16, "n_x": 4, "n_y": 4,
                            "geometry": {"detector_range": 5.0}})
    assert cfg.m == 2 and cfg.geometry.detector_range == 5.0
    assert cfg.k == 4  # untouched default
    assert cfg.geometry.ris_pos == (10.0, 0.0, 0.0)
