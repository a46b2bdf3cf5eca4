import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covert_dfrc.channel import (
    Scenario,
    ScenarioConfig,
    apv_violation,
    config_from_mapping,
    dump_config,
    field_response_matrix,
    half_wavelength_apv,
    is_feasible_apv,
    load_config,
    repair_apv,
    steering_vector,
    substream,
    synthesize_scenario,
    target_response,
    uniform_apv,
    user_channel,
    user_channels,
)


def test_defaults_match_reference_setup():
    # [PAPER] K=3, N=6, M=32, Gamma=10 dB, eps=0.05, lambda=0.1 m, d=lambda/2, D=14 lambda.
    cfg = ScenarioConfig()
    assert (cfg.num_users, cfg.num_antennas, cfg.channel_uses, cfg.num_wardens) == (3, 6, 32, 2)
    assert cfg.radar_sinr == (10.0, 10.0)
    assert cfg.covertness == (0.05, 0.05)
    assert cfg.wavelength == 0.1
    assert cfg.min_spacing == pytest.approx(cfg.wavelength / 2)
    assert cfg.region_length == pytest.approx(14 * cfg.wavelength)
    np.testing.assert_allclose(np.rad2deg(cfg.warden_angles), [20.0, 105.0])


def test_user_channel_is_sum_over_paths():
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 1.4, 4))
    psi = rng.uniform(0, np.pi, 5)
    sig = rng.normal(size=5) + 1j * rng.normal(size=5)
    k = 2 * np.pi / 0.1
    expected = [np.sum(sig * np.exp(1j * k * tn * np.cos(psi))) for tn in t]
    np.testing.assert_allclose(user_channel(t, psi, sig, 0.1), expected)
    assert field_response_matrix(t, psi, 0.1).shape == (5, 4)


def test_user_channels_stack_rows(scenario):
    t = uniform_apv(scenario.config)
    ch = scenario.channels
    H = user_channels(t, ch, scenario.config.wavelength)
    for k in range(ch.num_users):
        np.testing.assert_allclose(H[k], user_channel(t, ch.path_angles[k], ch.path_gains[k], 0.1))


def test_steering_and_target_response():
    p = np.array([0.0, 0.05, 0.2])
    a = steering_vector(np.pi / 3, p, 0.1)
    np.testing.assert_allclose(np.abs(a), 1.0)
    np.testing.assert_allclose(a, np.exp(1j * 2 * np.pi / 0.1 * p * 0.5))
    G = target_response(np.pi / 3, p, p[:2], 0.1)
    assert np.linalg.matrix_rank(G) == 1


def test_synthesis_is_deterministic_per_seed():
    cfg = ScenarioConfig()
    a, b = synthesize_scenario(cfg, 5), synthesize_scenario(cfg, 5)
    np.testing.assert_array_equal(a.path_gains, b.path_gains)
    assert not np.allclose(a.path_gains, synthesize_scenario(cfg, 6).path_gains)


def test_synthesis_geometry_and_powers():
    cfg = ScenarioConfig()
    ch = synthesize_scenario(cfg, 1)
    assert np.all(np.linalg.norm(ch.user_positions - np.array(cfg.user_center), axis=1) <= cfg.user_radius)
    assert ch.path_angles.shape == (3, 12) and np.all((ch.path_angles >= 0) & (ch.path_angles <= np.pi))
    # |beta|^2 = C0 d^-2.6 and |alpha|^2 = C0^2 d^-5.2 at 10 m.
    np.testing.assert_allclose(np.abs(ch.warden_gain) ** 2, 1e-3 * 10.0**-2.6)
    np.testing.assert_allclose(ch.warden_echo, 1e-6 * 10.0**-5.2)


def test_path_gain_variance():
    cfg = ScenarioConfig(num_paths=4000)
    ch = synthesize_scenario(cfg, 2)
    emp = np.mean(np.abs(ch.path_gains) ** 2, axis=1) * cfg.num_paths
    np.testing.assert_allclose(emp, ch.large_scale, rtol=0.1)


def test_substreams_are_independent():
    a = substream(0, "channel").normal(size=4)
    b = substream(0, "monte-carlo").normal(size=4)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, substream(0, "channel").normal(size=4))


def test_position_initializers():
    cfg = ScenarioConfig()
    np.testing.assert_allclose(uniform_apv(cfg), np.linspace(0, 1.4, 6))
    np.testing.assert_allclose(half_wavelength_apv(cfg), 0.05 * np.arange(6))
    assert is_feasible_apv(uniform_apv(cfg), cfg.region_length, cfg.min_spacing)
    with pytest.raises(ValueError):
        half_wavelength_apv(ScenarioConfig(num_antennas=6, region_length=0.22, min_spacing=0.04))


def test_apv_violation_values():
    assert apv_violation([0.0, 0.05, 0.1], 1.0, 0.05) == 0.0
    assert apv_violation([-0.1, 0.5], 1.0, 0.05) == pytest.approx(0.1)
    assert apv_violation([0.0, 0.02], 1.0, 0.05) == pytest.approx(0.03)
    assert apv_violation([0.0, 1.2], 1.0, 0.05) == pytest.approx(0.2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-0.2, 1.6), min_size=2, max_size=8))
def test_repair_is_feasible(positions):
    p = repair_apv(positions, 1.4, 0.05)
    assert apv_violation(p, 1.4, 0.05) <= 1e-12


def test_repair_keeps_feasible_points():
    p = np.array([0.0, 0.3, 0.35, 1.4])
    np.testing.assert_array_equal(repair_apv(p, 1.4, 0.05), p)


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(num_users=0)
    with pytest.raises(ValueError):
        ScenarioConfig(radar_sinr=(10.0,))
    with pytest.raises(ValueError):
        ScenarioConfig(covertness=(0.05, 1.5))
    with pytest.raises(ValueError):
        ScenarioConfig(region_length=0.1)
    with pytest.raises(ValueError):
        config_from_mapping({"nonsense": 1})
    with pytest.raises(ValueError):
        config_from_mapping({"num_users": 2.5})


def test_config_document_roundtrip(tmp_path):
    cfg = ScenarioConfig(transmit_power=5.0, seed=9)
    path = tmp_path / "cfg.yaml"
    dump_config(cfg, path)
    back = load_config(path)
    assert back.seed == 9 and back.transmit_power == 5.0
    np.testing.assert_allclose(back.warden_angles, cfg.warden_angles)


def test_scalar_per_warden_values_broadcast():
    cfg = config_from_mapping({"radar_sinr": 20.0, "warden_angles": [30, 60, 90]})
    assert cfg.radar_sinr == (20.0, 20.0, 20.0)
    assert cfg.num_wardens == 3


def test_with_wardens():
    cfg = ScenarioConfig().with_wardens(4)
    assert cfg.num_wardens == 4 and len(set(cfg.warden_angles)) == 4
    assert ScenarioConfig().with_wardens(1).warden_angles == ScenarioConfig().warden_angles[:1]


def test_fused_channel_rows(scenario):
    t = uniform_apv(scenario.config)
    H = scenario.fused_channel(t)
    a = steering_vector(scenario.config.warden_angles[1], t, 0.1)
    np.testing.assert_allclose(H[1], scenario.channels.warden_gain[1] * a.conj())
    assert isinstance(scenario, Scenario)
