import numpy as np
import pytest
from scipy import linalg

from covert_dfrc import receiver as rx
from covert_dfrc.bcd import initialize_state
from covert_dfrc.beamforming import NONCOLLUDING, radar_sinr, update_beamformers
from covert_dfrc.channel import Scenario, ScenarioConfig, apv_violation

from conftest import random_psd


def test_generalized_principal_matches_scipy():
    rng = np.random.default_rng(0)
    A = random_psd(rng, 4, 2)
    B = random_psd(rng, 4) + np.eye(4)
    lam, u = rx.generalized_principal(A, B)
    ref = linalg.eigh(A, B, eigvals_only=True)[-1]
    assert lam == pytest.approx(ref, rel=1e-10)
    np.testing.assert_allclose(A @ u, lam * B @ u, atol=1e-9 * np.abs(A).max())
    assert np.linalg.norm(u) == pytest.approx(1.0)


def test_canonical_phase():
    v = np.array([0.0, 2j, 1.0])
    out = rx.canonical_phase(v)
    assert out[1].imag == pytest.approx(0.0) and out[1].real > 0
    np.testing.assert_allclose(np.abs(out), np.abs(v))
    assert np.all(rx.canonical_phase(np.zeros(2)) == 0)


def _sinr_of(S, B, u):
    return np.real(u.conj() @ S @ u) / np.real(u.conj() @ B @ u)


@pytest.mark.parametrize("seed", range(5))
def test_filters_beat_random_filters(seed):
    scn = Scenario.from_config(ScenarioConfig(seed=seed))
    state = initialize_state(scn, NONCOLLUDING)
    state.U = rx.update_filters(scn, state)
    rng = np.random.default_rng(seed)
    N = state.r.size
    for i in (0, 1):
        for w in range(2):
            S, B = rx.filter_matrices(scn, state, w, i)
            best = _sinr_of(S, B, state.U[i, w])
            Z = rng.normal(size=(1000, N)) + 1j * rng.normal(size=(1000, N))
            Z /= np.linalg.norm(Z, axis=1, keepdims=True)
            assert all(_sinr_of(S, B, z) <= best * (1 + 1e-12) for z in Z)


def test_filter_sinr_agrees_with_radar_sinr(scenario):
    state = initialize_state(scenario, NONCOLLUDING)
    state.U = rx.update_filters(scenario, state)
    sinr = radar_sinr(scenario, state)
    for i in (0, 1):
        for w in range(2):
            S, B = rx.filter_matrices(scenario, state, w, i)
            assert _sinr_of(S, B, state.U[i, w]) == pytest.approx(sinr[i, w], rel=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_dinkelbach_trace_nondecreasing(seed):
    scn = Scenario.from_config(ScenarioConfig(seed=seed))
    state = initialize_state(scn, NONCOLLUDING)
    state, _ = update_beamformers(scn, state, NONCOLLUDING)
    state.U = rx.update_filters(scn, state)
    res = rx.optimize_rx_apv(scn, state)
    assert np.all(np.diff(res.mu_trace) >= 0)
    assert res.mu_trace[-1] == pytest.approx(radar_sinr(scn, state.copy_with(r=res.r)).min(), rel=1e-12)
    cfg = scn.config
    assert apv_violation(res.r, cfg.region_length, cfg.min_spacing) <= 1e-12
    assert res.reason in ("converged", "max-iterations") or res.reason.startswith("stall")


def test_dinkelbach_keeps_met_thresholds(scenario):
    state = initialize_state(scenario, NONCOLLUDING)
    state, _ = update_beamformers(scenario, state, NONCOLLUDING)
    state.U = rx.update_filters(scenario, state)
    before = radar_sinr(scenario, state)
    res = rx.optimize_rx_apv(scenario, state)
    after = radar_sinr(scenario, state.copy_with(r=res.r))
    gam = np.asarray(scenario.config.radar_sinr)[None, :].repeat(2, 0)
    met = before >= gam
    assert np.all(after[met] >= gam[met])
