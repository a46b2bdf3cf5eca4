import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covert_dfrc import detection as det

from conftest import random_psd


def test_analytic_case():
    # [TRIVIAL] eta0=1, eta1=2, M=1: threshold 2 ln 2, DEP = 1 - (3/4 - 1/2).
    assert det.optimal_threshold(1.0, 2.0, 1) == pytest.approx(2 * np.log(2))
    assert det.noncolluding_min_dep(1.0, 2.0, 1) == pytest.approx(0.75, abs=1e-12)


def test_dep_matches_frozen_oracle():
    # [DERIVED] mpmath evaluation of 1 - [P(8, x/1) - P(8, x/3)] at the LRT threshold.
    assert det.optimal_threshold(1.0, 3.0, 8) == pytest.approx(13.18334746401731629, rel=1e-13)
    assert det.noncolluding_min_dep(1.0, 3.0, 8) == pytest.approx(0.1272303749475914350, abs=1e-12)


def test_kappa_value():
    # [PAPER] kappa(0.05, 32) = 1.017888.
    assert det.kappa_solve(0.05, 32) == pytest.approx(1.017888, abs=5e-7)
    k = det.kappa_solve(0.1, 8)
    assert det.kl_noncolluding(1.0, k, 8) == pytest.approx(2 * 0.1**2, rel=1e-10)


def test_equal_powers_are_undetectable():
    assert det.noncolluding_min_dep(2.0, 2.0, 32) == 1.0
    assert det.kl_noncolluding(2.0, 2.0, 32) == 0.0
    with pytest.raises(ValueError):
        det.noncolluding_min_dep(2.0, 1.0, 4)


def test_kl_matches_log_likelihood_average():
    rng = np.random.default_rng(0)
    eta0, eta1, M = 1.0, 1.7, 4
    y = np.sqrt(eta0 / 2) * (rng.normal(size=(200_000, M)) + 1j * rng.normal(size=(200_000, M)))
    e = np.sum(np.abs(y) ** 2, axis=1)
    llr = M * np.log(eta1 / eta0) - e / eta0 + e / eta1
    assert np.mean(llr) == pytest.approx(det.kl_noncolluding(eta0, eta1, M), rel=0.02)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(1.0, 5.0), st.sampled_from([1, 2, 8, 32]))
def test_pinsker_bound_single_warden(eta0, ratio, M):
    eta1 = eta0 * ratio
    tv = 1 - det.noncolluding_min_dep(eta0, eta1, M)
    assert tv <= np.sqrt(det.kl_noncolluding(eta0, eta1, M) / 2) + 1e-9


def test_noncolluding_stats():
    a = np.exp(1j * np.array([0.0, 0.4, 1.1]))
    W = np.array([[1.0], [0.5j], [0.0]])
    R0 = np.eye(3)
    e0, e1 = det.noncolluding_stats(0.5, a, W, R0, 0.1)
    assert e0 == pytest.approx(0.25 * 3 + 0.1)
    assert e1 == pytest.approx(e0 + 0.25 * abs(a.conj() @ W[:, 0]) ** 2)


def test_colluding_single_warden_reduces_to_scalar_case():
    lam0, lam1 = np.array([[1.3]]), np.array([[2.1]])
    stats = det.colluding_stats_from_covariances(lam0, lam1, 8)
    assert det.colluding_min_dep(stats, 8) == pytest.approx(det.noncolluding_min_dep(1.3, 2.1, 8), abs=1e-8)
    assert det.kl_colluding(stats, 8) == pytest.approx(det.kl_noncolluding(1.3, 2.1, 8), rel=1e-12)


def test_colluding_kl_matrix_form():
    rng = np.random.default_rng(1)
    lam0 = np.eye(3) + random_psd(rng, 3) / 3
    lam1 = lam0 + random_psd(rng, 3, 1) / 3
    M = 6
    stats = det.colluding_stats_from_covariances(lam0, lam1, M)
    A = np.linalg.solve(lam1, lam0)
    direct = M * (np.trace(A).real - np.log(np.linalg.det(A).real) - 3)
    assert det.kl_colluding(stats, M) == pytest.approx(direct, rel=1e-10)
    assert det.woodbury_kl_bound(stats, M) >= det.kl_colluding(stats, M)
    assert det.woodbury_kl_bound(stats, M) == pytest.approx(
        M * np.log(np.linalg.det(lam1).real / np.linalg.det(lam0).real), rel=1e-10
    )


def test_colluding_stats_from_channel():
    rng = np.random.default_rng(2)
    H = rng.normal(size=(2, 4)) + 1j * rng.normal(size=(2, 4))
    W = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
    R0 = random_psd(rng, 4)
    stats = det.colluding_stats(H, W, R0, 0.5, 16)
    np.testing.assert_allclose(stats.lambda0, H @ R0 @ H.conj().T + 0.5 * np.eye(2))
    np.testing.assert_allclose(stats.lambda1, stats.lambda0 + H @ W @ W.conj().T @ H.conj().T)
    np.testing.assert_allclose(stats.scales_h0, stats.gains / (1 + stats.gains))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 4, 32]))
def test_pinsker_bound_colluding(seed, M):
    rng = np.random.default_rng(seed)
    dim = 2 + seed % 2
    lam0 = np.eye(dim) + random_psd(rng, dim) / dim
    lam1 = lam0 + rng.uniform(0.01, 2.0) * random_psd(rng, dim, 1) / dim
    stats = det.colluding_stats_from_covariances(lam0, lam1, M)
    tv = 1 - det.colluding_min_dep(stats, M)
    assert tv <= np.sqrt(det.kl_colluding(stats, M) / 2) + 1e-9


def test_monte_carlo_is_reproducible_and_accurate():
    a = det.monte_carlo_noncolluding(1.0, 2.0, 1, 40_000, 3)
    assert a == det.monte_carlo_noncolluding(1.0, 2.0, 1, 40_000, 3)
    assert a[0] == pytest.approx(0.75, abs=0.02)
    assert 0 < a[1] < 0.02


def test_monte_carlo_colluding_accuracy():
    rng = np.random.default_rng(4)
    lam0 = np.eye(2) + random_psd(rng, 2) / 4
    lam1 = lam0 + random_psd(rng, 2, 1) / 4
    stats = det.colluding_stats_from_covariances(lam0, lam1, 4)
    emp, hw = det.monte_carlo_colluding(lam0, lam1, 4, 40_000, 5)
    assert emp == pytest.approx(det.colluding_min_dep(stats, 4), abs=max(2 * hw, 0.02))


def test_signal_level_simulation_matches_closed_form():
    rng = np.random.default_rng(6)
    N, K, M = 4, 2, 8
    p = np.array([0.0, 0.07, 0.2, 0.31])
    steering = np.exp(2j * np.pi / 0.1 * np.outer(np.cos([0.3, 1.9]), p))
    gains = np.array([0.8, 1.1j])
    W = 0.4 * (rng.normal(size=(N, K)) + 1j * rng.normal(size=(N, K)))
    R0 = random_psd(rng, N) / 4
    out = det.simulate_signal_dep(steering, gains, W, R0, 0.2, M, 40_000, 7, colluding=False)
    for w in range(2):
        e0, e1 = det.noncolluding_stats(gains[w], steering[w], W, R0, 0.2)
        assert out[w][0] == pytest.approx(det.noncolluding_min_dep(e0, e1, M), abs=0.02)
    H = gains[:, None] * steering.conj()
    fused = det.simulate_signal_dep(steering, gains, W, R0, 0.2, M, 40_000, 8, colluding=True)
    assert len(fused) == 1
    assert fused[0][0] == pytest.approx(det.colluding_min_dep(det.colluding_stats(H, W, R0, 0.2, M), M), abs=0.02)


def test_wilson_half_width():
    # [DERIVED] z / (1 + z^2/n) * sqrt(p(1-p)/n + z^2/(4 n^2)) at p = 0.5, n = 100.
    assert det.wilson_half_width(50, 100) == pytest.approx(0.096170, abs=1e-5)
    assert np.isnan(det.wilson_half_width(0, 0))
