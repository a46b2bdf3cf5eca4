import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covert_dfrc import colluding as coll
from covert_dfrc import detection as det
from covert_dfrc.numerics import psd_floor

from conftest import random_psd

WAVELENGTH = 0.1


def _instance(seed, N=4, Wn=2, noise=1.0):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 0.6, N))
    angles = rng.uniform(0.2, 2.9, Wn)
    beta = 0.5 * (rng.normal(size=Wn) + 1j * rng.normal(size=Wn))
    W = 0.5 * (rng.normal(size=(N, 2)) + 1j * rng.normal(size=(N, 2)))
    RE = random_psd(rng, N) / N
    return t, angles, beta, W, RE, noise


def _channel(t, angles, beta):
    A = np.exp(2j * np.pi / WAVELENGTH * np.outer(np.cos(angles), t))
    return beta[:, None] * A.conj()


def _mp_R(t, angles, beta, W, RE, aux, noise):
    """Surrogate R(t) evaluated from its definition in extended precision."""
    N, Wn = len(t), len(angles)
    k = 2 * mp.pi / mp.mpf(WAVELENGTH)
    H = mp.matrix(Wn, N)
    for w in range(Wn):
        for n in range(N):
            H[w, n] = mp.mpc(beta[w]) * mp.expj(-k * mp.cos(mp.mpf(angles[w])) * t[n])
    M = lambda A: mp.matrix(A.tolist())  # noqa: E731
    RE_, W_, U1, P1, P2 = M(RE), M(W), M(aux.U1), M(aux.P1), M(aux.P2)
    RX = W_ * W_.H + RE_ * RE_
    B = U1.H * H * RE_ - mp.eye(N)
    E1 = B * B.H + noise * U1.H * U1
    E2 = mp.eye(Wn) + H * RX * H.H / noise
    tr = lambda A: sum(A[i, i] for i in range(A.rows))  # noqa: E731
    T1 = mp.log(mp.re(mp.det(P1))) - mp.re(tr(P1 * E1)) + N
    T2 = mp.log(mp.re(mp.det(P2))) - mp.re(tr(P2 * E2)) + Wn
    return T1 + T2


def test_surrogate_is_tight_after_refresh():
    t, angles, beta, W, RE, noise = _instance(0)
    H = _channel(t, angles, beta)
    aux = coll.refresh_aux(H, W, RE, noise)
    assert coll.evaluate_R(H, W, RE, aux, noise) == pytest.approx(coll.exact_log_ratio(H, W, RE @ RE, noise), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.2, 3.0))
def test_surrogate_is_a_lower_bound(seed, scale):
    t, angles, beta, W, RE, noise = _instance(seed)
    H = _channel(t, angles, beta)
    aux = coll.refresh_aux(H, W, RE, noise)
    W2 = W * scale + 0.1
    RE2 = psd_floor(RE * scale + 0.05 * np.eye(RE.shape[0]))
    exact = coll.exact_log_ratio(H, W2, RE2 @ RE2, noise)
    assert coll.evaluate_R(H, W2, RE2, aux, noise) <= exact + 1e-9


def test_position_form_matches_direct_evaluation():
    t, angles, beta, W, RE, noise = _instance(1)
    aux = coll.refresh_aux(_channel(t, angles, beta), W, RE, noise)
    t2 = t + 0.013
    value, _, _ = coll.grad_R_t(t2, angles, WAVELENGTH, beta, W, RE, aux, noise)
    assert value == pytest.approx(coll.evaluate_R(_channel(t2, angles, beta), W, RE, aux, noise), abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_extended_precision_differences(seed):
    t, angles, beta, W, RE, noise = _instance(seed)
    aux = coll.refresh_aux(_channel(t, angles, beta), W, RE, noise)
    t_eval = t + np.random.default_rng(seed).uniform(-0.01, 0.01, t.size)
    _, grad, _ = coll.grad_R_t(t_eval, angles, WAVELENGTH, beta, W, RE, aux, noise)
    with mp.workdps(40):
        h = mp.mpf("1e-15")
        fd = []
        for n in range(t.size):
            tp = [mp.mpf(float(v)) for v in t_eval]
            tm = list(tp)
            tp[n] += h
            tm[n] -= h
            fd.append(float((_mp_R(tp, angles, beta, W, RE, aux, noise) - _mp_R(tm, angles, beta, W, RE, aux, noise)) / (2 * h)))
    fd = np.array(fd)
    assert np.max(np.abs(grad - fd)) <= 1e-5 * np.max(np.abs(fd))


@pytest.mark.parametrize("seed", range(5))
def test_omega_dominates_hessian(seed):
    t, angles, beta, W, RE, noise = _instance(seed)
    aux = coll.refresh_aux(_channel(t, angles, beta), W, RE, noise)
    _, _, omega = coll.grad_R_t(t, angles, WAVELENGTH, beta, W, RE, aux, noise)
    rng = np.random.default_rng(seed)
    for _ in range(10):
        x = t + rng.uniform(-0.05, 0.05, t.size)
        h = 1e-6
        hess = np.array([
            (coll.grad_R_t(x + h * e, angles, WAVELENGTH, beta, W, RE, aux, noise)[1]
             - coll.grad_R_t(x - h * e, angles, WAVELENGTH, beta, W, RE, aux, noise)[1]) / (2 * h)
            for e in np.eye(t.size)
        ])
        hess = 0.5 * (hess + hess.T)
        assert np.linalg.eigvalsh(omega * np.eye(t.size) - hess)[0] >= -1e-8
        assert np.linalg.eigvalsh(omega * np.eye(t.size) + hess)[0] >= -1e-8


def test_bound_and_woodbury_relation():
    # [TRIVIAL] -2 eps^2 / M in nats.
    assert coll.covert_bound(0.05, 32) == pytest.approx(-2 * 0.05**2 / 32)
    t, angles, beta, W, RE, noise = _instance(2)
    H = _channel(t, angles, beta)
    R0 = RE @ RE
    stats = det.colluding_stats(H, W, R0, noise, 32)
    assert coll.woodbury_kl_upper(H, W, R0, noise, 32) == pytest.approx(det.woodbury_kl_bound(stats, 32))
    assert coll.woodbury_kl_upper(H, W, R0, noise, 32) >= det.kl_colluding(stats, 32)


def test_auxiliary_closed_forms():
    t, angles, beta, W, RE, noise = _instance(3)
    H = _channel(t, angles, beta)
    U1 = coll.update_U1(H, RE, noise)
    # U1 minimizes the MSE: perturbations cannot lower tr(E1).
    base = np.trace(coll.mse_matrix_E1(H, RE, U1, noise)).real
    rng = np.random.default_rng(0)
    for _ in range(20):
        D = 1e-3 * (rng.normal(size=U1.shape) + 1j * rng.normal(size=U1.shape))
        assert np.trace(coll.mse_matrix_E1(H, RE, U1 + D, noise)).real >= base - 1e-12
    E1 = coll.mse_matrix_E1(H, RE, U1, noise)
    np.testing.assert_allclose(coll.update_P1(E1) @ E1, np.eye(E1.shape[0]), atol=1e-9)
