"""Variational (MMSE) lower bound for the colluding-warden covertness constraint.

The exact constraint ``ln det E0 - ln det E1 >= -2 eps^2 / M`` with
``E_i = I + H R_X^i H^H / sigma^2`` is replaced by the concave surrogate
``T1 + T2`` whose auxiliaries ``(U1, P1, P2)`` make it tight at the current
point. All logarithms are natural.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import hermitize, logdet_pd, psd_floor

INVERSE_FLOOR = 1e-12


@dataclass
class MmseAux:
    """Auxiliary variables of the surrogate: combiner ``U1`` and weights ``P1``, ``P2``."""

    U1: np.ndarray
    P1: np.ndarray
    P2: np.ndarray


def update_U1(H: np.ndarray, RE: np.ndarray, noise: float) -> np.ndarray:
    """MMSE combiner ``(sigma^2 I + H R_E R_E^H H^H)^-1 H R_E`` of shape ``(W, N)``."""
    HR = H @ RE
    A = noise * np.eye(H.shape[0]) + HR @ HR.conj().T
    return np.linalg.solve(hermitize(A), HR)


def mse_matrix_E1(H: np.ndarray, RE: np.ndarray, U1: np.ndarray, noise: float) -> np.ndarray:
    """``E1 = (U1^H H R_E - I)(U1^H H R_E - I)^H + sigma^2 U1^H U1``."""
    B = U1.conj().T @ H @ RE - np.eye(RE.shape[0])
    return hermitize(B @ B.conj().T + noise * U1.conj().T @ U1)


def mse_matrix_E2(H: np.ndarray, RX: np.ndarray, noise: float) -> np.ndarray:
    """``E2 = I + H R_X^1 H^H / sigma^2``."""
    return hermitize(np.eye(H.shape[0]) + H @ RX @ H.conj().T / noise)


def _inverse(E: np.ndarray) -> np.ndarray:
    return hermitize(np.linalg.inv(psd_floor(E, INVERSE_FLOOR)))


def update_P1(E1: np.ndarray) -> np.ndarray:
    """Optimal weight ``P1 = E1^-1`` (eigenvalues floored before inversion)."""
    return _inverse(E1)


def update_P2(E2: np.ndarray) -> np.ndarray:
    """Optimal weight ``P2 = E2^-1``."""
    return _inverse(E2)


def refresh_aux(H: np.ndarray, W: np.ndarray, RE: np.ndarray, noise: float) -> MmseAux:
    """Auxiliaries that make the surrogate tight at ``(W, R_E)``."""
    U1 = update_U1(H, RE, noise)
    P1 = update_P1(mse_matrix_E1(H, RE, U1, noise))
    RX = W @ W.conj().T + RE @ RE
    P2 = update_P2(mse_matrix_E2(H, RX, noise))
    return MmseAux(U1, P1, P2)


def evaluate_T1(H, RE, aux: MmseAux, noise: float) -> float:
    E1 = mse_matrix_E1(H, RE, aux.U1, noise)
    return logdet_pd(aux.P1) - float(np.real(np.trace(aux.P1 @ E1))) + RE.shape[0]


def evaluate_T2(H, W, RE, aux: MmseAux, noise: float) -> float:
    E2 = mse_matrix_E2(H, W @ W.conj().T + RE @ RE, noise)
    return logdet_pd(aux.P2) - float(np.real(np.trace(aux.P2 @ E2))) + H.shape[0]


def evaluate_R(H, W, RE, aux: MmseAux, noise: float) -> float:
    """Surrogate ``R = T1 + T2`` (nats); a lower bound on :func:`exact_log_ratio`."""
    return evaluate_T1(H, RE, aux, noise) + evaluate_T2(H, W, RE, aux, noise)


def exact_log_ratio(H, W, R0, noise: float) -> float:
    """``ln det(I + H R0 H^H / s) - ln det(I + H R_X^1 H^H / s)`` (non-positive)."""
    I = np.eye(H.shape[0])
    E0 = I + H @ R0 @ H.conj().T / noise
    HW = H @ W
    E1 = E0 + HW @ HW.conj().T / noise
    return logdet_pd(E0) - logdet_pd(E1)


def covert_bound(eps: float, M: int) -> float:
    """Lower bound on the log-ratio that keeps the fused KL divergence below ``2 eps^2``."""
    return -2.0 * eps**2 / M


def woodbury_kl_upper(H, W, R0, noise: float, M: int) -> float:
    """``M (ln det Lambda1 - ln det Lambda0)``, an upper bound on the fused KL divergence."""
    return -M * exact_log_ratio(H, W, R0, noise)


def _cross_form(t, k, Q, b):
    """Value, gradient in ``t`` and Hessian bound of ``sum_wc a_w^H Q_wc a_c + Re sum_w a_w^H b_w``.

    ``a_w = exp(i k_w t)`` elementwise, ``Q`` has shape ``(W, W, N, N)`` and ``b``
    shape ``(W, N)``.
    """
    A = np.exp(1j * np.outer(k, t))
    Qa = np.einsum("wcnm,cm->wcn", Q, A)
    aQ = np.einsum("wn,wcnm->wcm", A.conj(), Q)
    value = float(np.real(np.einsum("wn,wcn->", A.conj(), Qa) + np.sum(A.conj() * b)))
    grad = np.real(
        np.einsum("w,wn,wcn->n", -1j * k, A.conj(), Qa)
        + np.einsum("c,wcn,cn->n", 1j * k, aQ, A)
        + np.einsum("w,wn,wn->n", -1j * k, A.conj(), b)
    )
    kmax2 = float(np.max(k**2))
    N = t.size
    bound = 2 * kmax2 * N**2 * float(np.sum(np.max(np.abs(Q), axis=(2, 3))))
    bound += kmax2 * float(np.sum(np.max(np.abs(b), axis=1)))
    return value, grad, bound


def surrogate_t_terms(beta, W, RE, aux: MmseAux, noise: float):
    """Coefficients ``(Q, b, const)`` of the position-dependent part of ``R``.

    With ``H(t) = diag(beta) A(t)^H``, ``R(t) = const + sum_wc a_w^H Q_wc a_c +
    Re sum_w a_w^H b_w``.
    """
    R0 = RE @ RE
    RX = W @ W.conj().T + R0
    B = aux.U1 @ aux.P1 @ aux.U1.conj().T
    Z = RE @ aux.P1 @ aux.U1.conj().T
    bb = np.outer(beta, beta.conj())
    # Q[w, c] = -beta_w conj(beta_c) (B[c, w] R0 + P2[c, w] RX / noise)
    Q = -(bb * B.T)[:, :, None, None] * R0 - (bb * aux.P2.T)[:, :, None, None] * RX / noise
    b = 2 * beta[:, None] * Z.T
    Nn, Wn = RE.shape[0], beta.size
    const = (
        np.log(np.linalg.det(aux.P1).real) + Nn
        - float(np.real(np.trace(aux.P1))) - noise * float(np.real(np.trace(aux.P1 @ aux.U1.conj().T @ aux.U1)))
        + np.log(np.linalg.det(aux.P2).real) + Wn - float(np.real(np.trace(aux.P2)))
    )
    return Q, b, const


def grad_R_t(t, angles, wavelength, beta, W, RE, aux: MmseAux, noise: float):
    """Surrogate ``R`` as a function of transmit positions.

    Returns:
        ``(value, gradient, omega)`` where ``omega`` bounds the spectral norm of
        the Hessian in ``t`` everywhere (max-modulus construction).
    """
    k = 2 * np.pi / wavelength * np.cos(np.asarray(angles))
    Q, b, const = surrogate_t_terms(np.asarray(beta), W, RE, aux, noise)
    value, grad, omega = _cross_form(np.asarray(t, dtype=float), k, Q, b)
    return value + const, grad, omega
