"""Warden detection performance: optimal tests, minimum error probabilities, KL bounds.

A single warden sees ``M`` i.i.d. samples ``y ~ CN(0, eta_i)`` under hypothesis
``i``. Colluding wardens fuse their samples into ``Y_F`` with column covariance
``Lambda_i``. Both optimal likelihood-ratio tests have closed-form error
probabilities, and ``Monte Carlo`` estimators are provided to cross-check them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from .numerics import ErlangMixture, erlang_mixture_cdf, regularized_lower_gamma

MC_CHUNK = 10_000
WILSON_Z = 1.959963984540054


def noncolluding_stats(beta: complex, a: np.ndarray, W: np.ndarray, R0: np.ndarray, noise: float):
    """Received powers ``(eta0, eta1)`` at one warden.

    Args:
        beta: One-way warden coefficient.
        a: Transmit steering vector toward the warden.
        W: ``(N, K)`` covert beamformers.
        R0: Dedicated radar covariance.
        noise: Warden noise power.
    """
    g = abs(beta) ** 2
    eta0 = g * float(np.real(a.conj() @ R0 @ a)) + noise
    eta1 = g * float(np.sum(np.abs(a.conj() @ W) ** 2)) + eta0
    return eta0, eta1


def optimal_threshold(eta0: float, eta1: float, M: int) -> float:
    """Energy threshold of the likelihood-ratio test (``M eta0`` in the limit ``eta1 -> eta0``)."""
    if eta1 < eta0:
        raise ValueError("eta1 must be at least eta0")
    delta = (eta1 - eta0) / eta0
    if delta < 1e-12:
        return M * eta0 * (1 + delta / 2)
    return M * eta1 * np.log1p(delta) / delta


def noncolluding_min_dep(eta0: float, eta1: float, M: int) -> float:
    """Minimum detection error probability of one warden, ``1 - [P(M, x0) - P(M, x1)]``."""
    if eta1 < eta0 * (1 - 1e-12):
        raise ValueError("eta1 must be at least eta0")
    if eta1 <= eta0:
        return 1.0
    thr = optimal_threshold(eta0, eta1, M)
    return 1.0 - (regularized_lower_gamma(M, thr / eta0) - regularized_lower_gamma(M, thr / eta1))


def kl_noncolluding(eta0: float, eta1: float, M: int) -> float:
    """``D(P0 || P1) = M (ln(eta1/eta0) + eta0/eta1 - 1)``."""
    r = eta1 / eta0
    return M * (np.log(r) + 1.0 / r - 1.0)


def kappa_solve(eps: float, M: int) -> float:
    """Largest ratio ``kappa >= 1`` with ``M (ln kappa + 1/kappa - 1) <= 2 eps^2``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")

    def f(k):
        return M * (np.log(k) + 1.0 / k - 1.0) - 2 * eps**2

    hi = 2.0
    while f(hi) <= 0:
        hi *= 2
    return float(optimize.brentq(f, 1.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


@dataclass(frozen=True)
class ColludingStats:
    """Second-order statistics of the fused warden observation.

    ``gains`` are the generalized eigenvalues ``nu`` of ``(Lambda1 - Lambda0, Lambda0)``;
    the quadratic test statistic is a weighted Erlang sum with weights
    ``nu / (1 + nu)`` under H0 and ``nu`` under H1.
    """

    lambda0: np.ndarray
    lambda1: np.ndarray
    gains: np.ndarray
    threshold: float

    @property
    def scales_h0(self) -> np.ndarray:
        return self.gains / (1 + self.gains)

    @property
    def scales_h1(self) -> np.ndarray:
        return self.gains


def colluding_stats(H: np.ndarray, W: np.ndarray, R0: np.ndarray, noise: float, M: int) -> ColludingStats:
    """Covariances, eigen-weights and threshold for the fused detector.

    Args:
        H: ``(Wn, N)`` fused warden channel, row ``w`` equal to ``beta_w a_w^H``.
        W: ``(N, K)`` covert beamformers.
        R0: Dedicated radar covariance.
        noise: Warden noise power.
        M: Channel uses.
    """
    lam0 = H @ R0 @ H.conj().T + noise * np.eye(H.shape[0])
    lam0 = 0.5 * (lam0 + lam0.conj().T)
    HW = H @ W
    diff = HW @ HW.conj().T
    return _stats_from_covariances(lam0, lam0 + diff, M, diff)


def _stats_from_covariances(lam0, lam1, M, diff=None) -> ColludingStats:
    if diff is None:
        diff = lam1 - lam0
    diff = 0.5 * (diff + diff.conj().T)
    gains = linalg.eigh(diff, lam0, eigvals_only=True)
    gains = np.clip(gains, 0.0, None)
    threshold = M * float(np.sum(np.log1p(gains)))
    return ColludingStats(lam0, lam1, gains, threshold)


def colluding_stats_from_covariances(lam0: np.ndarray, lam1: np.ndarray, M: int) -> ColludingStats:
    """Statistics for given ``Lambda0 <= Lambda1`` (Loewner order)."""
    return _stats_from_covariances(np.asarray(lam0), np.asarray(lam1), M)


def colluding_min_dep(stats: ColludingStats, M: int) -> float:
    """Minimum DEP ``1 - [F(chi | lambda0) - F(chi | lambda1)]`` of the fused detector."""
    if not np.any(stats.gains > 0):
        return 1.0
    f0 = erlang_mixture_cdf(ErlangMixture(tuple(stats.scales_h0), M), stats.threshold)
    f1 = erlang_mixture_cdf(ErlangMixture(tuple(stats.scales_h1), M), stats.threshold)
    return float(min(max(1.0 - (f0 - f1), 0.0), 1.0))


def kl_colluding(stats: ColludingStats, M: int) -> float:
    """``D(P0 || P1) = M (Tr(L1^-1 L0) - ln det(L1^-1 L0) - W)``, via the eigen-weights."""
    nu = stats.gains
    return M * float(np.sum(1.0 / (1.0 + nu) - 1.0 + np.log1p(nu)))


def woodbury_kl_bound(stats: ColludingStats, M: int) -> float:
    """Upper bound ``M (ln det Lambda1 - ln det Lambda0)`` on the fused KL divergence."""
    return stats.threshold


@dataclass(frozen=True)
class DetectionReport:
    """Detection outcome for one warden (``warden >= 0``) or the colluding group (``-1``)."""

    warden: int
    dep: float
    kl: float
    threshold: float
    dep_empirical: float = float("nan")
    half_width: float = float("nan")
    trials: int = 0


def wilson_half_width(errors: int, n: int, z: float = WILSON_Z) -> float:
    """Half-width of the Wilson score interval for ``errors / n``."""
    if n <= 0:
        return float("nan")
    p = errors / n
    return z / (1 + z * z / n) * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))


def _partitions(trials: int):
    """Balanced per-hypothesis trial counts split into fixed-size partitions."""
    half = trials // 2
    out = []
    for hyp, total in ((0, half), (1, trials - half)):
        start = 0
        while start < total:
            out.append((hyp, start // MC_CHUNK, min(MC_CHUNK, total - start)))
            start += MC_CHUNK
    return out


def _partition_rng(seed: int, hyp: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), (hyp << 32) | index]))


def _complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _dep_from_errors(errors: int, trials: int) -> tuple[float, float]:
    # Balanced trials: DEP = P_FA + P_MD = 2 * (total errors / total trials).
    return 2.0 * errors / trials, 2.0 * wilson_half_width(errors, trials)


def monte_carlo_noncolluding(eta0: float, eta1: float, M: int, trials: int, seed: int):
    """Empirical DEP of the likelihood-ratio test on simulated ``CN(0, eta_i I_M)`` samples.

    Returns:
        ``(dep, half_width)`` with a 95% Wilson half-width.
    """
    errors = 0
    llr_slope = 1.0 / eta0 - 1.0 / eta1
    llr_offset = M * np.log(eta0 / eta1)
    for hyp, index, n in _partitions(trials):
        rng = _partition_rng(seed, hyp, index)
        eta = eta1 if hyp else eta0
        y = np.sqrt(eta) * _complex_normal(rng, (n, M))
        energy = np.sum(np.abs(y) ** 2, axis=1)
        decide_h1 = llr_offset + llr_slope * energy > 0
        errors += int(np.sum(decide_h1 != bool(hyp)))
    return _dep_from_errors(errors, trials)


def monte_carlo_colluding(lam0: np.ndarray, lam1: np.ndarray, M: int, trials: int, seed: int):
    """Empirical DEP of the fused test ``||V^1/2 Y_F||_F^2 > chi`` on simulated observations."""
    stats = colluding_stats_from_covariances(lam0, lam1, M)
    V = np.linalg.inv(lam0) - np.linalg.inv(lam1)
    V = 0.5 * (V + V.conj().T)
    roots = [np.linalg.cholesky(lam0), np.linalg.cholesky(lam1)]
    dim = lam0.shape[0]
    errors = 0
    for hyp, index, n in _partitions(trials):
        rng = _partition_rng(seed, hyp, index)
        Y = _complex_normal(rng, (n, M, dim)) @ roots[hyp].T
        stat = np.real(np.einsum("tmi,ij,tmj->t", Y.conj(), V, Y))
        errors += int(np.sum((stat > stats.threshold) != bool(hyp)))
    return _dep_from_errors(errors, trials)


def simulate_signal_dep(
    steering: np.ndarray,
    gains: np.ndarray,
    W: np.ndarray,
    R0: np.ndarray,
    noise: float,
    M: int,
    trials: int,
    seed: int,
    colluding: bool,
):
    """Empirical DEP from simulated transmit signals ``x = W s + r`` seen by the wardens.

    Args:
        steering: ``(Wn, N)`` transmit steering vectors toward the wardens.
        gains: ``(Wn,)`` one-way warden coefficients.
        W, R0: Covert beamformers and dedicated radar covariance.
        noise: Warden noise power.
        M: Channel uses per detection attempt.
        trials: Balanced trials across both hypotheses.
        seed: Monte Carlo seed.
        colluding: Fuse all wardens (one report) or test each warden separately.

    Returns:
        List of ``(dep, half_width)``, one per warden, or a single entry when colluding.
    """
    H = gains[:, None] * steering.conj()
    N, K = W.shape
    vals, vecs = np.linalg.eigh(0.5 * (R0 + R0.conj().T))
    R0_root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    Wn = H.shape[0]
    if colluding:
        stats = colluding_stats(H, W, R0, noise, M)
        V = np.linalg.inv(stats.lambda0) - np.linalg.inv(stats.lambda1)
        V = 0.5 * (V + V.conj().T)
        tests = None
    else:
        etas = [noncolluding_stats(gains[w], steering[w], W, R0, noise) for w in range(Wn)]
        tests = [optimal_threshold(e0, e1, M) for e0, e1 in etas]
    n_out = 1 if colluding else Wn
    errors = np.zeros(n_out, dtype=np.int64)
    for hyp, index, n in _partitions(trials):
        rng = _partition_rng(seed, hyp, index)
        x = _complex_normal(rng, (n, M, N)) @ R0_root.T
        if hyp:
            x = x + _complex_normal(rng, (n, M, K)) @ W.T
        y = x @ H.T + np.sqrt(noise) * _complex_normal(rng, (n, M, Wn))
        if colluding:
            stat = np.real(np.einsum("tmi,ij,tmj->t", y.conj(), V, y))
            errors[0] += int(np.sum((stat > stats.threshold) != bool(hyp)))
        else:
            energy = np.sum(np.abs(y) ** 2, axis=1)
            for w in range(Wn):
                errors[w] += int(np.sum((energy[:, w] > tests[w]) != bool(hyp)))
    return [_dep_from_errors(int(e), trials) for e in errors]
