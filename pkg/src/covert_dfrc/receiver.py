"""Receive filters and receive antenna placement.

Filters maximize each radar SINR as a generalized Rayleigh quotient. The
receive positions maximize the minimum radar SINR with a Dinkelbach loop
whose subproblems use concave quadratic minorants of ``num - rho * den``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .beamforming import DesignState, radar_sinr, radar_terms
from .channel import Scenario, apv_violation, repair_apv
from .conic import AffExpr, ConicProblem
from .numerics import hermitize
from .placement import hessian_bound, steering_form_value_grad


def canonical_phase(v: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """Rotate ``v`` so that its first entry above ``tol * max|v|`` is real and positive."""
    mags = np.abs(v)
    if mags.max() == 0:
        return v
    idx = int(np.argmax(mags > tol * mags.max()))
    return v * np.exp(-1j * np.angle(v[idx]))


def generalized_principal(A: np.ndarray, B: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest ``lambda`` and unit vector ``u`` with ``A u = lambda B u`` (``B`` positive definite)."""
    L = np.linalg.cholesky(hermitize(B))
    Y = solve_triangular(L, A, lower=True)
    C = solve_triangular(L, Y.conj().T, lower=True).conj().T
    vals, vecs = np.linalg.eigh(hermitize(C))
    u = solve_triangular(L.conj().T, vecs[:, -1], lower=False)
    u = canonical_phase(u / np.linalg.norm(u))
    return float(vals[-1]), u


def filter_matrices(scn: Scenario, state: DesignState, w: int, hyp: int, r=None):
    """Signal and interference-plus-noise matrices of warden ``w`` under hypothesis ``hyp``."""
    r = state.r if r is None else r
    Ar = scn.warden_steering(r)
    p = radar_terms(scn, state.covariance(hyp), state.t)
    weights = scn.channels.warden_echo * p
    N = r.size
    signal = weights[w] * np.outer(Ar[w], Ar[w].conj())
    interf = scn.config.radar_noise * np.eye(N, dtype=complex)
    for c in range(Ar.shape[0]):
        if c != w:
            interf = interf + weights[c] * np.outer(Ar[c], Ar[c].conj())
    return signal, interf


def update_filters(scn: Scenario, state: DesignState) -> np.ndarray:
    """SINR-maximizing unit-norm filters ``U[i, w]`` for the current ``t``, ``r`` and covariances."""
    U = np.empty_like(state.U)
    for i in (0, 1):
        for w in range(U.shape[1]):
            S, B = filter_matrices(scn, state, w, i)
            _, U[i, w] = generalized_principal(S, B)
    return U


# ------------------------------------------------------------------ Dinkelbach


@dataclass
class DinkelbachResult:
    """Outcome of the receive placement loop.

    ``mu_trace`` lists the minimum radar SINR after every iteration, starting
    from the input positions.
    """

    r: np.ndarray
    mu_trace: list = field(default_factory=list)
    iterations: int = 0
    reason: str = ""


def _sinr_forms(scn: Scenario, state: DesignState, r: np.ndarray, rho_param: float | np.ndarray):
    """Values, gradients and Hessian bounds of ``num - rho * den`` in ``r``, plus ``den``.

    ``rho_param`` is a scalar or a ``(2, W)`` array of ratios.
    """
    cfg = scn.config
    Wn, N = cfg.num_wardens, r.size
    rho_arr = np.broadcast_to(np.asarray(rho_param, dtype=float), (2, Wn))
    echo = scn.channels.warden_echo
    vals = np.zeros((2, Wn))
    grads = np.zeros((2, Wn, N))
    deltas = np.zeros((2, Wn))
    dens = np.zeros((2, Wn))
    for i in (0, 1):
        p = radar_terms(scn, state.covariance(i), state.t)
        for w in range(Wn):
            u = state.U[i, w]
            Q = np.outer(u, u.conj())
            forms = [steering_form_value_grad(r, phi, Q, cfg.wavelength) for phi in cfg.warden_angles]
            coef = echo * p
            num = coef[w] * forms[w][0]
            gnum = coef[w] * forms[w][1]
            den = cfg.radar_noise * float(np.real(np.vdot(u, u)))
            gden = np.zeros(N)
            for c in range(Wn):
                if c != w:
                    den += coef[c] * forms[c][0]
                    gden += coef[c] * forms[c][1]
            rho_wi = rho_arr[i, w]
            vals[i, w] = num - rho_wi * den
            grads[i, w] = gnum - rho_wi * gden
            mass = coef[w] + rho_wi * (coef.sum() - coef[w])
            deltas[i, w] = hessian_bound(N, cfg.wavelength, float(np.max(np.abs(Q))) * mass)
            dens[i, w] = den
    return vals, grads, deltas, dens


def _add_region(prob: ConicProblem, x: AffExpr, N: int, cfg) -> None:
    prob.add_ge(x[0], 0.0)
    prob.add_le(x[N - 1], cfg.region_length)
    if N > 1:
        D = np.zeros((N - 1, N))
        D[np.arange(N - 1), np.arange(N - 1)] = -1.0
        D[np.arange(N - 1), np.arange(1, N)] = 1.0
        prob.add_ge(x.lmul(D), cfg.min_spacing)


def _dinkelbach_step(scn: Scenario, state: DesignState, r0: np.ndarray, rho_param: float):
    """Maximize ``mu`` subject to normalized minorants ``>= mu`` and threshold preservation."""
    cfg = scn.config
    N = r0.size
    vals, grads, deltas, dens = _sinr_forms(scn, state, r0, rho_param)
    gam = np.broadcast_to(np.asarray(cfg.radar_sinr, dtype=float), vals.shape)
    sinr = radar_sinr(scn, state.copy_with(r=r0))
    keep_vals, keep_grads, keep_deltas, _ = _sinr_forms(scn, state, r0, gam)

    prob = ConicProblem()
    x = prob.variable(N)
    mu = prob.variable(1)
    _add_region(prob, x, N, cfg)
    for i in (0, 1):
        for w in range(vals.shape[1]):
            s = 1.0 / dens[i, w]
            g = grads[i, w] * s
            lin = AffExpr(x.cols, g[None, :], [vals[i, w] * s - g @ r0]) - mu
            prob.add_sum_squares_le((x - r0) * np.sqrt(deltas[i, w] * s / 2), lin)
            if sinr[i, w] >= gam[i, w]:
                g = keep_grads[i, w] * s
                lin = AffExpr(x.cols, g[None, :], [keep_vals[i, w] * s - g @ r0])
                prob.add_sum_squares_le((x - r0) * np.sqrt(keep_deltas[i, w] * s / 2), lin)
    prob.maximize(mu)
    sol = prob.solve()
    if not sol.ok:
        return None, sol.status
    return sol.value(x), sol.status


def optimize_rx_apv(
    scn: Scenario, state: DesignState, max_iters: int = 15, tol: float = 1e-4
) -> DinkelbachResult:
    """Increase the minimum radar SINR over the receive positions (filters and ``t`` fixed).

    Iterates stop when the relative gain of the minimum SINR is at most
    ``tol``. Candidates that lower the exact minimum SINR, or push a radar
    SINR that met its threshold below it, are rejected and end the loop.
    """
    cfg = scn.config
    gam = np.asarray(cfg.radar_sinr, dtype=float)
    r = state.r.copy()
    sinr = radar_sinr(scn, state)
    rho_param = float(sinr.min())
    result = DinkelbachResult(r, [rho_param], 0, "max-iterations")
    for it in range(1, max_iters + 1):
        cand, status = _dinkelbach_step(scn, state, r, rho_param)
        result.iterations = it
        if cand is None:
            result.reason = f"stall:{status}"
            break
        cand = repair_apv(cand, cfg.region_length, cfg.min_spacing)
        new = radar_sinr(scn, state.copy_with(r=cand))
        met = sinr >= gam[None, :]
        if (
            apv_violation(cand, cfg.region_length, cfg.min_spacing) > 1e-12
            or new.min() < rho_param
            or np.any(new[met] < gam[None, :].repeat(2, 0)[met])
        ):
            result.reason = "stall:rejected"
            break
        gain = float(new.min()) - rho_param
        r, sinr, rho_param = cand, new, float(new.min())
        result.r = r
        result.mu_trace.append(rho_param)
        if gain <= tol * abs(rho_param - gain):
            result.reason = "converged"
            break
    return result
