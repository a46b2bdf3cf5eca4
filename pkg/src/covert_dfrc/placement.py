"""Transmit antenna placement by projected gradient ascent with momentum.

Each step moves along the gradient of the quadratic-transform objective and
projects onto a convex inner approximation of the feasible set: radar SINR
and covertness constraints are replaced by quadratic bounds built from the
gradient and a global Hessian bound at the current positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import colluding as coll
from .beamforming import (
    COLLUDING,
    NONCOLLUDING,
    DesignState,
    f2_value,
    kappas,
    radar_coupling,
)
from .channel import Scenario, apv_violation, repair_apv
from .conic import AffExpr, ConicProblem

FEASIBILITY_RTOL = 1e-7


@dataclass
class PgdOptions:
    """Settings of the projected gradient loop.

    ``max_move`` caps the displacement of any antenna in a gradient step
    (meters, defaults to a quarter wavelength).
    """

    max_iters: int = 30
    step_init: float = 1.0
    step_shrink: float = 0.5
    armijo: float = 1e-4
    tol: float = 1e-5
    momentum_init: float = 0.1
    max_move: float | None = None
    trust_halvings: int = 10
    max_backtracks: int = 40


@dataclass
class CurvatureBounds:
    """Global Hessian-norm bounds used by the quadratic approximations."""

    radar: np.ndarray
    covert: np.ndarray


# ------------------------------------------------------------------ gradients


def quadform_value_grad(t, path_angles, weights, R, wavelength):
    """``F(t) = a^H G(t) R G(t)^H a`` and its gradient, by explicit phase expansion.

    ``G(t)`` is the ``(L, N)`` field response matrix and ``a = Sigma^H 1``
    (``weights``). The value and gradient are assembled from the magnitudes
    ``mu = |R_nm| |a_l| |a_p|`` and phases
    ``kappa = angle R_nm - angle a_l + k t_n cos psi_l + angle a_p - k t_m cos psi_p``.
    """
    t = np.asarray(t, dtype=float)
    k = 2 * np.pi / wavelength
    cos_psi = np.cos(np.asarray(path_angles))
    a = np.asarray(weights)
    N, L = t.size, a.size
    phase = k * np.outer(t, cos_psi)
    kappa = (
        np.angle(R)[:, :, None, None]
        - np.angle(a)[None, None, :, None]
        + phase[:, None, :, None]
        + np.angle(a)[None, None, None, :]
        - phase[None, :, None, :]
    )
    mu = np.abs(R)[:, :, None, None] * np.abs(a)[None, None, :, None] * np.abs(a)[None, None, None, :]
    cos_k = mu * np.cos(kappa)
    sin_k = mu * np.sin(kappa)

    n_idx = np.arange(N)
    upper_nm = np.triu(np.ones((N, N)), 1)
    upper_lp = np.triu(np.ones((L, L)), 1)
    diag = np.real(np.diag(R))
    value = float(np.sum(diag) * np.sum(np.abs(a) ** 2))
    value += 2 * float(np.sum(cos_k[n_idx, n_idx] * upper_lp))
    value += 2 * float(np.sum(cos_k * upper_nm[:, :, None, None]))

    c = 4 * np.pi / wavelength
    same = sin_k[n_idx, n_idx] * upper_lp * (cos_psi[:, None] - cos_psi[None, :])
    grad = -c * same.sum(axis=(1, 2))
    grad -= c * np.einsum("nmlp,nm,l->n", sin_k, upper_nm, cos_psi)
    grad += c * np.einsum("mnlp,mn,p->n", sin_k, upper_nm, cos_psi)
    return value, grad


def grad_F2_t(scn: Scenario, state: DesignState, t=None):
    """Quadratic-transform objective ``F2`` and its gradient in the transmit positions."""
    t = state.t if t is None else np.asarray(t, dtype=float)
    ch = scn.channels
    lam = scn.config.wavelength
    RX = state.covariance(1)
    w = 1 + state.rho
    grad = np.zeros(t.size)
    for k in range(ch.num_users):
        a = ch.path_gains[k].conj()
        wk = state.W[:, k]
        Fkk, gkk = quadform_value_grad(t, ch.path_angles[k], a, np.outer(wk, wk.conj()), lam)
        _, gkx = quadform_value_grad(t, ch.path_angles[k], a, RX, lam)
        if Fkk > 0:
            grad += w[k] * state.upsilon[k] * gkk / np.sqrt(Fkk)
        grad -= w[k] * state.upsilon[k] ** 2 * gkx
    value = f2_value(scn, state.W, state.R0, t, state.rho, state.upsilon)
    return value, grad


def steering_form_value_grad(positions, angle, Q, wavelength):
    """``V = a^H Q a`` with ``a`` the steering vector at ``angle``, and ``dV/dp``.

    Uses ``V = sum_n Q_nn + 2 sum_{n<j} |Q_nj| cos(beta_nj)`` with
    ``beta_nj = k cos(angle) (p_j - p_n) + angle(Q_nj)``.
    """
    p = np.asarray(positions, dtype=float)
    kc = 2 * np.pi / wavelength * np.cos(angle)
    beta = kc * (p[None, :] - p[:, None]) + np.angle(Q)
    upper = np.triu(np.ones_like(beta), 1)
    mag = np.abs(Q) * upper
    value = float(np.sum(np.real(np.diag(Q))) + 2 * np.sum(mag * np.cos(beta)))
    s = mag * np.sin(beta)
    grad = (4 * np.pi / wavelength) * np.cos(angle) * (s.sum(axis=1) - s.sum(axis=0))
    return value, grad


def hessian_bound(N: int, wavelength: float, max_modulus: float) -> float:
    """Spectral-norm bound ``8 N^2 pi^2 / lambda^2 * max|Q|`` for a steering quadratic form."""
    return 8 * N**2 * np.pi**2 / wavelength**2 * max_modulus


def grad_radar_sinr_t(scn: Scenario, state: DesignState, t=None):
    """Radar SINR margins ``num - Gamma * den`` as functions of ``t``.

    Returns:
        ``(values, grads, deltas)`` of shapes ``(2, W)``, ``(2, W, N)``, ``(2, W)``.
    """
    t = state.t if t is None else np.asarray(t, dtype=float)
    cfg = scn.config
    Wn, N = cfg.num_wardens, t.size
    gam = np.asarray(cfg.radar_sinr)
    E = radar_coupling(scn, state.r, state.U)
    noise = cfg.radar_noise * np.sum(np.abs(state.U) ** 2, axis=2)
    values = np.zeros((2, Wn))
    grads = np.zeros((2, Wn, N))
    deltas = np.zeros((2, Wn))
    for i in (0, 1):
        R = state.covariance(i)
        forms = [steering_form_value_grad(t, phi, R, cfg.wavelength) for phi in cfg.warden_angles]
        rmax = float(np.max(np.abs(R)))
        for w in range(Wn):
            coef = -gam[w] * E[i, w]
            coef[w] = E[i, w, w]
            values[i, w] = sum(coef[c] * forms[c][0] for c in range(Wn)) - gam[w] * noise[i, w]
            grads[i, w] = sum(coef[c] * forms[c][1] for c in range(Wn))
            deltas[i, w] = hessian_bound(N, cfg.wavelength, rmax * float(np.sum(np.abs(coef))))
    return values, grads, deltas


def grad_covert_t(scn: Scenario, state: DesignState, t=None):
    """Non-colluding covertness functions ``G_w(t) <= 0`` with gradients and Hessian bounds."""
    t = state.t if t is None else np.asarray(t, dtype=float)
    cfg = scn.config
    kap = kappas(scn)
    gain = np.abs(scn.channels.warden_gain) ** 2
    RX = state.covariance(1)
    values, grads, deltas = [], [], []
    for w, phi in enumerate(cfg.warden_angles):
        Q = gain[w] * (RX - kap[w] * state.R0)
        v, g = steering_form_value_grad(t, phi, Q, cfg.wavelength)
        values.append(v + (1 - kap[w]) * cfg.warden_noise)
        grads.append(g)
        deltas.append(hessian_bound(t.size, cfg.wavelength, float(np.max(np.abs(Q)))))
    return np.array(values), np.array(grads), np.array(deltas)


def colluding_covert_t(scn: Scenario, state: DesignState, aux: coll.MmseAux, t=None):
    """Colluding surrogate ``R(t)`` with gradient and Hessian bound ``omega``."""
    t = state.t if t is None else np.asarray(t, dtype=float)
    cfg = scn.config
    RE = state.RE
    return coll.grad_R_t(
        t, cfg.warden_angles, cfg.wavelength, scn.channels.warden_gain, state.W, RE, aux, cfg.warden_noise
    )


# ------------------------------------------------------------------ projection


@dataclass
class _Anchor:
    """Quadratic constraint data ``delta/2 ||x - t0||^2 <= value - floor + grad^T (x - t0)``."""

    t0: np.ndarray
    rows: list = field(default_factory=list)

    def add(self, value: float, grad: np.ndarray, delta: float, floor: float):
        self.rows.append((float(value), np.asarray(grad, dtype=float), float(delta), float(floor)))


def _anchor_constraints(scn, state, mode, aux) -> tuple[_Anchor, callable]:
    """Approximation data at ``state.t`` and an exact feasibility check for candidates."""
    anchor = _Anchor(state.t.copy())
    vals, grads, deltas = grad_radar_sinr_t(scn, state)
    floors_r = np.minimum(0.0, vals)
    for i in (0, 1):
        for w in range(vals.shape[1]):
            anchor.add(vals[i, w], grads[i, w], deltas[i, w], floors_r[i, w])
    bound = None
    if mode == NONCOLLUDING:
        gv, gg, gd = grad_covert_t(scn, state)
        ceil = np.maximum(0.0, gv)
        for w in range(gv.size):
            # -G_w(t) >= -ceil_w, majorized by the quadratic upper bound on G_w.
            anchor.add(-gv[w], -gg[w], gd[w], -ceil[w])
    elif mode == COLLUDING:
        cfg = scn.config
        bound = coll.covert_bound(cfg.covertness_colluding, cfg.channel_uses)
        rv, rg, om = colluding_covert_t(scn, state, aux)
        anchor.add(rv, rg, om, min(bound, rv))

    def feasible(t: np.ndarray) -> bool:
        cfg = scn.config
        if apv_violation(t, cfg.region_length, cfg.min_spacing) > 1e-12:
            return False
        v, _, _ = grad_radar_sinr_t(scn, state, t)
        scale = np.abs(vals) + 1e-300
        if np.any(v < floors_r - FEASIBILITY_RTOL * scale):
            return False
        if mode == NONCOLLUDING:
            g, _, _ = grad_covert_t(scn, state, t)
            if np.any(g > ceil + FEASIBILITY_RTOL * np.abs(gv)):
                return False
        elif mode == COLLUDING:
            r, _, _ = colluding_covert_t(scn, state, aux, t)
            if r < min(bound, rv) - 1e-9:
                return False
        return True

    return anchor, feasible


def project_apv(scn: Scenario, m: np.ndarray, anchor: _Anchor) -> np.ndarray | None:
    """Closest point to ``m`` in the convex inner approximation around ``anchor.t0``.

    Returns ``None`` when the conic solve does not reach optimality.
    """
    cfg = scn.config
    N = m.size
    prob = ConicProblem()
    x = prob.variable(N)
    tau = prob.variable(1)
    # The norm (not its square) keeps the minimizer accurate to the solver tolerance.
    prob.add_soc(tau, x - m)
    prob.add_ge(x[0], 0.0)
    prob.add_le(x[N - 1], cfg.region_length)
    if N > 1:
        D = np.zeros((N - 1, N))
        D[np.arange(N - 1), np.arange(N - 1)] = -1.0
        D[np.arange(N - 1), np.arange(1, N)] = 1.0
        prob.add_ge(x.lmul(D), cfg.min_spacing)
    t0 = anchor.t0
    for value, grad, delta, floor in anchor.rows:
        lin = AffExpr(x.cols, grad[None, :], [value - floor - grad @ t0])
        if delta > 0:
            prob.add_sum_squares_le((x - t0) * np.sqrt(delta / 2), lin)
        else:
            prob.add_ge(lin, 0.0)
    prob.minimize(tau)
    sol = prob.solve()
    if not sol.ok:
        return None
    return sol.value(x)


def project_with_trust(scn, m, anchor, feasible, opts: PgdOptions):
    """Project ``m``; on failure halve the step toward the anchor (at most ``trust_halvings`` times)."""
    cfg = scn.config
    t0 = anchor.t0
    for _ in range(opts.trust_halvings + 1):
        cand = project_apv(scn, m, anchor)
        if cand is not None:
            cand = repair_apv(cand, cfg.region_length, cfg.min_spacing)
            if feasible(cand):
                return cand
        m = t0 + 0.5 * (m - t0)
    return t0.copy()


# ------------------------------------------------------------------ PGD loop


@dataclass
class PgdResult:
    t: np.ndarray
    objective: float
    trace: list
    iterations: int
    reason: str


def optimize_tx_apv(
    scn: Scenario,
    state: DesignState,
    mode: str = NONCOLLUDING,
    aux: coll.MmseAux | None = None,
    opts: PgdOptions | None = None,
) -> PgdResult:
    """Maximize ``F2`` over the transmit positions with Nesterov-accelerated projected ascent.

    ``mode`` selects the covertness constraint: ``"noncolluding"``,
    ``"colluding"`` (surrogate with ``aux``) or ``"none"``. The best feasible
    iterate is returned, so the objective never decreases.
    """
    opts = opts or PgdOptions()
    cfg = scn.config
    max_move = opts.max_move if opts.max_move is not None else cfg.wavelength / 4
    work = state.copy()
    t_prev = state.t.copy()
    z = t_prev.copy()
    best_t, best_f = t_prev.copy(), grad_F2_t(scn, work, t_prev)[0]
    trace = [best_f]
    alpha = opts.momentum_init
    reason = "max-iterations"
    it = 0
    for it in range(1, opts.max_iters + 1):
        fz, g = grad_F2_t(scn, work, z)
        gmax = float(np.max(np.abs(g)))
        if gmax == 0.0:
            reason = "zero-gradient"
            break
        eta = opts.step_init
        while eta * gmax > max_move:
            eta *= opts.step_shrink
        gg = float(g @ g)
        for _ in range(opts.max_backtracks):
            if f2_value(scn, work.W, work.R0, z + eta * g, work.rho, work.upsilon) >= fz + opts.armijo * eta * gg:
                break
            eta *= opts.step_shrink
        m = z + eta * g

        work.t = t_prev
        anchor, feasible = _anchor_constraints(scn, work, mode, aux)
        t_new = project_with_trust(scn, m, anchor, feasible, opts)
        f_new = f2_value(scn, work.W, work.R0, t_new, work.rho, work.upsilon)
        if f_new > best_f:
            best_t, best_f = t_new.copy(), f_new
        trace.append(best_f)

        alpha_next = (1 + np.sqrt(1 + 4 * alpha**2)) / 2
        zeta = (alpha - 1) / alpha_next if alpha > 1 else 0.0
        alpha = alpha_next
        step = float(np.linalg.norm(t_new - t_prev))
        z = t_new + zeta * (t_new - t_prev)
        t_prev = t_new
        if step <= opts.tol * cfg.region_length:
            reason = "converged"
            break
    return PgdResult(best_t, best_f, trace, it, reason)
