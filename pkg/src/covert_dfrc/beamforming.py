"""Transmit covariance design: design state, performance metrics and the SDR block.

With fractional-programming auxiliaries ``rho`` (SINRs) and ``upsilon``
(quadratic-transform weights) fixed, the beamformers and radar covariance are
found from a semidefinite relaxation over ``R_k = w_k w_k^H`` and ``R_0``, and
a rank-one solution is recovered by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import colluding as coll
from .channel import Scenario
from .conic import ConicProblem, ConicSolution, HermitianVariable, vstack
from .detection import (
    colluding_min_dep,
    colluding_stats,
    kappa_solve,
    kl_colluding,
    kl_noncolluding,
    noncolluding_min_dep,
)
from .numerics import hermitize, logdet_pd, psd_floor, psd_sqrt

NONCOLLUDING = "noncolluding"
COLLUDING = "colluding"
MODES = (NONCOLLUDING, COLLUDING)
# Relative slack accepted when re-checking constraints of a solver output.
CHECK_RTOL = 1e-7
RANK_ONE_RTOL = 1e-12


@dataclass
class DesignState:
    """All design variables of one BCD iterate.

    Attributes:
        W: ``(N, K)`` covert beamformers.
        R0: ``(N, N)`` dedicated radar covariance.
        t, r: Transmit and receive antenna positions.
        U: ``(2, W, N)`` receive filters, ``U[i, w]`` used under hypothesis ``i``.
        rho, upsilon: Fractional-programming auxiliaries, one per user.
        RE: Hermitian square root of ``R0`` (colluding mode only).
        accepted: Whether a beamforming solve has succeeded from this lineage.
    """

    W: np.ndarray
    R0: np.ndarray
    t: np.ndarray
    r: np.ndarray
    U: np.ndarray
    rho: np.ndarray
    upsilon: np.ndarray
    RE: np.ndarray | None = None
    accepted: bool = False

    def copy(self) -> "DesignState":
        return DesignState(
            self.W.copy(), self.R0.copy(), self.t.copy(), self.r.copy(), self.U.copy(),
            self.rho.copy(), self.upsilon.copy(),
            None if self.RE is None else self.RE.copy(), self.accepted,
        )

    def copy_with(self, **changes) -> "DesignState":
        """Copy with some fields replaced (arrays are copied)."""
        out = self.copy()
        for name, value in changes.items():
            setattr(out, name, np.array(value, copy=True))
        return out

    def covariance(self, hyp: int) -> np.ndarray:
        """Transmit covariance ``R_X^hyp``."""
        if hyp == 0:
            return self.R0
        return self.W @ self.W.conj().T + self.R0


@lru_cache(maxsize=None)
def _kappa(eps: float, M: int) -> float:
    return kappa_solve(eps, M)


def kappas(scn: Scenario) -> np.ndarray:
    """Per-warden covertness ratios ``kappa_w``."""
    cfg = scn.config
    return np.array([_kappa(float(e), cfg.channel_uses) for e in cfg.covertness])


# ---------------------------------------------------------------- user side


def user_terms(scn: Scenario, W: np.ndarray, R0: np.ndarray, t: np.ndarray):
    """``Q[k, j] = |h_k^H w_j|^2`` and ``q0[k] = h_k^H R0 h_k``."""
    H = scn.user_rows(t)
    Q = np.abs(H @ W) ** 2
    q0 = np.real(np.einsum("kn,nm,km->k", H, R0, H.conj()))
    return Q, q0


def user_sinr(scn: Scenario, state: DesignState, t: np.ndarray | None = None) -> np.ndarray:
    Q, q0 = user_terms(scn, state.W, state.R0, state.t if t is None else t)
    signal = np.diag(Q)
    return signal / (Q.sum(axis=1) - signal + q0 + scn.config.user_noise)


def sum_rate(scn: Scenario, state: DesignState) -> float:
    """Covert sum rate in bits/s/Hz."""
    return float(np.sum(np.log2(1 + user_sinr(scn, state))))


def update_rho(scn: Scenario, state: DesignState) -> np.ndarray:
    """Optimal ``rho``: the current user SINRs."""
    return user_sinr(scn, state)


def update_upsilon(scn: Scenario, state: DesignState) -> np.ndarray:
    """Optimal quadratic-transform weights ``sqrt|h^H w_k|^2 / (h^H R_X^1 h + sigma^2)``."""
    Q, q0 = user_terms(scn, state.W, state.R0, state.t)
    return np.sqrt(np.diag(Q)) / (Q.sum(axis=1) + q0 + scn.config.user_noise)


def f2_value(scn: Scenario, W, R0, t, rho, upsilon) -> float:
    """Quadratic-transform objective (nats); equals the sum rate in nats at optimal auxiliaries."""
    Q, q0 = user_terms(scn, W, R0, t)
    total = Q.sum(axis=1) + q0 + scn.config.user_noise
    w = 1 + rho
    return float(
        np.sum(np.log1p(rho) - rho + 2 * w * upsilon * np.sqrt(np.diag(Q)) - w * upsilon**2 * total)
    )


def state_f2(scn: Scenario, state: DesignState) -> float:
    return f2_value(scn, state.W, state.R0, state.t, state.rho, state.upsilon)


# ---------------------------------------------------------------- radar side


def radar_coupling(scn: Scenario, r: np.ndarray, U: np.ndarray) -> np.ndarray:
    """``E[i, w, c] = |alpha_c|^2 |a_r(phi_c, r)^H u_{w,i}|^2``."""
    Ar = scn.warden_steering(r)
    gains = np.abs(np.einsum("cn,iwn->iwc", Ar.conj(), U)) ** 2
    return gains * scn.channels.warden_echo[None, None, :]


def radar_terms(scn: Scenario, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Transmit beampattern ``a_t(phi_c, t)^H R a_t(phi_c, t)`` for every warden."""
    At = scn.warden_steering(t)
    return np.real(np.einsum("cn,nm,cm->c", At.conj(), R, At))


def radar_sinr_parts(scn: Scenario, state: DesignState, t=None, r=None, U=None):
    """Numerators and denominators of the radar SINRs, each of shape ``(2, W)``."""
    t = state.t if t is None else t
    r = state.r if r is None else r
    U = state.U if U is None else U
    E = radar_coupling(scn, r, U)
    noise = scn.config.radar_noise * np.sum(np.abs(U) ** 2, axis=2)
    num = np.zeros(E.shape[:2])
    den = np.zeros(E.shape[:2])
    for i in (0, 1):
        p = radar_terms(scn, state.covariance(i), t)
        contrib = E[i] * p[None, :]
        num[i] = np.diag(contrib)
        den[i] = contrib.sum(axis=1) - num[i] + noise[i]
    return num, den


def radar_sinr(scn: Scenario, state: DesignState, t=None, r=None, U=None) -> np.ndarray:
    """Radar SINR ``Gamma_{w,i}`` arranged as ``(2, W)``."""
    num, den = radar_sinr_parts(scn, state, t, r, U)
    return num / den


# ---------------------------------------------------------------- covertness


def warden_powers(scn: Scenario, state: DesignState, t=None):
    """Received powers ``(eta0, eta1)`` at each warden, arrays of shape ``(W,)``."""
    t = state.t if t is None else t
    g = np.abs(scn.channels.warden_gain) ** 2
    s = scn.config.warden_noise
    eta0 = g * radar_terms(scn, state.R0, t) + s
    eta1 = g * radar_terms(scn, state.covariance(1), t) + s
    return eta0, eta1


def covert_margins(scn: Scenario, state: DesignState, mode: str) -> np.ndarray:
    """Non-negative entries mean the covertness constraint holds.

    Non-colluding: ``(kappa_w eta0 - eta1) / eta0`` per warden. Colluding: the
    single margin ``log_ratio + 2 eps^2 / M`` (nats).
    """
    if mode == NONCOLLUDING:
        eta0, eta1 = warden_powers(scn, state)
        return (kappas(scn) * eta0 - eta1) / eta0
    cfg = scn.config
    H = scn.fused_channel(state.t)
    val = coll.exact_log_ratio(H, state.W, state.R0, cfg.warden_noise)
    return np.array([val - coll.covert_bound(cfg.covertness_colluding, cfg.channel_uses)])


@dataclass
class MetricSet:
    """Performance summary of a design state."""

    sum_rate: float
    user_sinr: np.ndarray
    radar_sinr: np.ndarray
    power: float
    kl: np.ndarray
    dep: np.ndarray
    covert_margin: np.ndarray
    details: dict = field(default_factory=dict)

    @property
    def min_radar_sinr(self) -> float:
        return float(np.min(self.radar_sinr))

    @property
    def min_dep(self) -> float:
        return float(np.min(self.dep))


def evaluate_metrics(scn: Scenario, state: DesignState, mode: str = NONCOLLUDING) -> MetricSet:
    """Rates, radar SINRs, transmit power and closed-form detection figures."""
    cfg = scn.config
    M = cfg.channel_uses
    if mode == NONCOLLUDING:
        eta0, eta1 = warden_powers(scn, state)
        kl = np.array([kl_noncolluding(a, b, M) for a, b in zip(eta0, eta1)])
        dep = np.array([noncolluding_min_dep(a, max(a, b), M) for a, b in zip(eta0, eta1)])
    else:
        stats = colluding_stats(scn.fused_channel(state.t), state.W, state.R0, cfg.warden_noise, M)
        kl = np.array([kl_colluding(stats, M)])
        dep = np.array([colluding_min_dep(stats, M)])
    power = float(np.real(np.trace(state.covariance(1))))
    return MetricSet(
        sum_rate(scn, state), user_sinr(scn, state), radar_sinr(scn, state), power,
        kl, dep, covert_margins(scn, state, mode),
    )


# ---------------------------------------------------------------- SDR block


@dataclass
class SdrModel:
    """A built relaxation with handles to its normalized covariance blocks.

    ``blocks[0]`` is ``R0 / Pt`` (non-colluding) or ``R_E / sqrt(Pt)`` (colluding);
    ``blocks[k]`` is ``R_k / Pt`` for users ``k = 1..K``.
    """

    problem: ConicProblem
    blocks: list[HermitianVariable]
    power: float
    mode: str
    objective_offset: float = 0.0

    def extract(self, sol: ConicSolution) -> list[np.ndarray]:
        """Un-normalized relaxed covariances ``[R0, R1, ..., RK]``."""
        mats = [hermitize(sol.value(b)) for b in self.blocks]
        if self.mode == COLLUDING:
            RE = psd_floor(mats[0]) * np.sqrt(self.power)
            first = hermitize(RE @ RE)
        else:
            first = psd_floor(mats[0]) * self.power
        return [first] + [psd_floor(m) * self.power for m in mats[1:]]


def _objective_parts(scn: Scenario, state: DesignState):
    """Normalized user directions and objective weights of the relaxed problem."""
    cfg = scn.config
    H = scn.user_rows(state.t)
    norms = np.linalg.norm(H, axis=1)
    hhat = H.conj() / norms[:, None]
    g = cfg.transmit_power * norms**2
    w = 1 + state.rho
    c = 2 * w * state.upsilon * np.sqrt(g)
    d = w * state.upsilon**2 * g
    offset = float(np.sum(np.log1p(state.rho) - state.rho - w * state.upsilon**2 * cfg.user_noise))
    return hhat, c, d, offset


def _radar_rows(scn: Scenario, state: DesignState):
    """Per ``(i, w)``: coupling weights ``coef[c]`` and normalized right-hand side."""
    cfg = scn.config
    E = radar_coupling(scn, state.r, state.U)
    gam = np.asarray(cfg.radar_sinr)
    rows = {}
    for i in (0, 1):
        for w in range(cfg.num_wardens):
            coef = -gam[w] * E[i, w].copy()
            coef[w] = E[i, w, w]
            rhs = cfg.radar_noise * gam[w] * float(np.sum(np.abs(state.U[i, w]) ** 2)) / cfg.transmit_power
            rows[i, w] = (coef, rhs)
    return rows


def _radar_slack(scn, state, coef, rhs, hyp) -> float:
    p = radar_terms(scn, state.covariance(hyp), state.t) / scn.config.transmit_power
    return float(coef @ p - rhs)


def build_sdr_noncolluding(scn: Scenario, state: DesignState, covert: bool = True, floors: bool = True) -> SdrModel:
    """Relaxed beamforming problem against non-colluding wardens.

    Maximizes ``sum_k c_k sqrt(h_k^H R_k h_k) - d_k h_k^H R_X^1 h_k`` (exact
    square-root hypograph via rotated cones) subject to radar SINR constraints
    under both hypotheses, per-warden covertness and total power. With
    ``floors``, an H0 radar constraint already violated at ``state`` is relaxed
    to its current value so that ``state`` stays feasible.
    """
    cfg = scn.config
    Pt = cfg.transmit_power
    N, K = state.W.shape
    hhat, c, d, offset = _objective_parts(scn, state)
    At = scn.warden_steering(state.t)

    prob = ConicProblem()
    R = [prob.hermitian_psd(N) for _ in range(K + 1)]
    s = prob.variable(K)
    obj = []
    for k in range(K):
        prob.add_sum_squares_le(s[k], R[k + 1].quad(hhat[k]))
        obj.append(s[k] * c[k])
        obj.extend(Rj.quad(hhat[k]) * (-d[k]) for Rj in R)
    prob.maximize(vstack(obj).sum())

    pattern = [[Rj.quad(At[w]) for Rj in R] for w in range(cfg.num_wardens)]
    for (i, w), (coef, rhs) in _radar_rows(scn, state).items():
        used = slice(0, 1) if i == 0 else slice(0, K + 1)
        expr = vstack([pattern[c_][j] * coef[c_] for c_ in range(cfg.num_wardens) for j in range(K + 1)[used]]).sum()
        floor = 0.0
        if floors and i == 0 and state.accepted:
            floor = min(0.0, _radar_slack(scn, state, coef, rhs, 0))
        prob.add_ge(expr, rhs + floor)

    if covert:
        kap = kappas(scn)
        gain = np.abs(scn.channels.warden_gain) ** 2
        eta0, eta1 = warden_powers(scn, state)
        for w in range(cfg.num_wardens):
            expr = vstack(pattern[w]).sum() - pattern[w][0] * kap[w]
            bound = (kap[w] - 1) * cfg.warden_noise / (Pt * gain[w])
            slack = max(0.0, (eta1[w] - kap[w] * eta0[w]) / (Pt * gain[w])) if floors else 0.0
            prob.add_le(expr, bound + slack)

    prob.add_le(vstack([Rj.trace() for Rj in R]).sum(), 1.0)
    return SdrModel(prob, R, Pt, NONCOLLUDING, offset)


def build_sdr_colluding(scn: Scenario, state: DesignState, aux: coll.MmseAux, floors: bool = True) -> SdrModel:
    """Relaxed beamforming problem against colluding wardens.

    The radar covariance enters through its square root ``R_E``; the convex
    quadratic ``Tr(R_E Xi R_E)`` terms are kept exactly where they help the
    constraint and replaced by their tangent minorant where they hurt it. The
    covertness constraint is the MMSE surrogate with auxiliaries ``aux``.
    """
    cfg = scn.config
    Pt = cfg.transmit_power
    N, K = state.W.shape
    Wn = cfg.num_wardens
    root = np.sqrt(Pt)
    REl = state.RE if state.RE is not None else psd_sqrt(state.R0)
    REn = REl / root
    hhat, c, d, offset = _objective_parts(scn, state)
    At = scn.warden_steering(state.t)

    prob = ConicProblem()
    RE = prob.hermitian_psd(N)
    R = [prob.hermitian_psd(N) for _ in range(K)]
    s = prob.variable(K)
    tau = prob.variable(1)
    obj = [-tau]
    for k in range(K):
        prob.add_sum_squares_le(s[k], R[k].quad(hhat[k]))
        obj.append(s[k] * c[k])
        obj.extend(Rj.quad(hhat[k]) * (-d[k]) for Rj in R)
    prob.add_sum_squares_le(vstack([RE.matvec(hhat[k]) * np.sqrt(d[k]) for k in range(K)]), tau)
    prob.maximize(vstack(obj).sum())

    def minorant(w):
        a = At[w]
        Ra = REn @ a
        return RE.inner(2 * np.outer(a, a.conj()) @ REn) - float(np.real(Ra.conj() @ Ra))

    for (i, w), (coef, rhs) in _radar_rows(scn, state).items():
        lin = [minorant(w) * coef[w]]
        if i == 1:
            lin += [Rj.quad(At[c_]) * coef[c_] for c_ in range(Wn) for Rj in R]
        lin = vstack(lin).sum()
        floor = 0.0
        if floors and i == 0 and state.accepted:
            floor = min(0.0, _radar_slack(scn, state, coef, rhs, 0))
        others = [c_ for c_ in range(Wn) if c_ != w]
        bound = lin - (rhs + floor)
        if others:
            sq = vstack([RE.matvec(At[c_]) * np.sqrt(-coef[c_]) for c_ in others])
            prob.add_sum_squares_le(sq, bound)
        else:
            prob.add_ge(bound, 0.0)

    H = scn.fused_channel(state.t)
    noise = cfg.warden_noise
    L1 = np.linalg.cholesky(aux.P1)
    L2 = np.linalg.cholesky(aux.P2)
    quad = vstack([
        RE.affine_product(L1.conj().T @ aux.U1.conj().T @ H * root, -L1.conj().T),
        RE.affine_product(L2.conj().T @ H * np.sqrt(Pt / noise)),
    ])
    G2 = H.conj().T @ aux.P2 @ H * (Pt / noise)
    const = (
        logdet_pd(aux.P1) + N - noise * float(np.real(np.trace(aux.P1 @ aux.U1.conj().T @ aux.U1)))
        + logdet_pd(aux.P2) - float(np.real(np.trace(aux.P2))) + Wn
        - coll.covert_bound(cfg.covertness_colluding, cfg.channel_uses)
    )
    if floors:
        current = coll.evaluate_R(H, state.W, REl, aux, noise) - coll.covert_bound(
            cfg.covertness_colluding, cfg.channel_uses
        )
        const -= min(0.0, current)
    # Both sides are differences of terms of order P1 ~ warden SNR; scale by the
    # size of the remainder instead so the covert slack stays above solver tolerance.
    prob.add_sum_squares_le(quad, -vstack([Rj.inner(G2) for Rj in R]).sum() + const, scale=max(1.0, abs(const)))

    power = vstack([Rj.trace() for Rj in R]).sum()
    prob.add_sum_squares_le(RE.frobenius_vec(), 1.0 - power)
    return SdrModel(prob, [RE] + R, Pt, COLLUDING, offset)


def rank_one_construct(H: np.ndarray, relaxed: list[np.ndarray]):
    """Rank-one beamformers from a relaxed solution ``[R0, R1, ..., RK]``.

    ``w_k = R_k h_k / sqrt(h_k^H R_k h_k)`` and ``R0 = sum_k R_k + R0 - sum_k w_k w_k^H``,
    which keeps ``R_X^1`` and every ``h_k^H R_k h_k`` unchanged. Users whose
    relaxed gain is numerically zero get ``w_k = 0``.

    Args:
        H: ``(K, N)`` user rows ``h_k^H``.
        relaxed: Relaxed covariances.

    Returns:
        ``(W, R0)``.
    """
    K, N = H.shape
    W = np.zeros((N, K), dtype=complex)
    total = sum(relaxed)
    for k in range(K):
        Rk = relaxed[k + 1]
        h = H[k].conj()
        q = float(np.real(h.conj() @ Rk @ h))
        scale = float(np.real(np.trace(Rk))) * float(np.real(h.conj() @ h))
        if q > RANK_ONE_RTOL * max(scale, 1e-300):
            W[:, k] = Rk @ h / np.sqrt(q)
    R0 = psd_floor(total - W @ W.conj().T)
    return W, R0


@dataclass
class BlockResult:
    """Outcome of one block update."""

    accepted: bool
    status: str
    objective_before: float
    objective_after: float
    info: dict = field(default_factory=dict)


def _fit_power(scn: Scenario, W, R0):
    """Scale down (never up) so that the total power is at most ``Pt``."""
    total = float(np.real(np.trace(W @ W.conj().T + R0)))
    Pt = scn.config.transmit_power
    if total > Pt:
        f = Pt / total
        return W * np.sqrt(f), R0 * f
    return W, R0


def update_beamformers(
    scn: Scenario, state: DesignState, mode: str, aux: coll.MmseAux | None = None, covert: bool = True
) -> tuple[DesignState, BlockResult]:
    """Solve the relaxation, recover rank-one beamformers and keep them if they improve ``F2``.

    The candidate is rejected (state unchanged) when the solver does not reach
    optimality, when a covertness, power or H1 radar constraint is violated
    beyond ``CHECK_RTOL``, or when ``F2`` would decrease after a previous
    accepted solve.
    """
    before = state_f2(scn, state)
    if mode == NONCOLLUDING:
        model = build_sdr_noncolluding(scn, state, covert=covert)
    else:
        model = build_sdr_colluding(scn, state, aux)
    sol = model.problem.solve()
    if not sol.ok:
        return state, BlockResult(False, sol.status, before, before)
    relaxed = model.extract(sol)
    W, R0 = rank_one_construct(scn.user_rows(state.t), relaxed)
    W, R0 = _fit_power(scn, W, R0)
    cand = state.copy()
    cand.W, cand.R0 = W, R0
    if mode == COLLUDING:
        cand.RE = psd_sqrt(R0)
    after = state_f2(scn, cand)
    info = {"relaxed_objective": sol.primal_objective + model.objective_offset, "gap": sol.gap}

    if covert:
        cand = restore_covertness(scn, cand, mode, _covert_floor(scn, state, mode))
        after = state_f2(scn, cand)
    gam = np.asarray(scn.config.radar_sinr)
    if np.any(radar_sinr(scn, cand)[1] < gam * (1 - CHECK_RTOL)) and state.accepted:
        return state, BlockResult(False, "radar-check", before, before, info)
    if state.accepted and after < before - 1e-9 * max(1.0, abs(before)):
        return state, BlockResult(False, "no-improvement", before, before, info)
    cand.accepted = True
    return cand, BlockResult(True, sol.status, before, after, info)


def restore_covertness(scn: Scenario, state: DesignState, mode: str, floor: float = 0.0) -> DesignState:
    """Shrink the covert beamformers until every covertness margin is at least ``floor``.

    Solver outputs can overshoot a covertness constraint by the solver
    tolerance; scaling ``W`` down only reduces leakage toward the wardens.
    """
    if np.all(covert_margins(scn, state, mode) >= floor):
        return state
    out = state.copy()
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        out.W = state.W * mid
        if np.all(covert_margins(scn, out, mode) >= floor):
            lo = mid
        else:
            hi = mid
    out.W = state.W * lo
    return out


def _covert_floor(scn: Scenario, state: DesignState, mode: str) -> float:
    """Required covertness margin: zero, or the current (negative) margin of an accepted state."""
    if not state.accepted:
        return 0.0
    return min(0.0, float(np.min(covert_margins(scn, state, mode))))
