"""Block coordinate ascent over beamformers, antenna positions and receive filters.

Also hosts the baseline schemes: fixed half-wavelength arrays, greedy port
selection and the unconstrained (no covertness) upper bound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import colluding as coll
from .beamforming import (
    COLLUDING,
    NONCOLLUDING,
    DesignState,
    MetricSet,
    covert_margins,
    evaluate_metrics,
    f2_value,
    radar_sinr,
    restore_covertness,
    sum_rate,
    update_beamformers,
    update_rho,
    update_upsilon,
)
from .channel import Scenario, apv_violation, half_wavelength_apv, repair_apv, substream, uniform_apv
from .detection import DetectionReport, simulate_signal_dep
from .numerics import psd_sqrt
from .placement import PgdOptions, optimize_tx_apv
from .receiver import optimize_rx_apv, update_filters

PGD, DINKELBACH, GREEDY = "pgd", "dinkelbach", "greedy"
UNCONSTRAINED = "none"
FEASIBILITY_TOL = 1e-6
APV_TOL = 1e-12


@dataclass
class BcdOptions:
    """Outer-loop settings.

    Attributes:
        tx_placement, rx_placement: ``"pgd"``/``"dinkelbach"``, ``"greedy"`` or
            ``None`` (positions frozen).
        covert: Enforce covertness. ``False`` gives the upper-bound scheme.
        restarts: Independent starts with jittered transmit positions; the
            best final rate is reported.
        trials: Monte Carlo trials for the final detection check (0 skips it).
    """

    max_outer: int = 50
    tol: float = 1e-4
    pgd: PgdOptions = field(default_factory=PgdOptions)
    dinkelbach_iters: int = 15
    dinkelbach_tol: float = 1e-4
    tx_placement: str | None = PGD
    rx_placement: str | None = DINKELBACH
    covert: bool = True
    restarts: int = 1
    trials: int = 0


@dataclass
class SolveReport:
    """Outcome of one optimization run.

    ``trace`` holds the covert sum rate (bits/s/Hz) of the initial point
    followed by the rate after every outer iteration.
    """

    mode: str
    scheme: str
    seed: int
    trace: list
    metrics: MetricSet | None
    detection: list
    residuals: list
    block_times: dict
    iterations: int
    reason: str
    state: DesignState | None
    feasible: bool

    @property
    def rate(self) -> float:
        return self.trace[-1] if self.trace else float("nan")


# ------------------------------------------------------------------ initialization


def initialize_state(
    scn: Scenario, mode: str, t: np.ndarray | None = None, r: np.ndarray | None = None, covert: bool = True
) -> DesignState:
    """Feasible starting point.

    Positions default to a uniform spread over the region, filters to scaled
    steering vectors, ``R0 = Pt / (2N) I`` and the beamformers to matched
    filters sharing ``Pt / 2``, scaled down until the covertness constraint holds.
    """
    cfg = scn.config
    N, K, Pt = cfg.num_antennas, cfg.num_users, cfg.transmit_power
    t = uniform_apv(cfg) if t is None else np.asarray(t, dtype=float)
    r = uniform_apv(cfg) if r is None else np.asarray(r, dtype=float)
    Ar = scn.warden_steering(r)
    U = np.stack([Ar / np.sqrt(N)] * 2)
    H = scn.user_rows(t)
    W = (H.conj() / np.linalg.norm(H, axis=1)[:, None]).T * np.sqrt(Pt / (2 * K))
    R0 = Pt / (2 * N) * np.eye(N, dtype=complex)
    state = DesignState(W, R0, t, r, U, np.zeros(K), np.zeros(K))
    if mode == COLLUDING:
        state.RE = psd_sqrt(R0)
    if covert:
        state = restore_covertness(scn, state, mode, 0.0)
    state.rho = update_rho(scn, state)
    state.upsilon = update_upsilon(scn, state)
    return state


# ------------------------------------------------------------------ residuals


def feasibility_residuals(scn: Scenario, state: DesignState, mode: str, covert: bool = True) -> dict:
    """Constraint residuals; positive entries are violations."""
    cfg = scn.config
    gam = np.asarray(cfg.radar_sinr, dtype=float)
    sinr = radar_sinr(scn, state)
    power = float(np.real(np.trace(state.covariance(1))))
    out = {
        "power": power - cfg.transmit_power,
        "radar_h1": float(np.max(gam - sinr[1])),
        "radar_h0": float(np.max(gam - sinr[0])),
        "apv_tx": apv_violation(state.t, cfg.region_length, cfg.min_spacing),
        "apv_rx": apv_violation(state.r, cfg.region_length, cfg.min_spacing),
    }
    out["covert"] = float(-np.min(covert_margins(scn, state, mode))) if covert else 0.0
    return out


def is_accepted_final(res: dict) -> bool:
    """H1 radar, power, covertness and position checks of a final state (H0 radar is only logged)."""
    return (
        res["power"] <= 1e-8
        and res["radar_h1"] <= FEASIBILITY_TOL
        and res["covert"] <= FEASIBILITY_TOL
        and res["apv_tx"] <= APV_TOL
        and res["apv_rx"] <= APV_TOL
    )


# ------------------------------------------------------------------ greedy ports


def port_grid(cfg) -> np.ndarray:
    """Candidate ports ``{0, lambda/2, ..., D}``."""
    step = cfg.wavelength / 2
    count = int(np.floor(cfg.region_length / step + 1e-9)) + 1
    return np.arange(count) * step


def greedy_port_search(positions, ports, score, tol: float = 1e-12):
    """Repeatedly apply the best single-antenna relocation to a free port.

    ``score(order, positions)`` returns the objective of the sorted candidate
    ``positions`` (``order`` maps new slots to old antenna indices) or ``None``
    when infeasible. Ties keep the lowest antenna index, then the lowest port.

    Returns:
        ``(positions, order, value)`` where ``order`` composes all accepted moves.
    """
    pos = np.asarray(positions, dtype=float).copy()
    order = np.arange(pos.size)
    current = score(np.arange(pos.size), pos)
    while True:
        best = None
        for n in range(pos.size):
            for p in ports:
                if np.any(np.isclose(pos, p, rtol=0, atol=1e-12)):
                    continue
                cand = pos.copy()
                cand[n] = p
                perm = np.argsort(cand, kind="stable")
                value = score(perm, cand[perm])
                if value is None:
                    continue
                if value > current + tol * max(1.0, abs(current)) and (best is None or value > best[0]):
                    best = (value, perm, cand[perm])
        if best is None:
            return pos, order, current
        current, perm, pos = best
        order = order[perm]


def _permute_state(state: DesignState, perm: np.ndarray, t=None, r=None) -> DesignState:
    out = state.copy()
    if t is not None:
        out.t = t
        out.W = state.W[perm]
        out.R0 = state.R0[np.ix_(perm, perm)]
        if state.RE is not None:
            out.RE = state.RE[np.ix_(perm, perm)]
    if r is not None:
        out.r = r
        out.U = state.U[:, :, perm]
    return out


def greedy_tx_ports(scn: Scenario, state: DesignState, mode: str, covert: bool) -> DesignState:
    """Greedy transmit port moves that raise ``F2`` and keep every constraint no worse than allowed."""
    cfg = scn.config
    gam = np.asarray(cfg.radar_sinr, dtype=float)
    sinr0 = radar_sinr(scn, state)
    radar_floor = np.minimum(gam, sinr0) * (1 - 1e-9)
    cov_floor = min(0.0, float(np.min(covert_margins(scn, state, mode)))) if covert else None

    def score(perm, t):
        cand = _permute_state(state, perm, t=t)
        if np.any(radar_sinr(scn, cand) < radar_floor):
            return None
        if covert and np.min(covert_margins(scn, cand, mode)) < cov_floor:
            return None
        return f2_value(scn, cand.W, cand.R0, t, state.rho, state.upsilon)

    t, order, _ = greedy_port_search(state.t, port_grid(cfg), score)
    return _permute_state(state, order, t=t)


def greedy_rx_ports(scn: Scenario, state: DesignState) -> DesignState:
    """Greedy receive port moves that raise the minimum radar SINR, filters re-optimized per candidate."""
    cfg = scn.config
    gam = np.asarray(cfg.radar_sinr, dtype=float)
    met = radar_sinr(scn, state) >= gam[None, :]

    def score(perm, r):
        cand = _permute_state(state, perm, r=r)
        cand.U = update_filters(scn, cand)
        sinr = radar_sinr(scn, cand)
        if np.any(sinr[met] < np.broadcast_to(gam, sinr.shape)[met]):
            return None
        return float(sinr.min())

    r, order, _ = greedy_port_search(state.r, port_grid(cfg), score)
    out = _permute_state(state, order, r=r)
    out.U = update_filters(scn, out)
    return out


# ------------------------------------------------------------------ main loop


def _timed(times: dict, name: str, fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    times.setdefault(name, []).append(time.perf_counter() - start)
    return out


def _refresh(scn: Scenario, state: DesignState) -> coll.MmseAux:
    return coll.refresh_aux(scn.fused_channel(state.t), state.W, state.RE, scn.config.warden_noise)


def _bcd_loop(scn: Scenario, state: DesignState, mode: str, opts: BcdOptions):
    sdr_mode = mode if opts.covert else NONCOLLUDING
    tx_mode = mode if opts.covert else UNCONSTRAINED
    trace = [sum_rate(scn, state)]
    residuals = [feasibility_residuals(scn, state, mode, opts.covert)]
    times: dict = {}
    reason = "max-iterations"
    it = 0
    for it in range(1, opts.max_outer + 1):
        state.rho = update_rho(scn, state)
        state.upsilon = update_upsilon(scn, state)
        aux = _timed(times, "aux", _refresh, scn, state) if sdr_mode == COLLUDING else None
        state, res = _timed(times, "beamforming", update_beamformers, scn, state, sdr_mode, aux, opts.covert)
        if not res.accepted and not state.accepted:
            state.U = update_filters(scn, state)
            state, res = _timed(times, "beamforming", update_beamformers, scn, state, sdr_mode, aux, opts.covert)
            if not res.accepted:
                return state, trace, residuals, times, it, f"infeasible:{res.status}"
        if tx_mode == COLLUDING:
            aux = _timed(times, "aux", _refresh, scn, state)
        if opts.tx_placement == PGD:
            pr = _timed(times, "tx_placement", optimize_tx_apv, scn, state, tx_mode, aux, opts.pgd)
            state.t = pr.t
        elif opts.tx_placement == GREEDY:
            state = _timed(times, "tx_placement", greedy_tx_ports, scn, state, mode, opts.covert)
        if opts.rx_placement == DINKELBACH:
            dk = _timed(
                times, "rx_placement", optimize_rx_apv, scn, state, opts.dinkelbach_iters, opts.dinkelbach_tol
            )
            state.r = dk.r
        elif opts.rx_placement == GREEDY:
            state = _timed(times, "rx_placement", greedy_rx_ports, scn, state)
        state.U = _timed(times, "filters", update_filters, scn, state)
        if mode == COLLUDING and state.RE is None:
            state.RE = psd_sqrt(state.R0)
        trace.append(sum_rate(scn, state))
        residuals.append(feasibility_residuals(scn, state, mode, opts.covert))
        if abs(trace[-1] - trace[-2]) <= opts.tol * max(abs(trace[-1]), 1e-12):
            reason = "converged"
            break
    return state, trace, residuals, times, it, reason


def detection_reports(scn: Scenario, state: DesignState, mode: str, metrics: MetricSet, trials: int, seed: int):
    """Closed-form detection figures, with Monte Carlo estimates when ``trials > 0``."""
    cfg = scn.config
    empirical = None
    if trials > 0:
        mc_seed = int(substream(seed, "monte-carlo").integers(2**62))
        empirical = simulate_signal_dep(
            scn.warden_steering(state.t), scn.channels.warden_gain, state.W, state.R0,
            cfg.warden_noise, cfg.channel_uses, trials, mc_seed, mode == COLLUDING,
        )
    reports = []
    for j, (dep, kl) in enumerate(zip(metrics.dep, metrics.kl)):
        warden = -1 if mode == COLLUDING else j
        emp, hw = empirical[j] if empirical else (float("nan"), float("nan"))
        reports.append(DetectionReport(warden, float(dep), float(kl), float("nan"), emp, hw, trials))
    return reports


def run_bcd(
    scn: Scenario,
    mode: str = NONCOLLUDING,
    opts: BcdOptions | None = None,
    start: DesignState | None = None,
    scheme: str = "proposed",
) -> SolveReport:
    """Optimize one scenario.

    Args:
        scn: Configuration and channel realization.
        mode: ``"noncolluding"`` or ``"colluding"``.
        opts: Loop settings; defaults give the proposed scheme.
        start: Optional initial state (used for warm starts).
        scheme: Label stored in the report.
    """
    if mode not in (NONCOLLUDING, COLLUDING):
        raise ValueError(f"unknown mode {mode!r}")
    opts = opts or BcdOptions()
    cfg = scn.config
    seed = cfg.seed
    best = None
    jitter = substream(seed, "init-jitter")
    for attempt in range(max(1, opts.restarts)):
        if start is not None:
            # An accepted warm start keeps the no-decrease guard of the beamforming block.
            state = start.copy()
            if mode == COLLUDING and state.RE is None:
                state.RE = psd_sqrt(state.R0)
        else:
            t = None
            if attempt > 0:
                t = uniform_apv(cfg) + jitter.uniform(-cfg.wavelength / 4, cfg.wavelength / 4, cfg.num_antennas)
                t = repair_apv(np.clip(t, 0.0, cfg.region_length), cfg.region_length, cfg.min_spacing)
            state = initialize_state(scn, mode, t=t, covert=opts.covert)
        out = _bcd_loop(scn, state, mode, opts)
        if best is None or out[1][-1] > best[1][-1]:
            best = out
        if start is not None:
            break
    state, trace, residuals, times, it, reason = best
    feasible = not reason.startswith("infeasible") and is_accepted_final(residuals[-1])
    metrics = evaluate_metrics(scn, state, mode)
    detection = detection_reports(scn, state, mode, metrics, opts.trials, seed)
    return SolveReport(mode, scheme, seed, trace, metrics, detection, residuals, times, it, reason, state, feasible)


def run_fpa(scn: Scenario, mode: str = NONCOLLUDING, opts: BcdOptions | None = None) -> SolveReport:
    """Fixed half-wavelength arrays at both ends; positions are never updated."""
    opts = replace(opts or BcdOptions(), tx_placement=None, rx_placement=None, restarts=1)
    start = initialize_state(scn, mode, half_wavelength_apv(scn.config), half_wavelength_apv(scn.config))
    return run_bcd(scn, mode, opts, start=start, scheme="fpa")


def run_gas(scn: Scenario, mode: str = NONCOLLUDING, opts: BcdOptions | None = None) -> SolveReport:
    """Greedy port selection on the half-wavelength port grid, starting from the fixed arrays."""
    opts = replace(opts or BcdOptions(), tx_placement=GREEDY, rx_placement=GREEDY, restarts=1)
    start = initialize_state(scn, mode, half_wavelength_apv(scn.config), half_wavelength_apv(scn.config))
    return run_bcd(scn, mode, opts, start=start, scheme="gas")


def run_upper_bound(
    scn: Scenario, mode: str = NONCOLLUDING, opts: BcdOptions | None = None, start: DesignState | None = None
) -> SolveReport:
    """Proposed scheme without covertness constraints.

    Warm-starting from a covert solution (``start``) makes the bound dominate
    that solution, since the covert state is feasible here.
    """
    opts = replace(opts or BcdOptions(), covert=False)
    return run_bcd(scn, mode, opts, start=start, scheme="upper-bound")
