"""Quick consistency checks exposed through the command line."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import detection as det
from .beamforming import f2_value, rank_one_construct
from .bcd import initialize_state
from .channel import Scenario, ScenarioConfig, substream
from .conic import ConicProblem, min_eigenvalue_test
from .placement import grad_covert_t, grad_F2_t, grad_radar_sinr_t
from .receiver import filter_matrices, generalized_principal, update_filters


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_psd(rng, n, rank=None):
    rank = rank or n
    X = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    return X @ X.conj().T


def validate_detection(trials: int = 100_000, seed: int = 0, configs: int = 5) -> list[dict]:
    """Closed-form minimum DEP against Monte Carlo for random single and fused warden states."""
    rng = substream(seed, "validate")
    rows = []
    cases = [(1.0, 2.0, 1)]
    for _ in range(configs):
        eta0 = float(rng.uniform(0.5, 2.0))
        cases.append((eta0, eta0 * float(rng.uniform(1.01, 3.0)), int(rng.choice([1, 8, 32]))))
    for i, (e0, e1, M) in enumerate(cases):
        dep = det.noncolluding_min_dep(e0, e1, M)
        emp, hw = det.monte_carlo_noncolluding(e0, e1, M, trials, seed + i)
        rows.append({"kind": "single", "M": M, "dep": dep, "dep_empirical": emp, "half_width": hw,
                     "error": abs(dep - emp)})
    for i in range(configs):
        dim = 2 + i % 2
        M = int(rng.choice([1, 8, 32]))
        lam0 = np.eye(dim) + 0.3 * _random_psd(rng, dim) / dim
        lam1 = lam0 + 0.5 * _random_psd(rng, dim, 1) / dim
        stats = det.colluding_stats_from_covariances(lam0, lam1, M)
        dep = det.colluding_min_dep(stats, M)
        emp, hw = det.monte_carlo_colluding(lam0, lam1, M, trials, seed + 100 + i)
        rows.append({"kind": f"fused-{dim}", "M": M, "dep": dep, "dep_empirical": emp, "half_width": hw,
                     "error": abs(dep - emp)})
    return rows


def _fd_check(fn, x, grad, step=1e-6, rtol=1e-5) -> tuple[bool, float]:
    fd = np.array([(fn(x + step * e) - fn(x - step * e)) / (2 * step) for e in np.eye(x.size)])
    err = float(np.max(np.abs(fd - grad)) / max(np.max(np.abs(grad)), 1e-300))
    return err <= rtol, err


def run_selftest(seed: int = 0) -> list[CheckResult]:
    """Gradient, construction, solver and filter invariants on one random scenario."""
    out = []
    scn = Scenario.from_config(ScenarioConfig(seed=seed))
    state = initialize_state(scn, "noncolluding")
    rng = substream(seed, "selftest")
    state.t = state.t + rng.uniform(-0.01, 0.01, state.t.size)

    _, g = grad_F2_t(scn, state)
    ok, err = _fd_check(lambda t: f2_value(scn, state.W, state.R0, t, state.rho, state.upsilon), state.t, g)
    out.append(CheckResult("gradient of F2", ok, f"relative error {err:.2e}"))

    _, grads, _ = grad_radar_sinr_t(scn, state)
    ok, err = _fd_check(lambda t: grad_radar_sinr_t(scn, state, t)[0][1, 0], state.t, grads[1, 0])
    out.append(CheckResult("gradient of radar margin", ok, f"relative error {err:.2e}"))

    _, grads, _ = grad_covert_t(scn, state)
    ok, err = _fd_check(lambda t: grad_covert_t(scn, state, t)[0][0], state.t, grads[0])
    out.append(CheckResult("gradient of covertness function", ok, f"relative error {err:.2e}"))

    H = scn.user_rows(state.t)
    N, K = state.W.shape
    relaxed = [_random_psd(rng, N) for _ in range(K + 1)]
    W, R0 = rank_one_construct(H, relaxed)
    total = sum(relaxed)
    cov_err = float(np.max(np.abs(W @ W.conj().T + R0 - total)))
    ok = cov_err <= 1e-9 * max(1.0, float(np.max(np.abs(total)))) and np.linalg.eigvalsh(R0).min() >= -1e-8
    out.append(CheckResult("rank-one construction", bool(ok), f"covariance error {cov_err:.2e}"))

    A = _random_psd(rng, 3)
    prob = ConicProblem()
    X = prob.hermitian_psd(3)
    prob.add_eq(X.trace(), 1.0)
    prob.minimize(X.inner(A))
    sol = prob.solve(tol=1e-9)
    exact = min_eigenvalue_test(A)
    err = abs(sol.primal_objective - exact)
    out.append(CheckResult("conic minimum eigenvalue", sol.ok and err <= 1e-6, f"error {err:.2e}"))

    state.U = update_filters(scn, state)
    S, B = filter_matrices(scn, state, 0, 1)
    lam, u = generalized_principal(S, B)
    value = float(np.real(u.conj() @ S @ u) / np.real(u.conj() @ B @ u))
    out.append(CheckResult("filter Rayleigh quotient", abs(value - lam) <= 1e-8 * lam, f"quotient {value:.6g}"))

    dep = det.noncolluding_min_dep(1.0, 2.0, 1)
    out.append(CheckResult("analytic detection case", abs(dep - 0.75) <= 1e-12, f"DEP {dep:.12f}"))
    return out


__all__ = ["CheckResult", "run_selftest", "validate_detection"]
