import numpy as np
import pytest

from covert_dfrc.conic import ConicProblem, hermitian_real_embedding, min_eigenvalue_test, vstack

from conftest import random_psd


def _random_hermitian(rng, n):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (X + X.conj().T) / 2


def _generated_sdp(i):
    """Instance ``i`` of a family with closed-form optima."""
    rng = np.random.default_rng(1000 + i)
    n = 2 + i % 4
    C = _random_hermitian(rng, n)
    kind = i % 3
    prob = ConicProblem()
    X = prob.hermitian_psd(n)
    if kind == 0:
        # min <C, X> s.t. tr X = 1  ->  lambda_min(C)
        prob.add_eq(X.trace(), 1.0)
        prob.minimize(X.inner(C))
        exact = np.linalg.eigvalsh(C)[0]
    elif kind == 1:
        # max <A, X> s.t. tr X <= P, A PSD  ->  P lambda_max(A)
        A = random_psd(rng, n)
        P = float(rng.uniform(0.5, 3.0))
        prob.add_le(X.trace(), P)
        prob.maximize(X.inner(A))
        exact = P * np.linalg.eigvalsh(A)[-1]
    else:
        # min <C + cI, X> s.t. X_00 = b  (C + cI positive definite) -> b / [(C+cI)^-1]_00
        C = C + (abs(np.linalg.eigvalsh(C)[0]) + 1.0) * np.eye(n)
        b = float(rng.uniform(0.5, 2.0))
        E = np.zeros((n, n))
        E[0, 0] = 1.0
        prob.add_eq(X.inner(E), b)
        prob.minimize(X.inner(C))
        exact = b / np.linalg.inv(C)[0, 0].real
    return prob, float(exact)


@pytest.mark.parametrize("i", range(50))
def test_generated_sdp_optimum(i):
    prob, exact = _generated_sdp(i)
    sol = prob.solve(tol=1e-10)
    assert sol.ok
    assert abs(sol.primal_objective - exact) <= 1e-6
    assert abs(sol.gap) <= 1e-7


def test_min_eigenvalue_characterization():
    rng = np.random.default_rng(3)
    for n in (1, 2, 5):
        H = _random_hermitian(rng, n)
        assert abs(min_eigenvalue_test(H) - np.linalg.eigvalsh(H)[0]) <= 1e-8


def test_real_embedding_doubles_spectrum():
    H = _random_hermitian(np.random.default_rng(4), 3)
    emb = np.sort(np.linalg.eigvalsh(hermitian_real_embedding(H)))
    np.testing.assert_allclose(emb, np.sort(np.repeat(np.linalg.eigvalsh(H), 2)), atol=1e-12)


def test_second_order_cone():
    c = np.array([3.0, -4.0])
    prob = ConicProblem()
    x = prob.variable(2)
    prob.add_sum_squares_le(x, 1.0)
    prob.minimize(x.lmul(c[None, :]))
    sol = prob.solve()
    assert sol.ok
    assert sol.primal_objective == pytest.approx(-5.0, abs=1e-6)
    np.testing.assert_allclose(sol.value(x), -c / 5, atol=1e-5)


def test_linear_program_and_stacking():
    prob = ConicProblem()
    x = prob.variable(2, nonneg=True)
    prob.add_le(vstack([x[0], x[1]]).sum(), 1.0)
    prob.maximize(x[0] * 2.0 + x[1])
    sol = prob.solve()
    assert sol.primal_objective == pytest.approx(2.0, abs=1e-6)


def test_infeasible_status():
    prob = ConicProblem()
    x = prob.variable(1)
    prob.add_ge(x, 1.0)
    prob.add_le(x, 0.0)
    prob.minimize(x)
    assert prob.solve().status == "infeasible"


def test_unbounded_status():
    prob = ConicProblem()
    x = prob.variable(1)
    prob.add_le(x, 0.0)
    prob.minimize(x)
    assert prob.solve().status == "unbounded"


def test_hermitian_variable_value_roundtrip():
    rng = np.random.default_rng(5)
    target = random_psd(rng, 3)
    prob = ConicProblem()
    X = prob.hermitian_psd(3)
    # min ||X - target||_F^2 via an epigraph; the optimum is target itself.
    tau = prob.variable(1)
    prob.add_sum_squares_le(X.frobenius_vec() - np.concatenate(_basis_coords(target)), tau)
    prob.minimize(tau)
    sol = prob.solve(tol=1e-9)
    np.testing.assert_allclose(sol.value(X), target, atol=1e-4)


def _basis_coords(A):
    n = A.shape[0]
    diag = np.real(np.diag(A))
    iu = np.triu_indices(n, 1)
    return diag, np.sqrt(2) * np.real(A[iu]), np.sqrt(2) * np.imag(A[iu])
