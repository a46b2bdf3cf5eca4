"""Conic modeling layer over a primal-dual interior-point solver.

Problems are built from real scalar/vector variables and complex Hermitian PSD
matrix variables, with linear, second-order cone and PSD constraints. Hermitian
blocks are parametrized by ``n^2`` reals (diagonal, real and imaginary parts of
the strict upper triangle) and constrained through the real embedding
``[[Re H, -Im H], [Im H, Re H]]``, which is PSD exactly when ``H`` is.

The numerical engine is cvxopt's ``conelp`` (homogeneous self-dual embedding,
Nesterov-Todd scaling). This module owns problem assembly, row equilibration,
status mapping and the reported residuals and duality gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import cvxopt
import numpy as np

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 200


def hermitian_real_embedding(H: np.ndarray) -> np.ndarray:
    """Real symmetric ``2n x 2n`` embedding ``[[Re H, -Im H], [Im H, Re H]]``.

    Every eigenvalue of ``H`` appears twice in the embedding, so one is PSD
    exactly when the other is.
    """
    H = np.asarray(H)
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


class AffExpr:
    """Real affine expression ``coef @ x[cols] + const`` with ``m`` rows.

    Column indices may repeat; repeated entries are summed on assembly.
    """

    __slots__ = ("cols", "coef", "const")

    def __init__(self, cols, coef, const):
        self.cols = np.asarray(cols, dtype=np.int64)
        self.const = np.asarray(const, dtype=float).reshape(-1)
        self.coef = np.asarray(coef, dtype=float).reshape(self.const.size, self.cols.size)

    @staticmethod
    def constant(values) -> "AffExpr":
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return AffExpr(np.zeros(0, dtype=np.int64), np.zeros((values.size, 0)), values)

    @property
    def size(self) -> int:
        return self.const.size

    def _coerce(self, other) -> "AffExpr":
        if isinstance(other, AffExpr):
            return other
        other = np.atleast_1d(np.asarray(other, dtype=float))
        if other.size == 1 and self.size > 1:
            other = np.full(self.size, other[0])
        return AffExpr.constant(other)

    def __add__(self, other):
        other = self._coerce(other)
        if other.size != self.size:
            if self.size == 1:
                return _broadcast(self, other.size) + other
            if other.size == 1:
                return self + _broadcast(other, self.size)
            raise ValueError("size mismatch in affine expression sum")
        return AffExpr(
            np.concatenate([self.cols, other.cols]),
            np.hstack([self.coef, other.coef]),
            self.const + other.const,
        )

    __radd__ = __add__

    def __neg__(self):
        return AffExpr(self.cols, -self.coef, -self.const)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        scalar = float(scalar)
        return AffExpr(self.cols, scalar * self.coef, scalar * self.const)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __getitem__(self, idx):
        rows = np.atleast_1d(np.arange(self.size)[idx])
        return AffExpr(self.cols, self.coef[rows], self.const[rows])

    def lmul(self, M: np.ndarray) -> "AffExpr":
        """Left-multiply by a real matrix: rows ``M @ expr``."""
        M = np.asarray(M, dtype=float)
        return AffExpr(self.cols, M @ self.coef, M @ self.const)

    def scale_rows(self, weights) -> "AffExpr":
        weights = np.asarray(weights, dtype=float).reshape(-1)
        return AffExpr(self.cols, self.coef * weights[:, None], self.const * weights)

    def sum(self) -> "AffExpr":
        return AffExpr(self.cols, self.coef.sum(axis=0, keepdims=True), [self.const.sum()])

    def dense(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``(A, b)`` with the expression equal to ``A @ x + b``."""
        A = np.zeros((self.size, n))
        if self.cols.size:
            np.add.at(A.T, self.cols, self.coef.T)
        return A, self.const.copy()

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.coef @ x[self.cols] + self.const


def _broadcast(expr: AffExpr, m: int) -> AffExpr:
    return AffExpr(expr.cols, np.repeat(expr.coef, m, axis=0), np.repeat(expr.const, m))


def vstack(exprs) -> AffExpr:
    """Stack affine expressions row-wise."""
    exprs = list(exprs)
    cols = np.concatenate([e.cols for e in exprs])
    total = sum(e.size for e in exprs)
    coef = np.zeros((total, cols.size))
    r = c = 0
    for e in exprs:
        coef[r : r + e.size, c : c + e.cols.size] = e.coef
        r += e.size
        c += e.cols.size
    return AffExpr(cols, coef, np.concatenate([e.const for e in exprs]))


@lru_cache(maxsize=None)
def _hermitian_basis(n: int) -> np.ndarray:
    """Basis ``E_j`` with ``X = sum_j p_j E_j`` for the ``n^2`` real parameters."""
    iu, ju = np.triu_indices(n, 1)
    E = np.zeros((n * n, n, n), dtype=complex)
    for i in range(n):
        E[i, i, i] = 1.0
    off = n
    for k, (i, j) in enumerate(zip(iu, ju)):
        E[off + k, i, j] = 1.0
        E[off + k, j, i] = 1.0
    off += iu.size
    for k, (i, j) in enumerate(zip(iu, ju)):
        E[off + k, i, j] = 1j
        E[off + k, j, i] = -1j
    return E


@lru_cache(maxsize=None)
def _embedding_operator(n: int) -> np.ndarray:
    """Matrix mapping parameters to the column-major vec of the real embedding."""
    E = _hermitian_basis(n)
    out = np.empty((4 * n * n, n * n))
    for j in range(n * n):
        out[:, j] = hermitian_real_embedding(E[j]).ravel(order="F")
    return out


class HermitianVariable:
    """Complex Hermitian ``n x n`` matrix variable constrained PSD."""

    def __init__(self, n: int, offset: int):
        self.n = n
        self.offset = offset
        self.cols = np.arange(offset, offset + n * n)

    def _expr(self, coef, const=None) -> AffExpr:
        coef = np.atleast_2d(coef)
        if const is None:
            const = np.zeros(coef.shape[0])
        return AffExpr(self.cols, coef, const)

    def inner(self, C: np.ndarray) -> AffExpr:
        """Scalar ``Re Tr(C X)`` for any square ``C``."""
        C = np.asarray(C, dtype=complex)
        n = self.n
        iu, ju = np.triu_indices(n, 1)
        coef = np.concatenate(
            [
                np.real(np.diag(C)),
                np.real(C[ju, iu] + C[iu, ju]),
                np.imag(C[iu, ju]) - np.imag(C[ju, iu]),
            ]
        )
        return self._expr(coef)

    def quad(self, v: np.ndarray) -> AffExpr:
        """Scalar ``v^H X v``."""
        v = np.asarray(v, dtype=complex)
        return self.inner(np.outer(v, v.conj()))

    def trace(self) -> AffExpr:
        return self.inner(np.eye(self.n))

    def matvec(self, v: np.ndarray) -> AffExpr:
        """``X v`` as ``2n`` real rows: real parts then imaginary parts."""
        Ev = _hermitian_basis(self.n) @ np.asarray(v, dtype=complex)
        return self._expr(np.vstack([Ev.real.T, Ev.imag.T]))

    def matmul(self, B: np.ndarray) -> AffExpr:
        """Columns of ``X B`` stacked, each as ``2n`` real rows."""
        B = np.asarray(B, dtype=complex).reshape(self.n, -1)
        return vstack([self.matvec(B[:, j]) for j in range(B.shape[1])])

    def affine_product(self, A: np.ndarray, C: np.ndarray | None = None) -> AffExpr:
        """Columns of ``A X + C`` stacked, each as real then imaginary rows.

        The squared norm of the result equals ``||A X + C||_F^2``.
        """
        A = np.asarray(A, dtype=complex)
        p = A.shape[0]
        if C is None:
            C = np.zeros((p, self.n), dtype=complex)
        embed = hermitian_real_embedding(A)
        cols = []
        eye = np.eye(self.n)
        for j in range(self.n):
            col = self.matvec(eye[:, j]).lmul(embed)
            cols.append(col + np.concatenate([C[:, j].real, C[:, j].imag]))
        return vstack(cols)

    def frobenius_vec(self) -> AffExpr:
        """Rows whose squared norm equals ``||X||_F^2``."""
        n = self.n
        w = np.concatenate([np.ones(n), np.full(n * n - n, np.sqrt(2.0))])
        return self._expr(np.diag(w))

    def value(self, x: np.ndarray) -> np.ndarray:
        p = np.asarray(x)[self.cols]
        return np.tensordot(p, _hermitian_basis(self.n), axes=1)


@dataclass
class ConicSolution:
    """Outcome of a conic solve.

    ``status`` is ``"optimal"``, ``"infeasible"``, ``"unbounded"``,
    ``"max-iterations"`` (no convergence to tolerance) or ``"numerical-error"``. Residuals are the
    relative primal/dual residuals of the returned iterate; ``gap`` is the
    absolute duality gap in objective units.
    """

    status: str
    x: np.ndarray | None
    primal_objective: float
    dual_objective: float
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    certificate: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, expr) -> np.ndarray:
        if isinstance(expr, HermitianVariable):
            return expr.value(self.x)
        return expr.evaluate(self.x)


class ConicProblem:
    """Builder for a mixed linear / second-order / Hermitian-PSD cone program."""

    def __init__(self):
        self.n = 0
        self._le: list[AffExpr] = []
        self._eq: list[AffExpr] = []
        self._soc: list[AffExpr] = []
        self._psd: list[HermitianVariable] = []
        self._objective: AffExpr | None = None
        self._maximize = False

    def variable(self, size: int = 1, nonneg: bool = False) -> AffExpr:
        cols = np.arange(self.n, self.n + size)
        self.n += size
        expr = AffExpr(cols, np.eye(size), np.zeros(size))
        if nonneg:
            self.add_ge(expr, 0.0)
        return expr

    def hermitian_psd(self, n: int) -> HermitianVariable:
        var = HermitianVariable(n, self.n)
        self.n += n * n
        self._psd.append(var)
        return var

    def add_le(self, lhs, rhs=0.0) -> None:
        """Elementwise ``lhs <= rhs``."""
        expr = lhs - rhs if isinstance(lhs, AffExpr) else -(rhs - lhs)
        self._le.append(expr)

    def add_ge(self, lhs, rhs=0.0) -> None:
        """Elementwise ``lhs >= rhs``."""
        expr = rhs - lhs if isinstance(rhs, AffExpr) else -(lhs - rhs)
        self._le.append(expr)

    def add_eq(self, lhs, rhs=0.0) -> None:
        expr = lhs - rhs if isinstance(lhs, AffExpr) else -(rhs - lhs)
        self._eq.append(expr)

    def add_soc(self, t: AffExpr, x: AffExpr) -> None:
        """Second-order cone ``||x||_2 <= t`` with scalar ``t``."""
        self._soc.append(vstack([t, x]))

    def add_sum_squares_le(self, x: AffExpr, bound, scale: float | None = None) -> None:
        """Convex quadratic ``||x||^2 <= bound`` (``bound`` affine scalar or number).

        Encoded as ``||(2 x, bound - 1)|| <= bound + 1`` after dividing both
        sides by ``scale`` so that the constant 1 is commensurate with the
        data. By default ``scale`` is the largest coefficient magnitude; pass
        the magnitude of the expected slack when large coefficients cancel.
        """
        if not isinstance(bound, AffExpr):
            bound = AffExpr.constant(bound)
        if scale is None:
            scale = max(
                np.max(np.abs(bound.coef), initial=0.0),
                np.max(np.abs(bound.const), initial=0.0),
                np.max(np.abs(x.coef), initial=0.0) ** 2,
                np.max(np.abs(x.const), initial=0.0) ** 2,
            )
        if scale <= 0:
            scale = 1.0
        xs = x * (1.0 / np.sqrt(scale))
        bs = bound * (1.0 / scale)
        self.add_soc(bs + 1.0, vstack([xs * 2.0, bs - 1.0]))

    def add_psd(self, var: HermitianVariable) -> None:
        if var not in self._psd:
            self._psd.append(var)

    def minimize(self, expr: AffExpr) -> None:
        self._objective = expr.sum() if expr.size > 1 else expr
        self._maximize = False

    def maximize(self, expr: AffExpr) -> None:
        self._objective = expr.sum() if expr.size > 1 else expr
        self._maximize = True

    def solve(self, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> ConicSolution:
        """Solve with tolerance ``tol`` on gap and relative residuals."""
        n = self.n
        obj = self._objective if self._objective is not None else AffExpr.constant([0.0])
        c_row, c_const = obj.dense(n)
        c = c_row[0] * (-1.0 if self._maximize else 1.0)
        c_scale = max(np.max(np.abs(c), initial=0.0), 1e-300)
        if not np.any(c):
            c_scale = 1.0

        G_blocks, h_blocks = [], []
        dims = {"l": 0, "q": [], "s": []}
        if self._le:
            A, b = vstack(self._le).dense(n)
            w = _row_scales(A, b)
            G_blocks.append(A * w[:, None])
            h_blocks.append(-b * w)
            dims["l"] = A.shape[0]
        for cone in self._soc:
            A, b = cone.dense(n)
            s = max(np.max(np.abs(A)), np.max(np.abs(b)), 1e-300)
            # s - (A x + b) in Q  <=>  -A x + s_cone = b
            G_blocks.append(-A / s)
            h_blocks.append(b / s)
            dims["q"].append(A.shape[0])
        for var in self._psd:
            op = _embedding_operator(var.n)
            G = np.zeros((op.shape[0], n))
            G[:, var.cols] = -op
            G_blocks.append(G)
            h_blocks.append(np.zeros(op.shape[0]))
            dims["s"].append(2 * var.n)
        if not G_blocks:
            raise ValueError("problem has no cone constraints")
        G = np.vstack(G_blocks)
        h = np.concatenate(h_blocks)

        args = [cvxopt.matrix(c / c_scale), cvxopt.matrix(G), cvxopt.matrix(h), dims]
        if self._eq:
            A, b = vstack(self._eq).dense(n)
            w = _row_scales(A, b)
            args += [cvxopt.matrix(A * w[:, None]), cvxopt.matrix(-b * w)]
        options = {
            "show_progress": False,
            "abstol": tol,
            "reltol": tol,
            "feastol": tol,
            "maxiters": max_iters,
        }
        try:
            sol = cvxopt.solvers.conelp(*args, options=options)
        except (ValueError, ArithmeticError) as exc:
            # cvxopt raises on loss of cone interiority in badly scaled iterations.
            return ConicSolution("numerical-error", None, np.nan, np.nan, np.nan, np.nan, np.nan, 0, {"error": str(exc)})
        return _to_solution(sol, c_scale, float(c_const[0]), self._maximize, max_iters)


def _row_scales(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    mags = np.maximum(np.max(np.abs(A), axis=1), 0.0)
    mags = np.where(mags > 0, mags, np.maximum(np.abs(b), 1.0))
    return 1.0 / mags


def _to_solution(sol, c_scale, c_const, maximize, max_iters) -> ConicSolution:
    raw = sol["status"]
    sign = -1.0 if maximize else 1.0
    iters = int(sol.get("iterations", 0))
    pres = float(sol.get("primal infeasibility") or np.nan)
    dres = float(sol.get("dual infeasibility") or np.nan)
    if raw in ("optimal", "unknown") and sol["x"] is not None:
        x = np.array(sol["x"]).ravel()
        pobj = sign * float(sol["primal objective"]) * c_scale + c_const
        dobj = sign * float(sol["dual objective"]) * c_scale + c_const
        gap = abs(float(sol["gap"])) * c_scale
        status = "optimal" if raw == "optimal" else "max-iterations"
        return ConicSolution(status, x, pobj, dobj, gap, pres, dres, iters)
    certificate = {}
    if raw == "primal infeasible":
        status = "infeasible"
        certificate = {
            "z": np.array(sol["z"]).ravel(),
            "y": np.array(sol["y"]).ravel() if sol["y"] is not None else np.zeros(0),
            "residual": float(sol.get("residual as primal infeasibility certificate") or np.nan),
        }
        pobj = -np.inf if maximize else np.inf
    elif raw == "dual infeasible":
        status = "unbounded"
        pobj = np.inf if maximize else -np.inf
    else:
        status = "max-iterations"
        pobj = np.nan
    return ConicSolution(status, None, pobj, np.nan, np.nan, pres, dres, iters, certificate)


def min_eigenvalue_test(H: np.ndarray) -> float:
    """Smallest eigenvalue of a Hermitian matrix via its real embedding."""
    return float(np.linalg.eigvalsh(hermitian_real_embedding(H))[0])
