"""Small numerical kernels shared by the detection and optimization modules.

Hermitian eigendecomposition, the regularized lower incomplete gamma function,
the CDF of a weighted sum of independent Erlang variables, and a PSD floor.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import mpmath
import numpy as np
from scipy import special

HERMITIAN_RTOL = 1e-12
MERGE_RTOL = 1e-6
PRUNE_RTOL = 1e-12


def hermitize(A: np.ndarray) -> np.ndarray:
    """Return the Hermitian part ``(A + A^H) / 2``."""
    A = np.asarray(A)
    return 0.5 * (A + A.conj().T)


def check_hermitian(A: np.ndarray, rtol: float = HERMITIAN_RTOL) -> None:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(float(np.max(np.abs(A))) if A.size else 0.0, 1.0)
    if np.max(np.abs(A - A.conj().T), initial=0.0) > rtol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")


def hermitian_eig(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Args:
        A: Square matrix, Hermitian to within ``1e-12`` relative.

    Returns:
        ``(values, vectors)`` with real eigenvalues sorted in descending order
        and orthonormal eigenvectors in the matching columns.
    """
    check_hermitian(A)
    vals, vecs = np.linalg.eigh(hermitize(A))
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def psd_floor(A: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Clip the eigenvalues of a Hermitian matrix from below at ``floor``."""
    vals, vecs = np.linalg.eigh(hermitize(A))
    vals = np.maximum(vals, floor)
    return hermitize((vecs * vals) @ vecs.conj().T)


def psd_sqrt(A: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root, negative eigenvalues clipped to zero."""
    vals, vecs = np.linalg.eigh(hermitize(A))
    root = np.sqrt(np.maximum(vals, 0.0))
    return hermitize((vecs * root) @ vecs.conj().T)


def logdet_pd(A: np.ndarray) -> float:
    """Log-determinant of a Hermitian positive definite matrix (natural log)."""
    L = np.linalg.cholesky(hermitize(A))
    return 2.0 * float(np.sum(np.log(np.real(np.diag(L)))))


def regularized_lower_gamma(shape, x):
    """Regularized lower incomplete gamma ``P(shape, x)``.

    Args:
        shape: Positive integer shape (array-like allowed).
        x: Non-negative argument (array-like allowed).

    Returns:
        ``P(shape, x)`` in ``[0, 1]``; a float for scalar inputs.
    """
    shape_arr = np.asarray(shape)
    x_arr = np.asarray(x, dtype=float)
    if np.any(shape_arr < 1) or np.any(shape_arr != np.round(shape_arr)):
        raise ValueError("shape must be a positive integer")
    if np.any(x_arr < 0):
        raise ValueError("x must be non-negative")
    out = special.gammainc(shape_arr.astype(float), x_arr)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ErlangMixture:
    """Distribution of ``sum_i scales[i] * G_i`` with ``G_i ~ Gamma(shape, 1)`` i.i.d."""

    scales: tuple[float, ...]
    shape: int

    def __post_init__(self):
        if self.shape < 1 or int(self.shape) != self.shape:
            raise ValueError("shape must be a positive integer")
        if any(not np.isfinite(s) or s < 0 for s in self.scales):
            raise ValueError("scales must be finite and non-negative")


def merge_scales(
    scales, shape: int, merge_rtol: float = MERGE_RTOL, prune_rtol: float = PRUNE_RTOL
) -> list[tuple[float, int]]:
    """Group (nearly) equal scales into ``(scale, total_shape)`` pairs.

    Scales at or below ``prune_rtol`` times the largest scale carry no mass
    in the CDF and are dropped. Consecutive sorted scales whose relative gap is
    below ``merge_rtol`` are merged (shapes add, scale is the shape-weighted mean).
    """
    s = np.sort(np.asarray(scales, dtype=float))[::-1]
    if s.size == 0 or s[0] <= 0:
        return []
    s = s[s > prune_rtol * s[0]]
    groups: list[list[float]] = [[s[0]]]
    for v in s[1:]:
        if groups[-1][-1] - v <= merge_rtol * groups[-1][-1]:
            groups[-1].append(v)
        else:
            groups.append([v])
    return [(float(np.mean(g)), shape * len(g)) for g in groups]


def _partial_fraction_coeffs(groups, to_num=float):
    """Coefficients ``c[g][r]`` such that the CDF is ``sum c[g][r] P(r, x / theta_g)``.

    The Laplace transform ``prod_h (1 + theta_h s)^(-m_h)`` is expanded around
    each pole; around pole ``g`` with ``u = 1 - theta_g s`` the remaining factors
    become ``(a_h + b_h u)^(-m_h)``, ``a_h = 1 - theta_h / theta_g``,
    ``b_h = theta_h / theta_g``, whose Taylor coefficients give the weights.
    """
    thetas = [to_num(t) for t, _ in groups]
    shapes = [m for _, m in groups]
    coeffs = []
    for g, (tg, mg) in enumerate(zip(thetas, shapes)):
        series = [to_num(1)] + [to_num(0)] * (mg - 1)
        for h, (th, mh) in enumerate(zip(thetas, shapes)):
            if h == g:
                continue
            a = 1 - th / tg
            b = th / tg
            ratio = -b / a
            base = a ** (-mh)
            factor = [base * comb(mh + j - 1, j) * ratio**j for j in range(mg)]
            series = [
                sum(series[i] * factor[j - i] for i in range(j + 1)) for j in range(mg)
            ]
        # c_{g, mg - j} = series[j]
        coeffs.append({mg - j: series[j] for j in range(mg)})
    return thetas, coeffs


def erlang_mixture_cdf(mixture: ErlangMixture, x: float) -> float:
    """CDF at ``x`` of a weighted sum of i.i.d. ``Gamma(shape, 1)`` variables.

    Uses the exact partial-fraction form. Distinct scales are expanded in
    double precision when the coefficients are well conditioned, otherwise in
    extended precision (mpmath) with enough digits to absorb the cancellation.

    Args:
        mixture: Scales and common integer shape.
        x: Evaluation point.

    Returns:
        ``Pr(sum_i scales[i] G_i <= x)``. An empty (all-zero) mixture is a
        point mass at zero.
    """
    groups = merge_scales(mixture.scales, mixture.shape)
    if not groups:
        return 1.0 if x >= 0 else 0.0
    if x <= 0:
        return 0.0
    if len(groups) == 1:
        theta, m = groups[0]
        return regularized_lower_gamma(m, x / theta)

    with np.errstate(all="ignore"):
        thetas, coeffs = _partial_fraction_coeffs(groups)
    mass = sum(abs(v) for c in coeffs for v in c.values())
    if np.isfinite(mass) and mass < 1e5:
        total = 0.0
        for tg, c in zip(thetas, coeffs):
            r = np.array(list(c.keys()), dtype=float)
            w = np.array(list(c.values()), dtype=float)
            total += float(np.dot(w, special.gammainc(r, x / tg)))
        return float(min(max(total, 0.0), 1.0))
    return _erlang_cdf_mp(groups, x)


def _erlang_cdf_mp(groups, x: float) -> float:
    with mpmath.workdps(30):
        _, coeffs = _partial_fraction_coeffs(groups, to_num=mpmath.mpf)
        mass = sum(abs(v) for c in coeffs for v in c.values())
        digits = int(mpmath.log10(mass)) if mass > 1 else 0
    with mpmath.workdps(min(30 + digits, 4000)):
        thetas, coeffs = _partial_fraction_coeffs(groups, to_num=mpmath.mpf)
        xm = mpmath.mpf(x)
        total = mpmath.mpf(0)
        for tg, c in zip(thetas, coeffs):
            for r, w in c.items():
                total += w * mpmath.gammainc(r, 0, xm / tg, regularized=True)
        return float(min(max(total, 0), 1))
