"""Dense kernels and proximal operators shared by the solvers.

Every function here is pure: inputs are never modified, and randomized
routines draw only from the generator passed in by the caller.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ArgumentError, InputError, NumericalError

NORMS = ("frobenius", "nuclear", "l1", "linf", "spectral", "l21")

# truncated_svd sketch parameters
OVERSAMPLE = 10
POWER_ITERS = 2


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``M ~ left_vectors @ diag(singular_values) @ right_vectors.T``."""

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray

    @property
    def rank(self):
        return self.singular_values.shape[0]

    def reconstruct(self):
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def _as_finite(M, name="M"):
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} contains non-finite entries")
    return M


def full_svd(M):
    """Thin SVD by Golub-Kahan bidiagonalization and implicit-shift QR (LAPACK gesvd)."""
    M = _as_finite(M)
    if M.size == 0:
        raise InputError("cannot factor an empty matrix")
    U, s, Vt = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd",
                                check_finite=False)
    return SvdFactors(U, s, Vt.T)


def _orthonormal_range(Y):
    Q, _ = np.linalg.qr(Y)
    return Q


def truncated_svd(M, k, rng=None, oversample=OVERSAMPLE, power_iters=POWER_ITERS):
    """Leading ``k`` singular triplets of ``M``.

    Uses randomized subspace iteration with ``oversample`` extra sketch
    columns and ``power_iters`` re-orthonormalized power passes. When the
    sketch would cover the whole smaller dimension the factorization is
    computed exactly instead, so small problems never pay a sketching error.
    """
    M = _as_finite(M)
    if M.ndim != 2:
        raise InputError("M must be a 2-D matrix")
    m, n = M.shape
    if not 1 <= k <= min(m, n):
        raise ArgumentError(f"k={k} outside [1, {min(m, n)}]")
    width = k + oversample
    if width >= min(m, n):
        f = full_svd(M)
        return SvdFactors(f.left_vectors[:, :k].copy(), f.singular_values[:k].copy(),
                          f.right_vectors[:, :k].copy())

    if rng is None:
        rng = np.random.default_rng(0)
    # sketch from the smaller side
    transpose = m < n
    X = M.T if transpose else M
    omega = rng.standard_normal((X.shape[1], width))
    Q = _orthonormal_range(X @ omega)
    for _ in range(power_iters):
        Z = _orthonormal_range(X.T @ Q)
        Q = _orthonormal_range(X @ Z)
    small = full_svd(Q.T @ X)
    U = Q @ small.left_vectors[:, :k]
    s = small.singular_values[:k].copy()
    V = small.right_vectors[:, :k].copy()
    if transpose:
        U, V = V, U
    return SvdFactors(U, s, V)


def best_rank_approx(M, r):
    """Best rank-``r`` Frobenius approximation of ``M`` from an exact SVD.

    Returns ``(approximation, singular_values)`` where the second item holds
    all singular values of ``M``.
    """
    f = full_svd(M)
    r = min(r, f.rank)
    approx = (f.left_vectors[:, :r] * f.singular_values[:r]) @ f.right_vectors[:, :r].T
    return approx, f.singular_values


def shrink(M, tau):
    """Elementwise soft threshold ``sign(x) * max(|x| - tau, 0)``."""
    if tau < 0:
        raise ArgumentError("tau must be nonnegative")
    M = _as_finite(M)
    return np.sign(M) * np.maximum(np.abs(M) - tau, 0.0)


def svt(M, tau):
    """Singular value thresholding, the proximal map of ``tau * ||X||_*``."""
    out, _ = svt_with_spectrum(M, tau)
    return out


def svt_with_spectrum(M, tau):
    """Like :func:`svt` but also returns the thresholded singular values."""
    if tau < 0:
        raise ArgumentError("tau must be nonnegative")
    f = full_svd(M)
    s = np.maximum(f.singular_values - tau, 0.0)
    keep = int(np.count_nonzero(s))
    out = (f.left_vectors[:, :keep] * s[:keep]) @ f.right_vectors[:, :keep].T
    return out, s[:keep]


def hard_threshold_top_k(M, k):
    """Keep the ``k`` entries of largest magnitude and zero the rest.

    Ties are resolved in favour of the smaller row-major index.
    """
    M = _as_finite(M)
    if k < 0 or k > M.size:
        raise ArgumentError(f"k={k} outside [0, {M.size}]")
    out = np.zeros_like(M)
    if k == 0:
        return out
    flat = M.ravel()
    # stable sort keeps row-major order among equal magnitudes
    order = np.argsort(-np.abs(flat), kind="stable")[:k]
    out.ravel()[order] = flat[order]
    return out


def brp_lowrank(M, r, q=2, rng=None, max_retries=3):
    """Rank-``r`` approximation from bilateral random projections.

    The right sketch is ``Y1 = M @ A1`` with Gaussian ``A1``; the left sketch
    reuses it, ``Y2 = M.T @ Y1``. Each of the ``q`` power passes replaces
    ``(Y1, Y2)`` by ``(M @ Y2, M.T @ Y1)``. The approximation projects the
    rows of ``M`` onto the range of ``Y2``, which is exact when
    ``rank(M) <= r``.
    """
    M = _as_finite(M)
    m, n = M.shape
    if not 1 <= r <= min(m, n):
        raise ArgumentError(f"r={r} outside [1, {min(m, n)}]")
    if q < 0:
        raise ArgumentError("q must be nonnegative")
    if rng is None:
        rng = np.random.default_rng(0)
    if not np.any(M):
        return np.zeros_like(M)

    for _ in range(max_retries + 1):
        A1 = rng.standard_normal((n, r))
        Y1 = M @ A1
        Y2 = M.T @ Y1
        for _ in range(q):
            # normalize between passes so large q cannot overflow
            Y2 = _orthonormal_range(Y2)
            Y1 = M @ Y2
            Y2 = M.T @ Y1
        if not np.all(np.isfinite(Y2)) or not np.any(Y2):
            continue
        Q = _orthonormal_range(Y2)
        out = (M @ Q) @ Q.T
        if np.all(np.isfinite(out)):
            return out
    raise NumericalError(f"bilateral projection sketch degenerate after {max_retries} retries")


def matrix_norm(M, which):
    """Named matrix norm: frobenius, nuclear, l1, linf, spectral or l21."""
    if which not in NORMS:
        raise ArgumentError(f"unknown norm {which!r}; expected one of {', '.join(NORMS)}")
    M = _as_finite(M)
    if M.ndim == 1:
        M = M[:, None]
    if which == "frobenius":
        return float(np.sqrt(np.sum(M * M)))
    if which == "l1":
        return float(np.sum(np.abs(M)))
    if which == "linf":
        return float(np.max(np.abs(M))) if M.size else 0.0
    if which == "l21":
        return float(np.sum(np.sqrt(np.sum(M * M, axis=0))))
    if not M.size:
        return 0.0
    s = scipy.linalg.svdvals(M, check_finite=False)
    if which == "nuclear":
        return float(np.sum(s))
    return float(s[0])


def numerical_rank(singular_values, rel=1e-8):
    """Count of singular values above ``rel`` times the largest one."""
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.count_nonzero(s > rel * s[0]))
