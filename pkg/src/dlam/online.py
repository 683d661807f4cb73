"""Streaming decompositions that consume one frame per step.

GRASTA tracks an orthonormal basis on the Grassmannian: each frame is fit
with an l1 cost by ADMM on a subsampled set of pixels, and the basis then
takes one geodesic gradient step. OR-PCA keeps a factored basis updated
from running second-moment accumulators.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ArgumentError, InputError, NumericalError
from .linalg import shrink

ADMM_TOL = 1e-7
RHO_CAP = 1e8


def _orthonormal_columns(X):
    Q, R = np.linalg.qr(X)
    # fix column signs so the factor is unique
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


@dataclass
class SubspaceState:
    """Basis ``U`` (n x d, orthonormal columns) and tracking bookkeeping."""

    U: np.ndarray
    step0: float = 0.3
    step_decay: float = 100.0
    rho: float = 1.8
    rho_growth: float = 1.5
    admm_max_iter: int = 60
    frames_seen: int = 0

    @property
    def n(self):
        return self.U.shape[0]

    @property
    def d(self):
        return self.U.shape[1]

    @property
    def step_size(self):
        return self.step0 / (1.0 + self.frames_seen / self.step_decay)


@dataclass
class AdmmResult:
    w: np.ndarray
    s: np.ndarray
    y: np.ndarray
    rho: float
    iterations: int
    primal_residual: float
    # y + rho * (U_omega w + s - a_omega) from the last full sweep
    gradient: np.ndarray


def grasta_init(n, d, seed=0, **options):
    """Random orthonormal starting basis; ``options`` override step and ADMM settings."""
    if not 1 <= d <= n:
        raise ArgumentError(f"subspace dimension d={d} must lie in [1, n={n}]")
    rng = np.random.default_rng(seed)
    U = _orthonormal_columns(rng.standard_normal((n, d)))
    return SubspaceState(U, **options)


def _omega_index(n, omega):
    if omega is None:
        return np.arange(n)
    idx = np.asarray(omega)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    return np.sort(idx.astype(int))


def grasta_admm(state, a, omega=None):
    """Fit ``a[omega] ~ U[omega] @ w + s`` with ``s`` sparse by ADMM.

    Solves ``min ||s||_1`` subject to ``U_omega w + s = a_omega`` through the
    augmented Lagrangian with dual vector ``y``. The penalty starts at
    ``state.rho`` and grows by ``state.rho_growth`` per sweep. Sweeps stop
    once the primal residual is below 1e-7 or after ``state.admm_max_iter``;
    a closing shrink step makes ``s`` the exact soft threshold of its inputs.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (state.n,):
        raise InputError(f"frame has shape {a.shape}, expected ({state.n},)")
    if not np.all(np.isfinite(a)):
        raise InputError("frame contains non-finite values")
    idx = _omega_index(state.n, omega)
    if idx.size < state.d:
        raise ArgumentError(f"|omega|={idx.size} smaller than subspace dimension {state.d}")
    U_o = state.U[idx]
    a_o = a[idx]
    # U_omega must have full column rank for w to be determined
    sv = np.linalg.svd(U_o, compute_uv=False)
    if sv[-1] <= 1e-10 * max(sv[0], 1.0):
        raise NumericalError(
            f"subsampled basis is rank deficient (smallest singular value {sv[-1]:.3e})")
    pinv = np.linalg.pinv(U_o)
    rho = state.rho
    w = pinv @ a_o
    s = np.zeros_like(a_o)
    y = np.zeros_like(a_o)
    r = U_o @ w - a_o
    it = 0
    for it in range(1, state.admm_max_iter + 1):
        s = shrink(a_o - U_o @ w - y / rho, 1.0 / rho)
        w = pinv @ (a_o - s - y / rho)
        r = U_o @ w + s - a_o
        y = y + rho * r
        if np.linalg.norm(r) <= ADMM_TOL:
            break
        rho = min(rho * state.rho_growth, RHO_CAP)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(y))):
        raise NumericalError("ADMM iterates became non-finite")
    gradient = y + rho * r
    s = shrink(a_o - U_o @ w - y / rho, 1.0 / rho)
    primal = float(np.linalg.norm(U_o @ w + s - a_o))
    return AdmmResult(w, s, y, rho, it, primal, gradient)


def grasta_update(state, a, omega=None):
    """One tracking step: ADMM fit, then a geodesic step of the basis.

    Returns ``(new_state, s_full)``. ``s_full`` holds the ADMM sparse term on
    the observed pixels and the residual ``a - U w`` on the pixels left out
    of ``omega``, so it covers the whole frame.
    """
    a = np.asarray(a, dtype=float)
    fit = grasta_admm(state, a, omega)
    idx = _omega_index(state.n, omega)
    U, w = state.U, fit.w

    s_full = a - U @ w
    s_full[idx] = fit.s

    # gradient of the augmented Lagrangian w.r.t. U is gamma w^T
    gamma = np.zeros(state.n)
    gamma[idx] = fit.gradient
    # project onto the tangent space of the Grassmannian at U
    gamma -= U @ (U.T @ gamma)

    w_norm = np.linalg.norm(w)
    g_norm = np.linalg.norm(gamma)
    new_state = replace(state, frames_seen=state.frames_seen + 1)
    if w_norm == 0 or g_norm <= 1e-300:
        return new_state, s_full

    sigma = g_norm * w_norm
    w_hat = w / w_norm
    # never rotate past the least-squares fit of the observed entries; the
    # rotation acts on full-length vectors whose observed part has norm about
    # sqrt(|omega|/n), so the angle seen on omega is larger by that factor
    fit_angle = np.arctan(np.sqrt(idx.size / state.n) * np.linalg.norm(a[idx] - U[idx] @ w)
                          / max(np.linalg.norm(U[idx] @ w), 1e-300))
    # sigma measured against the frame scale keeps the step size dimensionless
    t = min(state.step_size * sigma / (np.sqrt(idx.size) * w_norm), fit_angle)
    step = (np.cos(t) - 1.0) * np.outer(U @ w_hat, w_hat) - np.sin(t) * np.outer(gamma / g_norm, w_hat)
    new_state.U = _orthonormal_columns(U + step)
    return new_state, s_full


def sample_omega(n, fraction, rng):
    """Uniform subset of ``round(fraction * n)`` pixel indices, sorted."""
    size = int(round(fraction * n))
    if not 1 <= size <= n:
        raise ArgumentError(f"subsample fraction {fraction} selects {size} of {n} pixels")
    return np.sort(rng.choice(n, size=size, replace=False))


@dataclass
class OrpcaState:
    """Basis ``L`` (n x r) and the accumulators driving its updates."""

    L: np.ndarray
    A_acc: np.ndarray
    B_acc: np.ndarray
    lambda1: float
    lambda2: float
    samples_seen: int = 0
    # per-sample objective of the most recent step, before the basis update
    last_cost: float = float("nan")
    inner_tol: float = 1e-10
    inner_max_iter: int = 10000

    @property
    def n(self):
        return self.L.shape[0]

    @property
    def r(self):
        return self.L.shape[1]


@dataclass
class OrpcaStep:
    coef: np.ndarray
    s: np.ndarray
    cost: float
    iterations: int


def orpca_init(n, r, lambda1=None, lambda2=None, seed=0):
    """Random orthonormal basis and zeroed accumulators.

    Both regularization weights default to ``1/sqrt(n)``.
    """
    if not 1 <= r <= n:
        raise ArgumentError(f"rank r={r} must lie in [1, n={n}]")
    lambda1 = 1.0 / np.sqrt(n) if lambda1 is None else float(lambda1)
    lambda2 = 1.0 / np.sqrt(n) if lambda2 is None else float(lambda2)
    if lambda1 <= 0 or lambda2 <= 0:
        raise ArgumentError("lambda1 and lambda2 must be positive")
    rng = np.random.default_rng(seed)
    L = _orthonormal_columns(rng.standard_normal((n, r)))
    return OrpcaState(L, np.zeros((r, r)), np.zeros((n, r)), lambda1, lambda2)


def orpca_project(state, a):
    """Solve ``min_{r,s} 1/2||a - L r - s||^2 + l1/2 ||r||^2 + l2 ||s||_1``.

    Alternates the ridge solve for ``r`` with the shrink for ``s`` until
    neither moves by more than ``state.inner_tol``.
    """
    L, lam1, lam2 = state.L, state.lambda1, state.lambda2
    gram = L.T @ L + lam1 * np.eye(state.r)
    chol = np.linalg.cholesky(gram)

    def ridge(rhs):
        return np.linalg.solve(chol.T, np.linalg.solve(chol, L.T @ rhs))

    s = np.zeros_like(a)
    coef = ridge(a)
    it = 0
    for it in range(1, state.inner_max_iter + 1):
        s_new = shrink(a - L @ coef, lam2)
        coef_new = ridge(a - s_new)
        change = max(np.max(np.abs(coef_new - coef), initial=0.0),
                     np.max(np.abs(s_new - s), initial=0.0))
        coef, s = coef_new, s_new
        if change <= state.inner_tol:
            break
    # final shrink so s is the exact soft threshold of its residual
    s = shrink(a - L @ coef, lam2)
    resid = a - L @ coef - s
    cost = 0.5 * resid @ resid + 0.5 * lam1 * coef @ coef + lam2 * np.abs(s).sum()
    return OrpcaStep(coef, s, float(cost), it)


def orpca_step(state, a):
    """Process one frame; returns ``(new_state, coef, s)``.

    ``new_state.last_cost`` holds the per-sample objective under the basis
    held before the update.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (state.n,):
        raise InputError(f"frame has shape {a.shape}, expected ({state.n},)")
    if not np.all(np.isfinite(a)):
        raise InputError("frame contains non-finite values")
    fit = orpca_project(state, a)
    A_acc = state.A_acc + np.outer(fit.coef, fit.coef)
    A_acc = 0.5 * (A_acc + A_acc.T)
    B_acc = state.B_acc + np.outer(a - fit.s, fit.coef)

    # one block coordinate descent sweep over the basis columns
    L = state.L.copy()
    At = A_acc + state.lambda1 * np.eye(state.r)
    for j in range(state.r):
        L[:, j] += (B_acc[:, j] - L @ At[:, j]) / At[j, j]
    if not np.all(np.isfinite(L)):
        raise NumericalError("OR-PCA basis became non-finite")
    new_state = replace(state, L=L, A_acc=A_acc, B_acc=B_acc,
                        samples_seen=state.samples_seen + 1, last_cost=fit.cost)
    return new_state, fit.coef, fit.s
