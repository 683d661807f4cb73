"""Batch low-rank plus sparse solvers.

Convex principal component pursuit (exact and inexact ALM), stable PCP by
alternating splitting ALM, and the rank/cardinality constrained family
(GoDec, Semi-Soft GoDec, DRMF).

Every solver takes an observation and a :class:`DlamConfig` and returns a
:class:`DecompositionResult`. Hitting ``max_iter`` is reported in the trace,
not raised. An optional ``callback(iteration, state)`` receives the iterates
after each outer step; it exists for diagnostics and tests.
"""

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ConfigError, NumericalError
from .model import DecompositionResult, SolverTrace, as_observation, validate

RANK_PREDICTION_START = 10
RANK_PREDICTION_STEP = 5


@dataclass
class AlmState:
    """Multiplier and penalty schedule of an augmented Lagrangian run."""

    Y: np.ndarray
    mu: float
    rho: float
    mu_cap: float

    def step(self, Z):
        self.Y += self.mu * Z
        self.mu = min(self.rho * self.mu, self.mu_cap)


def _resolve(A, cfg, solver):
    A = as_observation(A)
    cfg = dataclasses.replace(cfg, solver=solver)
    if solver == "spcp_asalm" and cfg.kind == 2:
        cfg.kind = 3
    v = validate(cfg, A)
    if not v.ok:
        raise ConfigError("; ".join(v.diagnostics))
    return A, v.config


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError("non-finite values in solver iterates")


def _alm_start(D, cfg, lam):
    norm2 = linalg.matrix_norm(D, "spectral")
    mu = cfg.mu0 if cfg.mu0 is not None else 1.25 / norm2
    # dual start Y0 = D / J(D), J the dual norm of ||.||_* + lam ||.||_1
    scale = max(norm2, np.max(np.abs(D)) / lam)
    return AlmState(D / scale, mu, cfg.rho, mu * cfg.mu_cap_factor)


class _PartialSvt:
    """SVT through a truncated SVD whose width follows the predicted rank."""

    def __init__(self, shape, rng):
        self.limit = min(shape)
        self.predicted = min(RANK_PREDICTION_START, self.limit)
        self.rng = rng

    def __call__(self, X, tau):
        k = self.predicted
        while True:
            f = linalg.truncated_svd(X, k, rng=self.rng)
            if k == self.limit or f.singular_values[-1] <= tau:
                break
            k = min(k + RANK_PREDICTION_STEP, self.limit)
        s = np.maximum(f.singular_values - tau, 0.0)
        keep = int(np.count_nonzero(s))
        self.predicted = min(self.limit, max(RANK_PREDICTION_START, keep + 1))
        L = (f.left_vectors[:, :keep] * s[:keep]) @ f.right_vectors[:, :keep].T
        return L, s[:keep]


def _zero_result(shape, kind=2):
    trace = SolverTrace()
    trace.append(0.0, 0.0, 0, 0, 0.0)
    trace.termination = "converged"
    Z = np.zeros(shape)
    return DecompositionResult(Z, Z.copy(), Z.copy() if kind == 3 else None, trace)


def pcp_ialm(A, cfg, callback=None):
    """Principal component pursuit by the inexact augmented Lagrangian method.

    Minimizes ``||L||_* + lam * ||S||_1`` subject to ``L + S = A`` with one
    SVT step and one shrink step per multiplier update.
    """
    A, cfg = _resolve(A, cfg, "ialm")
    D = A.data
    normF = np.linalg.norm(D)
    if normF == 0:
        return _zero_result(D.shape)
    lam, tol = cfg.lam, cfg.tol
    rng = np.random.default_rng(cfg.seed)
    state = _alm_start(D, cfg, lam)
    prox = _PartialSvt(D.shape, rng)
    S = np.zeros_like(D)
    trace = SolverTrace()
    start = time.perf_counter()
    for it in range(cfg.max_iter):
        L, s = prox(D - S + state.Y / state.mu, 1.0 / state.mu)
        pre = D - L + state.Y / state.mu
        S = linalg.shrink(pre, lam / state.mu)
        Z = D - L - S
        _check_finite(L, S)
        if callback is not None:
            callback(it, {"L": L, "S": S, "Y": state.Y, "mu": state.mu, "S_input": pre})
        trace.penalties.append(state.mu)
        state.step(Z)
        res = np.linalg.norm(Z) / normF
        trace.append(s.sum() + lam * np.abs(S).sum(), res, s.size, np.count_nonzero(S),
                     time.perf_counter() - start)
        if res <= tol:
            trace.termination = "converged"
            break
    return DecompositionResult(L, S, None, trace)


def pcp_ealm(A, cfg, callback=None):
    """Principal component pursuit by the exact augmented Lagrangian method.

    Each multiplier update waits for the inner (L, S) alternation to settle
    to a relative change of ``0.1 * tol`` (or ``cfg.inner_max_iter`` sweeps).
    """
    A, cfg = _resolve(A, cfg, "ealm")
    D = A.data
    normF = np.linalg.norm(D)
    if normF == 0:
        return _zero_result(D.shape)
    lam, tol = cfg.lam, cfg.tol
    rng = np.random.default_rng(cfg.seed)
    state = _alm_start(D, cfg, lam)
    prox = _PartialSvt(D.shape, rng)
    L = np.zeros_like(D)
    S = np.zeros_like(D)
    trace = SolverTrace()
    start = time.perf_counter()
    for it in range(cfg.max_iter):
        for _ in range(cfg.inner_max_iter):
            L_new, s = prox(D - S + state.Y / state.mu, 1.0 / state.mu)
            S_new = linalg.shrink(D - L_new + state.Y / state.mu, lam / state.mu)
            change = max(np.linalg.norm(L_new - L), np.linalg.norm(S_new - S)) / normF
            L, S = L_new, S_new
            if change <= 0.1 * tol:
                break
        _check_finite(L, S)
        Z = D - L - S
        if callback is not None:
            callback(it, {"L": L, "S": S, "Y": state.Y, "mu": state.mu})
        trace.penalties.append(state.mu)
        state.step(Z)
        res = np.linalg.norm(Z) / normF
        trace.append(s.sum() + lam * np.abs(S).sum(), res, s.size, np.count_nonzero(S),
                     time.perf_counter() - start)
        if res <= tol:
            trace.termination = "converged"
            break
    return DecompositionResult(L, S, None, trace)


def _project_ball(X, radius):
    nrm = np.linalg.norm(X)
    if nrm <= radius:
        return X
    return X * (radius / nrm)


def spcp_asalm(A, cfg, callback=None):
    """Stable PCP by alternating splitting over (L, S, E) under one multiplier.

    Minimizes ``||L||_* + lam * ||S||_1`` subject to ``||A - L - S||_F <= delta``.
    The run counts as converged once the splitting residual is below ``tol``
    and ``||A - L - S||_F <= delta * (1 + tol)``; the returned noise term is
    ``E = A - L - S``.
    """
    A, cfg = _resolve(A, cfg, "spcp_asalm")
    D = A.data
    normF = np.linalg.norm(D)
    if normF == 0:
        return _zero_result(D.shape, kind=3)
    lam, tol, delta = cfg.lam, cfg.tol, cfg.delta
    rng = np.random.default_rng(cfg.seed)
    state = _alm_start(D, cfg, lam)
    prox = _PartialSvt(D.shape, rng)
    S = np.zeros_like(D)
    E = np.zeros_like(D)
    trace = SolverTrace()
    start = time.perf_counter()
    for it in range(cfg.max_iter):
        L, s = prox(D - S - E + state.Y / state.mu, 1.0 / state.mu)
        S = linalg.shrink(D - L - E + state.Y / state.mu, lam / state.mu)
        E = _project_ball(D - L - S + state.Y / state.mu, delta)
        _check_finite(L, S, E)
        Z = D - L - S - E
        if callback is not None:
            callback(it, {"L": L, "S": S, "E": E, "Y": state.Y, "mu": state.mu})
        trace.penalties.append(state.mu)
        state.step(Z)
        res = np.linalg.norm(Z) / normF
        gap = np.linalg.norm(D - L - S)
        trace.append(s.sum() + lam * np.abs(S).sum(), res, s.size, np.count_nonzero(S),
                     time.perf_counter() - start)
        if res <= tol and gap <= delta * (1 + tol):
            trace.termination = "converged"
            break
    return DecompositionResult(L, S, D - L - S, trace)


def _alternate(A, cfg, low_rank_step, sparse_step, squared=True, callback=None):
    """Alternate a rank-limited fit of ``A - S`` with a sparse fit of ``A - L``.

    Stops when the objective ``||A - L - S||_F^2`` (or its square root when
    ``squared`` is false) decreases by no more than ``tol`` times its
    previous value, or drops to rounding level.
    """
    D = A.data
    normF = np.linalg.norm(D)
    floor = (8 * np.finfo(float).eps * normF) ** 2
    S = np.zeros_like(D)
    prev = normF ** 2
    trace = SolverTrace()
    start = time.perf_counter()
    for it in range(cfg.max_iter):
        L, rank = low_rank_step(D - S)
        S = sparse_step(D - L)
        _check_finite(L, S)
        R = D - L - S
        obj = float(np.sum(R * R))
        if callback is not None:
            callback(it, {"L": L, "S": S, "objective": obj})
        trace.append(obj if squared else np.sqrt(obj),
                     np.sqrt(obj) / max(normF, np.finfo(float).eps),
                     rank, np.count_nonzero(S), time.perf_counter() - start)
        if obj <= floor or prev - obj <= cfg.tol * prev:
            trace.termination = "converged"
            break
        prev = obj
    noise = D - L - S if cfg.kind == 3 else None
    sparse = None if cfg.kind == 1 else S
    return DecompositionResult(L, sparse, noise, trace)


def _exact_low_rank(r):
    def step(X):
        L, s = linalg.best_rank_approx(X, r)
        return L, min(r, linalg.numerical_rank(s))
    return step


def _brp_low_rank(r, q, rng):
    def step(X):
        return linalg.brp_lowrank(X, r, q=q, rng=rng), r
    return step


def _low_rank_step(cfg):
    if cfg.brp:
        return _brp_low_rank(cfg.rank_bound, cfg.power_iters, np.random.default_rng(cfg.seed))
    return _exact_low_rank(cfg.rank_bound)


def godec(A, cfg, callback=None):
    """GoDec: min ``||A - L - S||_F^2`` with ``rank(L) <= r`` and ``card(S) <= k``.

    ``cfg.brp`` swaps the exact truncated SVD for bilateral random projection.
    """
    A, cfg = _resolve(A, cfg, "godec")
    k = cfg.cardinality
    return _alternate(A, cfg, _low_rank_step(cfg),
                      lambda X: linalg.hard_threshold_top_k(X, k), callback=callback)


def semi_soft_godec(A, cfg, callback=None):
    """GoDec with the sparse step replaced by soft thresholding at ``soft_tau``."""
    A, cfg = _resolve(A, cfg, "ssgodec")
    tau = cfg.soft_tau
    return _alternate(A, cfg, _low_rank_step(cfg), lambda X: linalg.shrink(X, tau),
                      callback=callback)


def drmf(A, cfg, callback=None):
    """Direct robust matrix factorization by block coordinate descent.

    The clean data ``C = A - S`` gets its best rank-``r`` fit, then the ``p``
    largest residuals of ``A - L`` are set aside as outliers. The trace
    records the unsquared objective ``||A - L - S||_F``.
    """
    A, cfg = _resolve(A, cfg, "drmf")
    p = cfg.cardinality
    return _alternate(A, cfg, _exact_low_rank(cfg.rank_bound),
                      lambda E: linalg.hard_threshold_top_k(E, p),
                      squared=False, callback=callback)


SOLVER_FUNCS = {
    "ialm": pcp_ialm,
    "ealm": pcp_ealm,
    "spcp_asalm": spcp_asalm,
    "godec": godec,
    "ssgodec": semi_soft_godec,
    "drmf": drmf,
}


def decompose(A, cfg, callback=None):
    """Run the solver named by ``cfg.solver``."""
    try:
        func = SOLVER_FUNCS[cfg.solver]
    except KeyError:
        raise ConfigError(f"unknown solver {cfg.solver!r}; expected one of "
                          f"{', '.join(SOLVER_FUNCS)}") from None
    return func(A, cfg, callback=callback)
