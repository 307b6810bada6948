"""Kronecker-constrained Tyler estimator and the unconstrained Tyler baseline."""
from __future__ import annotations

import logging

import numpy as np

from .exceptions import DimensionMismatch, RankDeficientUpdate, ZeroSample
from .gaussian import (
    EPS_RANK,
    KAPPA_MAX,
    EstimationResult,
    KroneckerPair,
    _check_dims,
    _gap,
    factors,
    inv_from_eig,
    spd_eig,
)
from .linalg import SpdMatrix, logdet
from .sampling import as_samples

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 20_000


def check_nonzero(xs):
    norms = np.sqrt(np.einsum("iab,iab->i", xs, xs))
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ZeroSample(f"sample(s) {bad.tolist()} are identically zero")


def _quad_forms(xs, pinv, qinv):
    """``tr(P^{-1} X_i Q^{-1} X_i^T)`` for every sample."""
    return np.einsum("ab,ibc,cd,iad->i", pinv, xs, qinv, xs)


def _weighted_p(xs, qinv, w):
    return np.einsum("i,iab,bc,idc->ad", 1.0 / w, xs, qinv, xs)


def _weighted_q(xs, pinv, w):
    return np.einsum("i,iba,bc,icd->ad", 1.0 / w, xs, pinv, xs)


def robust_nll(pair, x) -> float:
    """Tyler-type objective under the Kronecker constraint.

    ``ln|P kron Q| / (pq) + mean_i ln tr(P^{-1} X_i Q^{-1} X_i^T)``. Invariant
    under ``(P, Q) -> (a P, b Q)`` and under rescaling of the samples up to an
    additive constant.
    """
    xs = as_samples(x)
    check_nonzero(xs)
    P, Q = factors(pair)
    _check_dims(xs, P, Q)
    n, p, q = xs.shape
    t = _quad_forms(xs, np.linalg.inv(P), np.linalg.inv(Q))
    return float((q * logdet(P) + p * logdet(Q)) / (p * q) + np.mean(np.log(t)))


def rff_rhs(pair, x):
    """Both right-hand sides of the robust stationarity system at ``pair``."""
    xs = as_samples(x)
    check_nonzero(xs)
    P, Q = factors(pair)
    _check_dims(xs, P, Q)
    n, p, q = xs.shape
    pinv, qinv = np.linalg.inv(P), np.linalg.inv(Q)
    w = _quad_forms(xs, pinv, qinv)
    rp = _weighted_p(xs, qinv, w) / (q * n)
    rq = _weighted_q(xs, pinv, w) / (p * n)
    return 0.5 * (rp + rp.T), 0.5 * (rq + rq.T)


def rff_residual(pair, x) -> float:
    """Fixed-point residual with each update factor rescaled to the pair's norms.

    The robust system only determines each factor up to scale, so both
    factors are compared after matching spectral norms.
    """
    P, Q = factors(pair)
    rp, rq = rff_rhs(pair, x)
    return _gap(P, Q, rp, rq, both=True)


def _sweep(xs, P, Q, eps_rank):
    n, p, q = xs.shape
    pinv, qinv = np.linalg.inv(P), np.linalg.inv(Q)
    w = _quad_forms(xs, pinv, qinv)
    wp, up = spd_eig(_weighted_p(xs, qinv, w) / (q * n), "P", eps_rank)
    wp = wp / wp[-1]
    P = (up * wp) @ up.T
    pinv = inv_from_eig(wp, up)
    w = _quad_forms(xs, pinv, qinv)
    wq, uq = spd_eig(_weighted_q(xs, pinv, w) / (p * n), "Q", eps_rank)
    wq = wq / wq[-1]
    Q = (uq * wq) @ uq.T
    return P, Q, wp, wq, pinv, inv_from_eig(wq, uq)


def rff_step(pair, x, eps_rank: float = EPS_RANK) -> KroneckerPair:
    """One robust flip-flop sweep with both factors scaled to unit spectral norm.

    ``P`` is refreshed first using Tyler weights at the current pair, then
    ``Q`` with weights recomputed at the new ``P``. Each half-step is a
    majorize-minimize step, so :func:`robust_nll` never increases.
    """
    xs = as_samples(x)
    check_nonzero(xs)
    P, Q = factors(pair)
    _check_dims(xs, P, Q)
    P, Q, *_ = _sweep(xs, P, Q, eps_rank)
    return KroneckerPair(SpdMatrix(P, check=False), SpdMatrix(Q, check=False), "spectral_both")


def rff_estimate(
    x,
    init=None,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    kappa_max: float = KAPPA_MAX,
    eps_rank: float = EPS_RANK,
) -> EstimationResult:
    """Robust flip-flop estimate on samples with known (already removed) mean."""
    xs = as_samples(x)
    check_nonzero(xs)
    n, p, q = xs.shape
    if init is None:
        init = KroneckerPair.identity(p, q, "spectral_both")
    P, Q = factors(init)
    _check_dims(xs, P, Q)

    trace = []
    status = "max_iters"
    residual = float("inf")
    it = 0
    while it < max_iters:
        it += 1
        P, Q, wp, wq, pinv, qinv = _sweep(xs, P, Q, eps_rank)
        t = _quad_forms(xs, pinv, qinv)
        trace.append(float((q * np.sum(np.log(wp)) + p * np.sum(np.log(wq))) / (p * q) + np.mean(np.log(t))))
        rp = _weighted_p(xs, qinv, t) / (q * n)
        rq = _weighted_q(xs, pinv, t) / (p * n)
        residual = _gap(P, Q, 0.5 * (rp + rp.T), 0.5 * (rq + rq.T), both=True)
        if 1.0 / wp[0] > kappa_max or 1.0 / wq[0] > kappa_max:
            status = "diverged_to_boundary"
            break
        if residual <= tol:
            status = "converged"
            break

    pair = KroneckerPair(SpdMatrix(P, check=False), SpdMatrix(Q, check=False), "spectral_both")
    return EstimationResult(pair, np.zeros((p, q)), tuple(trace), residual, status, it)


# -- unconstrained baseline --------------------------------------------------------

def _tyler_rhs(v, T):
    n, d = v.shape
    tinv = np.linalg.inv(T)
    w = np.einsum("ia,ab,ib->i", v, tinv, v)
    rhs = (d / n) * (v.T / w) @ v
    rhs = 0.5 * (rhs + rhs.T)
    return rhs * (d / np.trace(rhs))


def _as_vectors(x):
    v = np.asarray(x.vectors() if hasattr(x, "vectors") else x, dtype=float)
    if v.ndim == 3:
        v = v.reshape(v.shape[0], -1)
    if v.ndim != 2:
        raise DimensionMismatch(f"expected (n, d) vectors, got shape {v.shape}")
    return v


def tyler_residual(T, x) -> float:
    """Relative Frobenius gap between ``T`` and its trace-normalized update."""
    v = _as_vectors(x)
    T = np.asarray(T, dtype=float)
    T = T * (v.shape[1] / np.trace(T))
    return float(np.linalg.norm(_tyler_rhs(v, T) - T) / np.linalg.norm(T))


def tyler_unconstrained(x, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> SpdMatrix:
    """Tyler's scatter estimator on ``n`` vectors in ``R^d``, with ``tr(T) = d``.

    ``x`` is a :class:`SampleSet` (vectorized row-major) or an ``(n, d)`` array.

    Raises
    ------
    RankDeficientUpdate
        If ``n <= d`` or the data do not span ``R^d``.
    """
    v = _as_vectors(x)
    n, d = v.shape
    if n <= d:
        raise RankDeficientUpdate("T", None, None)
    if np.any(np.einsum("ia,ia->i", v, v) == 0):
        raise ZeroSample("Tyler's estimator is undefined for zero samples")
    s = np.linalg.svd(v, compute_uv=False)
    if s[-1] <= EPS_RANK * s[0]:
        raise RankDeficientUpdate("T", float(s[-1] ** 2), float(s[0] ** 2))
    T = np.eye(d)
    for _ in range(max_iters):
        T_new = _tyler_rhs(v, T)
        delta = np.linalg.norm(T_new - T) / np.linalg.norm(T)
        T = T_new
        if delta <= tol:
            break
    else:
        logger.warning("Tyler iteration stopped at max_iters=%d (last step %.3e)", max_iters, delta)
    return SpdMatrix(T)
