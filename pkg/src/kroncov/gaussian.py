"""Gaussian Kronecker-product MLE via the normalized flip-flop iteration."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, InvalidSpdMatrix, RankDeficientUpdate
from .linalg import SpdMatrix, as_array, logdet, spectral_norm
from .sampling import as_samples, sample_mean

NORMALIZATIONS = ("spectral_p", "spectral_both", "none")
STATUSES = ("converged", "max_iters", "diverged_to_boundary")

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 10_000
EPS_RANK = 1e-10
KAPPA_MAX = 1e12
NORM_TOL = 1e-10


@dataclass(frozen=True)
class KroneckerPair:
    """Factor pair ``(P, Q)`` standing for ``P kron Q``.

    ``normalization`` records which scale convention the pair satisfies:
    ``spectral_p`` (``||P||_2 = 1``), ``spectral_both`` (``||P||_2 = ||Q||_2 = 1``)
    or ``none``.
    """

    p_factor: SpdMatrix
    q_factor: SpdMatrix
    normalization: str = "none"

    def __post_init__(self):
        if not isinstance(self.p_factor, SpdMatrix):
            object.__setattr__(self, "p_factor", SpdMatrix(self.p_factor))
        if not isinstance(self.q_factor, SpdMatrix):
            object.__setattr__(self, "q_factor", SpdMatrix(self.q_factor))
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.normalization in ("spectral_p", "spectral_both"):
            if abs(spectral_norm(self.p_factor) - 1.0) > NORM_TOL:
                raise InvalidSpdMatrix("P factor does not have unit spectral norm")
        if self.normalization == "spectral_both":
            if abs(spectral_norm(self.q_factor) - 1.0) > NORM_TOL:
                raise InvalidSpdMatrix("Q factor does not have unit spectral norm")

    @property
    def p(self) -> int:
        return self.p_factor.dim

    @property
    def q(self) -> int:
        return self.q_factor.dim

    @property
    def P(self) -> np.ndarray:
        return self.p_factor.entries

    @property
    def Q(self) -> np.ndarray:
        return self.q_factor.entries

    def normalized(self, normalization: str) -> "KroneckerPair":
        """Same Kronecker product (or same quotient class) in another convention."""
        P, Q = self.P, self.Q
        a = spectral_norm(P)
        if normalization == "spectral_p":
            return KroneckerPair(SpdMatrix(P / a, check=False), SpdMatrix(a * Q, check=False), normalization)
        if normalization == "spectral_both":
            b = spectral_norm(Q)
            return KroneckerPair(SpdMatrix(P / a, check=False), SpdMatrix(Q / b, check=False), normalization)
        if normalization == "none":
            return KroneckerPair(self.p_factor, self.q_factor, "none")
        raise ValueError(f"unknown normalization {normalization!r}")

    @classmethod
    def identity(cls, p: int, q: int, normalization: str = "spectral_p") -> "KroneckerPair":
        return cls(SpdMatrix(np.eye(p), check=False), SpdMatrix(np.eye(q), check=False), normalization)


@dataclass(frozen=True)
class EstimationResult:
    pair: KroneckerPair
    mean: np.ndarray
    objective_trace: tuple = field(repr=False)
    residual: float
    status: str
    iterations: int

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else float("nan")


def factors(pair):
    """``(P, Q)`` arrays from a :class:`KroneckerPair` or a 2-tuple."""
    if isinstance(pair, KroneckerPair):
        return pair.P, pair.Q
    P, Q = pair
    return as_array(P), as_array(Q)


# -- dense helpers shared with the robust estimator ---------------------------

def spd_eig(a, side: str, eps_rank: float = EPS_RANK):
    """Eigenpairs of a symmetrized update, raising on rank deficiency."""
    a = 0.5 * (a + a.T)
    w, u = np.linalg.eigh(a)
    if not (w[-1] > 0 and w[0] > eps_rank * w[-1]):
        raise RankDeficientUpdate(side, w[0], w[-1])
    return w, u


def inv_from_eig(w, u):
    return (u / w) @ u.T


def sandwich_p(y, qinv):
    """``sum_i Y_i Qinv Y_i^T``."""
    return np.einsum("iab,bc,idc->ad", y, qinv, y)


def sandwich_q(y, pinv):
    """``sum_i Y_i^T Pinv Y_i``."""
    return np.einsum("iba,bc,icd->ad", y, pinv, y)


def _check_dims(y, P, Q):
    if P.shape != (y.shape[1], y.shape[1]) or Q.shape != (y.shape[2], y.shape[2]):
        raise DimensionMismatch(
            f"factor shapes {P.shape}, {Q.shape} do not match samples of shape {y.shape[1:]}"
        )


# -- objective -----------------------------------------------------------------

def gaussian_nll(m, pair, x) -> float:
    """Matrix-normal negative log-likelihood (up to constants and scaling).

    ``mean_i tr(P^{-1} (X_i - M) Q^{-1} (X_i - M)^T) + q ln|P| + p ln|Q|``.
    """
    xs = as_samples(x)
    P, Q = factors(pair)
    _check_dims(xs, P, Q)
    m = np.zeros(xs.shape[1:]) if m is None else np.asarray(m, dtype=float)
    if m.shape != xs.shape[1:]:
        raise DimensionMismatch(f"mean shape {m.shape} does not match samples {xs.shape[1:]}")
    y = xs - m
    n, p, q = y.shape
    pinv = np.linalg.inv(P)
    qinv = np.linalg.inv(Q)
    tr = np.einsum("ab,ibc,cd,iad->", pinv, y, qinv, y) / n
    return float(tr + q * logdet(P) + p * logdet(Q))


def gaussian_nll_inverse(pair, x) -> float:
    """Known-mean objective in inverse parameters: ``mean_i (P X_i Q, X_i) - ln|P kron Q|``.

    Equals ``gaussian_nll(0, (P^{-1}, Q^{-1}), x)``; the boundary analysis
    is easier to read in this form.
    """
    xs = as_samples(x)
    P, Q = factors(pair)
    _check_dims(xs, P, Q)
    n, p, q = xs.shape
    tr = np.einsum("ab,ibc,cd,iad->", P, xs, Q, xs) / n
    return float(tr - q * logdet(P) - p * logdet(Q))


# -- flip-flop -----------------------------------------------------------------

def gff_rhs(pair, y):
    """Right-hand sides of the stationarity system, both evaluated at ``pair``.

    Returns ``(sum_i Y_i Q^{-1} Y_i^T / (q n), sum_i Y_i^T P^{-1} Y_i / (p n))``.
    """
    ys = as_samples(y)
    P, Q = factors(pair)
    _check_dims(ys, P, Q)
    n, p, q = ys.shape
    rp = sandwich_p(ys, np.linalg.inv(Q)) / (q * n)
    rq = sandwich_q(ys, np.linalg.inv(P)) / (p * n)
    return 0.5 * (rp + rp.T), 0.5 * (rq + rq.T)


def _gap(P, Q, rp, rq, both: bool) -> float:
    """Relative Frobenius gap between a pair and its (rescaled) update pair."""
    a = np.linalg.eigvalsh(rp)[-1] / np.linalg.eigvalsh(P)[-1]
    if both:
        b = np.linalg.eigvalsh(rq)[-1] / np.linalg.eigvalsh(Q)[-1]
        rp, rq = rp / a, rq / b
    else:
        rp, rq = rp / a, rq * a
    gp = np.linalg.norm(P - rp) / np.linalg.norm(P)
    gq = np.linalg.norm(Q - rq) / np.linalg.norm(Q)
    return float(max(gp, gq))


def gff_residual(pair, y) -> float:
    """Fixed-point residual of the Gaussian stationarity system.

    The update pair is rescaled as ``(R_P / c, c R_Q)`` so that ``R_P`` has the
    spectral norm of ``P``; an exact fixed point then gives 0.
    """
    P, Q = factors(pair)
    rp, rq = gff_rhs(pair, y)
    return _gap(P, Q, rp, rq, both=False)


def gff_step(pair, y, eps_rank: float = EPS_RANK) -> KroneckerPair:
    """One full flip-flop sweep on centered samples ``y``.

    ``P`` is updated from the current ``Q`` and normalized to unit spectral
    norm; ``Q`` is then updated from the new ``P``. Each half-step is an exact
    block minimization, so the objective never increases.

    Raises
    ------
    RankDeficientUpdate
        If either update is numerically singular.
    """
    ys = as_samples(y)
    P, Q = factors(pair)
    _check_dims(ys, P, Q)
    n, p, q = ys.shape
    w, u = spd_eig(sandwich_p(ys, np.linalg.inv(Q)) / (q * n), "P", eps_rank)
    w = w / w[-1]
    P_new = (u * w) @ u.T
    rq = sandwich_q(ys, inv_from_eig(w, u)) / (p * n)
    spd_eig(rq, "Q", eps_rank)
    return KroneckerPair(SpdMatrix(P_new, check=False), SpdMatrix(0.5 * (rq + rq.T), check=False), "spectral_p")


def gff_estimate(
    x,
    init=None,
    known_mean=None,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    kappa_max: float = KAPPA_MAX,
    eps_rank: float = EPS_RANK,
) -> EstimationResult:
    """Gaussian flip-flop estimate of ``(P, Q)``.

    When ``known_mean`` is ``None`` the sample mean is subtracted first.
    Iterates :func:`gff_step` until :func:`gff_residual` drops to ``tol``,
    ``max_iters`` sweeps are used, or a factor's condition number exceeds
    ``kappa_max`` (status ``diverged_to_boundary``).

    Raises
    ------
    RankDeficientUpdate
    """
    xs = as_samples(x)
    n, p, q = xs.shape
    mean = sample_mean(xs) if known_mean is None else np.asarray(known_mean, dtype=float)
    if mean.shape != (p, q):
        raise DimensionMismatch(f"mean shape {mean.shape} does not match samples ({p}, {q})")
    y = xs - mean
    if init is None:
        init = KroneckerPair.identity(p, q)
    P, Q = factors(init)
    _check_dims(y, P, Q)

    qinv = np.linalg.inv(Q)
    rp = sandwich_p(y, qinv) / (q * n)
    trace = []
    status = "max_iters"
    residual = float("inf")
    it = 0
    while it < max_iters:
        it += 1
        wp, up = spd_eig(rp, "P", eps_rank)
        wp = wp / wp[-1]
        P = (up * wp) @ up.T
        pinv = inv_from_eig(wp, up)
        rq = sandwich_q(y, pinv) / (p * n)
        wq, uq = spd_eig(rq, "Q", eps_rank)
        Q = 0.5 * (rq + rq.T)
        qinv = inv_from_eig(wq, uq)

        tr = np.einsum("ab,ibc,cd,iad->", pinv, y, qinv, y) / n
        trace.append(float(tr + q * np.sum(np.log(wp)) + p * np.sum(np.log(wq))))

        rp = sandwich_p(y, qinv) / (q * n)
        rp = 0.5 * (rp + rp.T)
        residual = _gap(P, Q, rp, Q, both=False)
        if 1.0 / wp[0] > kappa_max or wq[-1] / wq[0] > kappa_max:
            status = "diverged_to_boundary"
            break
        if residual <= tol:
            status = "converged"
            break

    pair = KroneckerPair(SpdMatrix(P, check=False), SpdMatrix(Q, check=False), "spectral_p")
    return EstimationResult(pair, mean, tuple(trace), residual, status, it)
