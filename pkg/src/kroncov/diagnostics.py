"""Diagnostics for whether the Kronecker fits have a minimum and whether it is unique.

Covers the sample-count thresholds, the exact 2x2 criterion (discriminant
and collinearity witness), rank checks, multi-start uniqueness probing and a
probe of the objective along paths to the boundary of the factor cone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .exceptions import DimensionMismatch, MissingWitness, RankDeficientUpdate
from .gaussian import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    EPS_RANK,
    KroneckerPair,
    gaussian_nll_inverse,
    gff_estimate,
    sandwich_p,
    sandwich_q,
)
from .linalg import SpdMatrix, random_spd
from .robust import DEFAULT_MAX_ITERS as RFF_MAX_ITERS
from .robust import rff_estimate
from .sampling import as_samples

MODES = ("gaussian_unknown_mean", "gaussian_known_mean", "robust")
REGIMES = ("no_unique_minimum", "gap", "unique_minimum")

# zeta for p = q = 2 at sample counts where it is almost surely constant
ZETA_N1 = 1
ZETA_N_GT2 = 2

CLUSTER_TOL = 1e-4
DEGENERATE_D = 1e-6
COLLINEAR_TOL = 1e-9
GRID_POINTS = 10_000
MU_GRID = tuple(10.0**k for k in range(1, 7))


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


# -- thresholds --------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdVerdict:
    regime: str
    lower: float
    upper: float
    theorem: str


def thresholds(p: int, q: int, mode: str):
    """``(lower, upper)`` sample-count thresholds for ``mode``."""
    _check_mode(mode)
    m = max(p / q, q / p)
    s = p / q + q / p
    if mode == "gaussian_unknown_mean":
        return m + 1.0, s + 1.0
    if mode == "gaussian_known_mean":
        return m, s
    return m, m


def threshold_verdict(p: int, q: int, n: int, mode: str) -> ThresholdVerdict:
    """Classify ``n`` against the necessary and sufficient sample counts.

    ``n < lower`` means no unique minimum, ``n > upper`` a unique minimum
    almost surely, anything in between is the gap where both can happen.
    """
    if min(p, q, n) < 1:
        raise ValueError("p, q and n must be positive")
    lower, upper = thresholds(p, q, mode)
    if n < lower:
        regime = "no_unique_minimum"
    elif n > upper:
        regime = "unique_minimum"
    else:
        regime = "gap"
    return ThresholdVerdict(regime, lower, upper, mode)


# -- exact 2x2 criterion ---------------------------------------------------------------

def discriminant_2x2(x1, x2) -> float:
    """Discriminant of the quadratic ``det[X1 t | X2 t] = 0`` in ``t``.

    Non-negative iff some nonzero ``t`` maps to parallel images.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != (2, 2) or x2.shape != (2, 2):
        raise DimensionMismatch("discriminant_2x2 needs two 2x2 matrices")
    (x, y), (u, v) = x1
    (a, b), (c, d) = x2
    det_xa = x * c - a * u
    det_xb = x * d - b * u
    det_ya = y * c - a * v
    det_yb = y * d - b * v
    return float((det_xb + det_ya) ** 2 - 4.0 * det_xa * det_yb)


def is_degenerate_2x2(x1, x2, cutoff: float = DEGENERATE_D) -> bool:
    """``|D|`` too small relative to the sample scale to trust its sign."""
    s = np.sum(np.square(x1)) * np.sum(np.square(x2))
    return abs(discriminant_2x2(x1, x2)) <= cutoff * s


def zeta_2x2(x) -> int:
    """Indicator ``zeta`` for two 2x2 samples: 1 if ``D >= 0`` else 2."""
    xs = as_samples(x)
    if xs.shape != (2, 2, 2):
        raise DimensionMismatch(f"zeta_2x2 needs exactly two 2x2 samples, got shape {xs.shape}")
    return 1 if discriminant_2x2(xs[0], xs[1]) >= 0 else 2


def _collinearity_measure(xs, theta):
    """Second singular value of ``[X_1 t, ..., X_n t]`` over the largest sample norm.

    Uses ``sigma_1 sigma_2 = sqrt(sum_{i<j} det[X_i t | X_j t]^2)``; forming the
    Gram determinant instead would lose half the digits.
    """
    theta = np.atleast_1d(theta)
    t = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    img = np.einsum("iab,kb->kia", xs, t)
    i, j = np.triu_indices(xs.shape[0], 1)
    dets = img[:, i, 0] * img[:, j, 1] - img[:, i, 1] * img[:, j, 0]
    g = np.einsum("kia,kib->kab", img, img)
    tr = g[:, 0, 0] + g[:, 1, 1]
    gap = np.sqrt(((g[:, 0, 0] - g[:, 1, 1]) / 2.0) ** 2 + g[:, 0, 1] ** 2)
    s1 = np.sqrt(tr / 2.0 + gap)
    s1s2 = np.sqrt(np.sum(dets * dets, axis=1))
    s2 = np.divide(s1s2, s1, out=np.zeros_like(s1), where=s1 > 0)
    scale = np.max(np.sqrt(np.einsum("iab,iab->i", xs, xs)))
    return s2 / scale


def _signed_det(xs, theta):
    t = np.array([np.cos(theta), np.sin(theta)])
    a, b = xs[0] @ t, xs[1] @ t
    return float(a[0] * b[1] - a[1] * b[0])


def most_collinear_direction(x, grid_points: int = GRID_POINTS):
    """Unit ``t`` minimizing the collinearity measure, and that minimum.

    Angular grid over ``[0, pi)``, then refinement around the best local minima:
    a bracketed root of ``det[X_1 t | X_2 t]`` when the grid cell shows a sign
    change, bounded scalar minimization otherwise.
    """
    xs = as_samples(x)
    if xs.shape[1:] != (2, 2):
        raise DimensionMismatch("collinearity search needs 2x2 samples")
    h = np.pi / grid_points
    theta = np.arange(grid_points) * h
    vals = _collinearity_measure(xs, theta)
    local = np.flatnonzero((vals <= np.roll(vals, 1)) & (vals <= np.roll(vals, -1)))
    cand = local[np.argsort(vals[local])[:6]]
    best_t, best_v = theta[cand[0]], vals[cand[0]]
    for k in cand:
        lo, hi = theta[k] - h, theta[k] + h
        found = []
        if xs.shape[0] >= 2:
            g = [_signed_det(xs, a) for a in (lo, theta[k], hi)]
            for a, b, ga, gb in ((lo, theta[k], g[0], g[1]), (theta[k], hi, g[1], g[2])):
                if ga == 0.0:
                    found.append(a)
                elif ga * gb < 0:
                    found.append(brentq(lambda th: _signed_det(xs, th), a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps))
        if not found:
            res = minimize_scalar(
                lambda th: float(_collinearity_measure(xs, th)[0]),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-15, "maxiter": 500},
            )
            found.append(res.x)
        for th in found:
            v = float(_collinearity_measure(xs, th)[0])
            if v < best_v:
                best_t, best_v = th, v
    return np.array([np.cos(best_t), np.sin(best_t)]), float(best_v)


def collinearity_oracle(x, tol: float = COLLINEAR_TOL):
    """Unit vector ``t`` with all ``X_i t`` pairwise parallel, or ``None``."""
    t, v = most_collinear_direction(x)
    return t if v <= tol else None


# -- rank check ------------------------------------------------------------------------------

def rank_necessary_check(x, mode: str, eps_rank: float = EPS_RANK) -> bool:
    """Whether both flip-flop updates at ``(I, I)`` are full rank.

    A ``False`` result rules out any fixed point of the estimator.
    """
    _check_mode(mode)
    xs = as_samples(x)
    n, p, q = xs.shape
    y = xs - xs.mean(axis=0) if mode == "gaussian_unknown_mean" else xs
    if mode == "robust":
        norms = np.einsum("iab,iab->i", y, y)
        if np.any(norms == 0):
            return False
        y = y / np.sqrt(norms)[:, None, None]
    for m in (sandwich_p(y, np.eye(q)), sandwich_q(y, np.eye(p))):
        w = np.linalg.eigvalsh(0.5 * (m + m.T))
        if not (w[-1] > 0 and w[0] > eps_rank * w[-1]):
            return False
    return True


# -- multistart --------------------------------------------------------------------------------

def kron_distance(a: KroneckerPair, b: KroneckerPair, projective: bool = False) -> float:
    """Relative Frobenius distance between ``P_a kron Q_a`` and ``P_b kron Q_b``.

    Computed from factor traces without forming the products. With
    ``projective=True`` both products are first scaled to unit Frobenius norm.
    """
    na = np.linalg.norm(a.P) * np.linalg.norm(a.Q)
    nb = np.linalg.norm(b.P) * np.linalg.norm(b.Q)
    cross = np.trace(a.P @ b.P) * np.trace(a.Q @ b.Q)
    if projective:
        d2 = 2.0 - 2.0 * cross / (na * nb)
        return float(np.sqrt(max(d2, 0.0)))
    d2 = na * na + nb * nb - 2.0 * cross
    return float(np.sqrt(max(d2, 0.0)) / na)


@dataclass(frozen=True)
class StartOutcome:
    index: int
    pair: KroneckerPair | None
    objective: float
    status: str
    iterations: int
    residual: float
    objective_trace: tuple = field(repr=False, default=())
    error: str | None = None


@dataclass(frozen=True)
class UniquenessReport:
    """Aggregated multi-start outcome.

    ``cluster_count`` is 0 only when every start failed; ``verdict`` is
    ``unique`` iff all starts converged into one cluster, ``non_unique`` when
    two or more clusters appear, ``inconclusive`` otherwise.
    """

    starts: tuple
    cluster_count: int
    max_objective_spread: float
    diameter: float
    verdict: str
    rank_failures: int

    @property
    def limits(self):
        return [(s.pair, s.objective) for s in self.starts if s.pair is not None]

    @property
    def all_rank_failed(self) -> bool:
        return self.rank_failures == len(self.starts)


def random_init(p: int, q: int, rng: np.random.Generator, normalization: str) -> KroneckerPair:
    P = random_spd(p, rng)
    Q = random_spd(q, rng)
    pair = KroneckerPair(SpdMatrix(P, check=False), SpdMatrix(Q, check=False), "none")
    return pair.normalized(normalization)


def _run_start(xs, mode, init, tol, max_iters):
    if mode == "robust":
        return rff_estimate(xs, init=init, tol=tol, max_iters=max_iters)
    known = None if mode == "gaussian_unknown_mean" else np.zeros(xs.shape[1:])
    return gff_estimate(xs, init=init, known_mean=known, tol=tol, max_iters=max_iters)


def multistart_uniqueness(
    x,
    mode: str,
    k_starts: int = 8,
    seed=0,
    tol: float = DEFAULT_TOL,
    cluster_tol: float = CLUSTER_TOL,
    max_iters: int | None = None,
) -> UniquenessReport:
    """Run the estimator for ``mode`` from ``k_starts`` random inits and cluster the limits.

    Limits are compared on the scale quotient: the Gaussian pairs through their
    Kronecker product, the robust pairs projectively. Estimator errors are
    recorded per start and do not abort the probe.
    """
    _check_mode(mode)
    if k_starts < 2:
        raise ValueError("k_starts must be at least 2")
    xs = as_samples(x)
    n, p, q = xs.shape
    if max_iters is None:
        max_iters = RFF_MAX_ITERS if mode == "robust" else DEFAULT_MAX_ITERS
    norm = "spectral_both" if mode == "robust" else "spectral_p"
    rng = np.random.default_rng(seed)
    inits = [random_init(p, q, rng, norm) for _ in range(k_starts)]

    starts = []
    rank_failures = 0
    for i, init in enumerate(inits):
        try:
            res = _run_start(xs, mode, init, tol, max_iters)
        except RankDeficientUpdate as exc:
            rank_failures += 1
            starts.append(StartOutcome(i, None, float("nan"), "rank_failure", 0, float("nan"), (), str(exc)))
            continue
        starts.append(
            StartOutcome(i, res.pair, res.objective, res.status, res.iterations, res.residual, res.objective_trace)
        )

    projective = mode == "robust"
    ok = [s for s in starts if s.pair is not None]
    reps = []
    for s in ok:
        if not any(kron_distance(r.pair, s.pair, projective) <= cluster_tol for r in reps):
            reps.append(s)
    diameter = max(
        (kron_distance(a.pair, b.pair, projective) for a in ok for b in ok if a.index < b.index),
        default=0.0,
    )
    objs = [s.objective for s in ok]
    spread = float(max(objs) - min(objs)) if objs else float("nan")

    if len(reps) >= 2:
        verdict = "non_unique"
    elif len(reps) == 1 and len(ok) == len(starts) and all(s.status == "converged" for s in ok):
        verdict = "unique"
    else:
        verdict = "inconclusive"
    return UniquenessReport(tuple(starts), len(reps), spread, float(diameter), verdict, rank_failures)


# -- boundary probe ------------------------------------------------------------------------

def _completed_basis(v):
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    return np.array([[v[0], -v[1]], [v[1], v[0]]])


def probe_path(x, t, mu: float):
    """Inverse-parameter pair ``(P, Q)`` on the boundary path at ``mu``.

    In the basis ``{t, t'}`` of the column space, ``Q = diag(mu, 1)``; in the
    basis ``{s, s'}`` with ``s`` along ``X_1 t``, ``P = diag(1/mu, 1)``. The
    product ``P kron Q`` has unit determinant for every ``mu``.
    """
    xs = as_samples(x)
    T = _completed_basis(t)
    img = xs[0] @ T[:, 0]
    if np.linalg.norm(img) == 0:
        nz = [xi @ T[:, 0] for xi in xs if np.linalg.norm(xi @ T[:, 0]) > 0]
        img = nz[0] if nz else np.array([1.0, 0.0])
    S = _completed_basis(img)
    P = S @ np.diag([1.0 / mu, 1.0]) @ S.T
    Q = T @ np.diag([mu, 1.0]) @ T.T
    return P, Q


def boundary_probe_2x2(x, mu_grid=MU_GRID, t=None):
    """Known-mean objective (inverse parameters) along the path of :func:`probe_path`.

    With ``t=None`` the collinearity witness is searched for and
    :class:`MissingWitness` is raised when none exists. Passing ``t``
    explicitly probes that direction whether or not it is a witness.

    Returns
    -------
    list of (mu, objective)
    """
    xs = as_samples(x)
    if xs.shape[1:] != (2, 2):
        raise DimensionMismatch("boundary probe needs 2x2 samples")
    if t is None:
        t = collinearity_oracle(xs)
        if t is None:
            raise MissingWitness("no direction t makes all X_i t parallel")
    out = []
    for mu in mu_grid:
        P, Q = probe_path(xs, t, mu)
        out.append((float(mu), gaussian_nll_inverse((P, Q), xs)))
    return out
