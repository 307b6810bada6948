"""Sample containers, synthetic data generators and sample statistics.

Vectorization is row-major throughout: ``vec(X) = X.reshape(-1)``. With this
convention ``vec(P X Q) = (P kron Q) vec(X)`` for symmetric ``Q``, so a matrix
normal sample ``P^{1/2} Z Q^{1/2}`` has ``cov(vec X) = P kron Q``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, InvalidSpdMatrix
from .linalg import SpdMatrix, as_array, eigh, spd_power

TAILS = ("gaussian", "student_t", "race")


class SampleSet:
    """Ordered collection of ``n >= 1`` real ``p x q`` matrices.

    Stored as a read-only array of shape ``(n, p, q)``.
    """

    __slots__ = ("_x",)

    def __init__(self, samples):
        x = np.array(samples, dtype=float)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3:
            raise DimensionMismatch(f"samples must have shape (n, p, q), got {x.shape}")
        if x.shape[0] < 1 or x.shape[1] < 1 or x.shape[2] < 1:
            raise DimensionMismatch(f"empty sample set: shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain non-finite entries")
        x.setflags(write=False)
        self._x = x

    @property
    def samples(self) -> np.ndarray:
        return self._x

    @property
    def n(self) -> int:
        return self._x.shape[0]

    @property
    def p(self) -> int:
        return self._x.shape[1]

    @property
    def q(self) -> int:
        return self._x.shape[2]

    def vectors(self) -> np.ndarray:
        """Row-major vectorized samples, shape ``(n, p*q)``."""
        return self._x.reshape(self.n, -1)

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return self._x[i]

    def __iter__(self):
        return iter(self._x)

    def __repr__(self):
        return f"SampleSet(n={self.n}, p={self.p}, q={self.q})"

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return np.array_equal(self._x, other._x)

    __hash__ = None


def as_samples(x) -> np.ndarray:
    if isinstance(x, SampleSet):
        return x.samples
    return SampleSet(x).samples


@dataclass(frozen=True)
class MatrixNormalParams:
    mean: np.ndarray
    row_cov: SpdMatrix
    col_cov: SpdMatrix

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        if not isinstance(self.row_cov, SpdMatrix):
            object.__setattr__(self, "row_cov", SpdMatrix(self.row_cov))
        if not isinstance(self.col_cov, SpdMatrix):
            object.__setattr__(self, "col_cov", SpdMatrix(self.col_cov))
        if m.shape != (self.row_cov.dim, self.col_cov.dim):
            raise DimensionMismatch(
                f"mean shape {m.shape} does not match covariances "
                f"({self.row_cov.dim}, {self.col_cov.dim})"
            )
        object.__setattr__(self, "mean", m)

    @classmethod
    def centered(cls, row_cov, col_cov):
        p = as_array(row_cov).shape[0]
        q = as_array(col_cov).shape[0]
        return cls(np.zeros((p, q)), row_cov, col_cov)


def sample_matrix_normal(params: MatrixNormalParams, n: int, seed) -> SampleSet:
    """Draw ``n`` samples ``M + P^{1/2} Z Q^{1/2}`` with standard normal ``Z``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    p, q = params.mean.shape
    z = rng.standard_normal((n, p, q))
    ph = spd_power(params.row_cov, 0.5).entries
    qh = spd_power(params.col_cov, 0.5).entries
    return SampleSet(params.mean + ph @ z @ qh)


def parse_tail(tag: str):
    """Parse ``gaussian``, ``race`` or ``student_t(nu)`` into ``(name, nu)``."""
    tag = tag.strip().lower().replace("-", "_")
    if tag in ("gaussian", "race", "matrix_normal"):
        return ("gaussian" if tag == "matrix_normal" else tag), None
    if tag.startswith("student_t"):
        rest = tag[len("student_t"):].strip()
        if rest.startswith("(") and rest.endswith(")"):
            nu = float(rest[1:-1])
            if nu <= 0:
                raise ValueError("degrees of freedom must be positive")
            return "student_t", nu
    raise ValueError(f"unknown tail tag {tag!r}")


def sample_elliptical(shape, tail: str, n: int, seed, p: int, q: int, nu: float | None = None) -> SampleSet:
    """Generalized elliptical samples with shape matrix ``shape`` (dim ``p*q``).

    ``tail`` is ``"gaussian"``, ``"student_t"`` (needs ``nu``) or ``"race"``.
    RACE samples are Gaussian draws divided by their Euclidean norm, so
    ``vec(X)`` has unit norm.
    """
    if tail.startswith("student_t(") or tail == "matrix_normal":
        tail, nu = parse_tail(tail)
    if tail not in TAILS:
        raise ValueError(f"unknown tail {tail!r}; expected one of {TAILS}")
    if tail == "student_t" and (nu is None or nu <= 0):
        raise ValueError("student_t tail needs a positive nu")
    s = as_array(shape)
    if s.shape != (p * q, p * q):
        raise DimensionMismatch(f"shape matrix must be {p * q}x{p * q}, got {s.shape}")
    w, u = eigh(s)
    if w[0] <= 0:
        raise InvalidSpdMatrix("shape matrix must be positive definite")
    root = (u * np.sqrt(w)) @ u.T
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, p * q)) @ root
    if tail == "student_t":
        g = g * np.sqrt(nu / rng.chisquare(nu, size=n))[:, None]
    elif tail == "race":
        g = g / np.linalg.norm(g, axis=1, keepdims=True)
    return SampleSet(g.reshape(n, p, q))


def sample_mean(x) -> np.ndarray:
    return as_samples(x).mean(axis=0)


@dataclass(frozen=True)
class ScmResult:
    matrix: np.ndarray
    rank: int
    full_rank: bool


def scm(x, mean=None) -> ScmResult:
    """Sample covariance of ``vec(X_i - mean)``; may be rank deficient."""
    xs = as_samples(x)
    n = xs.shape[0]
    m = np.zeros(xs.shape[1:]) if mean is None else np.asarray(mean, dtype=float)
    if m.shape != xs.shape[1:]:
        raise DimensionMismatch(f"mean shape {m.shape} does not match samples {xs.shape[1:]}")
    v = (xs - m).reshape(n, -1)
    s = v.T @ v / n
    s = 0.5 * (s + s.T)
    d = s.shape[0]
    rank = int(np.linalg.matrix_rank(v)) if np.any(v) else 0
    return ScmResult(s, rank, rank == d)


def centering_basis(n: int) -> np.ndarray:
    """Orthonormal basis of R^n whose last column is ``1/sqrt(n)``.

    Householder reflection swapping ``e_n`` and the normalized ones vector.
    """
    e = np.full(n, 1.0 / np.sqrt(n))
    v = e.copy()
    v[-1] -= 1.0
    return np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)


def center_reduce(x) -> SampleSet:
    """Replace ``n`` samples by ``n - 1`` zero-mean-equivalent samples.

    For every SPD operator ``A`` on vec-space,
    ``mean_i (A vec(X_i - Xbar), vec(X_i - Xbar))`` equals
    ``mean_j (A vec(Z_j), vec(Z_j))`` over the returned ``Z``.
    """
    xs = as_samples(x)
    n = xs.shape[0]
    if n < 2:
        raise ValueError("center_reduce needs at least two samples")
    f = centering_basis(n)[:, :-1]
    y = np.einsum("ji,jab->iab", f, xs)
    return SampleSet(np.sqrt((n - 1) / n) * y)
