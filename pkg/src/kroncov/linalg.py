"""Dense symmetric positive definite linear algebra.

Everything here works on small dense matrices (a few hundred rows at most).
Functions accept either :class:`SpdMatrix` or a plain ndarray and return
:class:`SpdMatrix` where the result is guaranteed SPD.
"""
from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch, InvalidSpdMatrix

SYM_TOL = 1e-12
# smallest eigenvalue must exceed this fraction of the spectral norm
PD_REL_TOL = 1e-12


def sym(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


class SpdMatrix:
    """Immutable, validated symmetric positive definite matrix.

    The stored entries are the symmetrized copy ``(A + A^T) / 2`` of the
    input and are marked read-only.

    Parameters
    ----------
    entries : array_like of shape (d, d)
    check : bool
        Skip validation when ``False``. Only used internally for results
        that are SPD by construction.
    """

    __slots__ = ("_a",)

    def __init__(self, entries, check=True):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidSpdMatrix(f"expected a non-empty square matrix, got shape {a.shape}")
        if check:
            if not np.all(np.isfinite(a)):
                raise InvalidSpdMatrix("matrix has non-finite entries")
            scale = 1.0 + np.max(np.abs(a))
            if np.max(np.abs(a - a.T)) > SYM_TOL * scale:
                raise InvalidSpdMatrix("matrix is not symmetric")
        a = sym(a)
        if check:
            w = np.linalg.eigvalsh(a)
            if not w[0] > PD_REL_TOL * w[-1] or w[-1] <= 0:
                raise InvalidSpdMatrix(
                    f"matrix is not positive definite (eigenvalues in [{w[0]:.3e}, {w[-1]:.3e}])"
                )
        a.setflags(write=False)
        object.__setattr__(self, "_a", a)

    def __setattr__(self, name, value):
        raise AttributeError("SpdMatrix is immutable")

    @property
    def entries(self) -> np.ndarray:
        return self._a

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._a
        return self._a.astype(dtype)

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"

    def __eq__(self, other):
        if not isinstance(other, SpdMatrix):
            return NotImplemented
        return np.array_equal(self._a, other._a)

    __hash__ = None

    def __mul__(self, c):
        c = float(c)
        if c <= 0:
            raise InvalidSpdMatrix("SPD matrices are only closed under positive scaling")
        return SpdMatrix(c * self._a, check=False)

    __rmul__ = __mul__


def as_array(a) -> np.ndarray:
    if isinstance(a, SpdMatrix):
        return a.entries
    return np.asarray(a, dtype=float)


def eigh(a):
    """Symmetric eigendecomposition of the symmetrized input."""
    return np.linalg.eigh(sym(as_array(a)))


def kron(a, b) -> SpdMatrix:
    """Materialized Kronecker product. Meant for tests and diagnostics."""
    return SpdMatrix(np.kron(as_array(a), as_array(b)), check=False)


def logdet(a) -> float:
    """Natural log-determinant via Cholesky.

    Raises
    ------
    InvalidSpdMatrix
        If the factorization hits a non-positive pivot.
    """
    try:
        c = np.linalg.cholesky(sym(as_array(a)))
    except np.linalg.LinAlgError as exc:
        raise InvalidSpdMatrix("Cholesky factorization failed: non-positive pivot") from exc
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def spd_power(a, t: float) -> SpdMatrix:
    w, u = eigh(a)
    if w[0] <= 0:
        raise InvalidSpdMatrix("spd_power requires a positive definite matrix")
    return SpdMatrix((u * w**t) @ u.T, check=False)


def inverse(a) -> SpdMatrix:
    return spd_power(a, -1.0)


def spectral_norm(a) -> float:
    return float(np.linalg.eigvalsh(sym(as_array(a)))[-1])


def geodesic(p, r, t: float) -> SpdMatrix:
    """Point at parameter ``t`` on the SPD-cone geodesic from ``p`` to ``r``.

    Computes ``p^{1/2} (p^{-1/2} r p^{-1/2})^t p^{1/2}``. Values of ``t``
    outside [0, 1] give the extended geodesic; nothing is clamped.
    """
    p = as_array(p)
    r = as_array(r)
    if p.shape != r.shape:
        raise DimensionMismatch(f"geodesic endpoints differ in shape: {p.shape} vs {r.shape}")
    w, u = eigh(p)
    half = (u * np.sqrt(w)) @ u.T
    ihalf = (u / np.sqrt(w)) @ u.T
    mid = spd_power(ihalf @ r @ ihalf, t).entries
    return SpdMatrix(half @ mid @ half, check=False)


def random_spd(dim: int, rng: np.random.Generator, eps: float = 1e-3) -> np.ndarray:
    """``A^T A + eps I`` with standard Gaussian ``A``."""
    a = rng.standard_normal((dim, dim))
    return a.T @ a + eps * np.eye(dim)
