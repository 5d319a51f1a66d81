"""Singular-value analysis: decomposition, numerical rank, tail energy.

The decomposition contract is algorithm-agnostic: orthonormal singular
vector columns, descending singular values, and reconstruction of the
input, each to 1e-10. LAPACK provides the factorization; a deterministic
sign convention on top makes repeated runs bit-comparable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError, RangeError
from .matrices import Matrix

__all__ = [
    "SpectralDecomposition",
    "svd",
    "singular_values",
    "default_tolerance",
    "numerical_rank",
    "truncated_svd",
    "tail_energy",
]


@dataclass(frozen=True)
class SpectralDecomposition:
    """Thin SVD ``w = U diag(s) V^T`` with ``m = min(rows, cols)`` triplets.

    ``left_vectors`` is d_out x m, ``right_vectors`` is d_in x m, both
    with orthonormal columns; ``singular_values`` is descending and
    nonnegative.
    """

    left_vectors: Matrix
    singular_values: np.ndarray
    right_vectors: Matrix

    def __post_init__(self) -> None:
        vals = np.asarray(self.singular_values, dtype=np.float64)
        vals.setflags(write=False)
        object.__setattr__(self, "singular_values", vals)

    @property
    def m(self) -> int:
        return self.singular_values.size

    def reconstruct(self) -> Matrix:
        u = self.left_vectors.data
        v = self.right_vectors.data
        return Matrix((u * self.singular_values) @ v.T)


def _normalize_signs(u: np.ndarray, vt: np.ndarray) -> None:
    """Flip triplet signs so the first nonzero entry of each left vector
    is nonnegative; an all-zero left column defers to the right vector."""
    for i in range(u.shape[1]):
        col = u[:, i]
        nz = np.nonzero(col)[0]
        if nz.size:
            lead = col[nz[0]]
        else:
            row = vt[i]
            nz = np.nonzero(row)[0]
            lead = row[nz[0]] if nz.size else 1.0
        if lead < 0:
            u[:, i] = -col
            vt[i] = -vt[i]


def svd(w: Matrix) -> SpectralDecomposition:
    """Thin SVD with deterministic signs.

    Raises
    ------
    NumericalError
        If the factorization does not converge; the message carries the
        matrix shape.
    """
    try:
        u, s, vt = scipy.linalg.svd(w.data, full_matrices=False, lapack_driver="gesvd")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"SVD did not converge for shape {w.shape}") from exc
    _normalize_signs(u, vt)
    return SpectralDecomposition(Matrix(u), s, Matrix(vt.T))


def singular_values(w: Matrix) -> np.ndarray:
    """Descending singular values only (no vectors)."""
    try:
        return scipy.linalg.svdvals(w.data)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"SVD did not converge for shape {w.shape}") from exc


def default_tolerance(shape: tuple[int, int], sigma_max: float) -> float:
    """Rank cutoff ``max(rows, cols) * sigma_max * u`` with u the double
    unit roundoff; scale-aware, the usual conservative choice."""
    return max(shape) * float(sigma_max) * np.finfo(np.float64).eps


def _rank_from_values(s: np.ndarray, shape: tuple[int, int], epsilon: float | None) -> int:
    if epsilon is None:
        epsilon = default_tolerance(shape, s[0] if s.size else 0.0)
    if epsilon < 0:
        raise RangeError(f"epsilon must be nonnegative, got {epsilon}")
    return int(np.count_nonzero(s > epsilon))


def numerical_rank(w: Matrix, epsilon: float | None = None) -> int:
    """Count of singular values strictly above ``epsilon``.

    ``epsilon=None`` selects :func:`default_tolerance` for ``w``.
    """
    return _rank_from_values(singular_values(w), w.shape, epsilon)


def truncated_svd(w: Matrix, r: int) -> Matrix:
    """Best rank-``r`` approximation in the Frobenius norm.

    ``r = 0`` gives the zero matrix; ``r`` above ``min(rows, cols)`` is a
    range error.
    """
    m = min(w.shape)
    if not 0 <= r <= m:
        raise RangeError(f"rank {r} out of range 0..{m} for shape {w.shape}")
    if r == 0:
        return Matrix.zeros(w.rows, w.cols)
    dec = svd(w)
    u = dec.left_vectors.data[:, :r]
    v = dec.right_vectors.data[:, :r]
    return Matrix((u * dec.singular_values[:r]) @ v.T)


def tail_energy(w: Matrix, r: int) -> float:
    """Sum of squared singular values beyond index ``r``.

    Equals the squared Frobenius distance from ``w`` to its best rank-r
    approximation; exactly 0.0 at ``r = min(rows, cols)``.
    """
    m = min(w.shape)
    if not 0 <= r <= m:
        raise RangeError(f"rank {r} out of range 0..{m} for shape {w.shape}")
    s = singular_values(w)
    return float(np.sum(s[r:] ** 2))
