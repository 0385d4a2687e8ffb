"""Dense symmetric linear algebra used by every other module.

All operations are pure functions over :class:`SymMatrix`, a thin wrapper
that guarantees bit-exact symmetry and finite entries. Eigendecompositions
are delegated to LAPACK (``numpy.linalg.eigh``), solves of shifted kernels
to a Cholesky factorization (``scipy.linalg``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "SymMatrix",
    "NotPSDError",
    "NotPositiveDefiniteError",
    "default_tol",
    "sym_eigen",
    "eigen_extremes",
    "is_psd",
    "psd_sqrt",
    "spd_solve",
]


class NotPSDError(ValueError):
    """Matrix has an eigenvalue below the allowed negative tolerance."""


class NotPositiveDefiniteError(ValueError):
    """Cholesky factorization hit a non-positive pivot."""


# Relative asymmetry accepted before construction fails. Inputs produced by
# symmetric arithmetic are bit-symmetric already; this guards caller mistakes.
_ASYM_RTOL = 1e-8


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric real matrix with entry(i, j) == entry(j, i) bit-for-bit.

    Construction mirrors the upper triangle onto the lower triangle, so the
    stored entries for i <= j are exactly the caller's values. Inputs whose
    asymmetry exceeds ``_ASYM_RTOL * max(1, ||a||_F)`` are rejected.
    """

    array: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.array, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        scale = max(1.0, float(np.linalg.norm(a)))
        if np.max(np.abs(a - a.T)) > _ASYM_RTOL * scale:
            raise ValueError("matrix is not symmetric within tolerance")
        sym = np.triu(a) + np.triu(a, 1).T
        sym.setflags(write=False)
        object.__setattr__(self, "array", sym)

    @property
    def order(self) -> int:
        return self.array.shape[0]

    def frob_norm(self) -> float:
        return float(np.linalg.norm(self.array))


def _as_array(a: SymMatrix | np.ndarray) -> np.ndarray:
    if isinstance(a, SymMatrix):
        return a.array
    return SymMatrix(np.asarray(a, dtype=np.float64)).array


def default_tol(a: SymMatrix | np.ndarray) -> float:
    """PSD tolerance 1e-8 * max(1, ||a||_F), matching eigensolver perturbation
    at the sizes this package targets."""
    return 1e-8 * max(1.0, float(np.linalg.norm(_as_array(a))))


def sym_eigen(a: SymMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric matrix.

    Returns:
        (eigenvalues ascending, orthonormal eigenvectors as columns) with
        V @ diag(w) @ V.T reconstructing the input.
    """
    arr = _as_array(a)
    w, v = np.linalg.eigh(arr)
    return w, v


def eigen_extremes(a: SymMatrix | np.ndarray) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    w = np.linalg.eigvalsh(_as_array(a))
    return float(w[0]), float(w[-1])


def is_psd(a: SymMatrix | np.ndarray, tol: float | None = None) -> bool:
    """True iff the smallest eigenvalue is >= -tol."""
    if tol is None:
        tol = default_tol(a)
    if tol < 0:
        raise ValueError("tol must be non-negative")
    eta_min, _ = eigen_extremes(a)
    return eta_min >= -tol


def psd_sqrt(a: SymMatrix | np.ndarray, tol: float | None = None) -> SymMatrix:
    """Symmetric square root S of a PSD matrix, S @ S == a up to rounding.

    Eigendecomposition backs the root so exactly singular PSD inputs are
    accepted; eigenvalues in [-tol, 0) are clamped to zero first.

    Raises:
        NotPSDError: if an eigenvalue is below -tol.
    """
    if tol is None:
        tol = default_tol(a)
    if tol < 0:
        raise ValueError("tol must be non-negative")
    w, v = sym_eigen(a)
    if w[0] < -tol:
        raise NotPSDError(f"matrix not PSD: min eigenvalue {w[0]:.3e} < -{tol:.3e}")
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.T
    return SymMatrix(0.5 * (root + root.T))


def spd_solve(a: SymMatrix | np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for symmetric positive definite a via Cholesky.

    Callers guarantee positive definiteness, normally by solving the shifted
    system K + lambda * I with lambda > 0.

    Raises:
        NotPositiveDefiniteError: if the factorization fails.
    """
    arr = _as_array(a)
    rhs = np.asarray(b, dtype=np.float64)
    if rhs.shape[0] != arr.shape[0]:
        raise ValueError(f"shape mismatch: {arr.shape} vs {rhs.shape}")
    try:
        factor = scipy.linalg.cho_factor(arr, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    # C order so a solve and its deserialized copy follow the same BLAS
    # paths downstream (bit-reproducible predictions after save/load).
    return np.ascontiguousarray(scipy.linalg.cho_solve(factor, rhs, check_finite=False))
