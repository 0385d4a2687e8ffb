"""Quadratic-activation neural tangent kernels.

Two constructions of the same kernel:

* ``discrete_kernel`` - the Monte-Carlo form over m frozen Gaussian weight
  vectors, entry(i, j) = (1/m) sum_r (w_r . x_i)(w_r . x_j)(x_i . x_j).
* ``continuous_kernel`` - its expectation, sigma^2 (x_i . x_j)^2.

``kernel_vector`` evaluates the kernel function between a query point and
every training row using the identical arithmetic path as the matrix
construction, so kernel_vector(x_i, data, w)[j] == discrete kernel entry(i, j)
bit-for-bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linalg import SymMatrix, eigen_extremes
from .rng import RngStream

__all__ = [
    "Dataset",
    "WeightMatrix",
    "KernelMatrix",
    "sample_weights",
    "discrete_kernel",
    "continuous_kernel",
    "kernel_vector",
    "normalize_rows",
]

# Slack accepted when validating row norms against bound_B; rounding in norm
# computation must not reject rows that satisfy the bound by construction.
_NORM_RTOL = 1e-9

KERNEL_KINDS = ("discrete", "continuous", "privatized")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with labels and a stated L2 row bound.

    Attributes:
        features: (n, d) float64 matrix, row i is the i-th point.
        labels: (n, c) float64 matrix; c = 1 for binary +/-1 labels,
            c = number of classes for one-hot labels.
        bound_B: stated bound with ||x_i||_2 <= bound_B for every row.
            The bound is supplied by the caller, never inferred silently,
            because it enters every sensitivity formula.
    """

    features: np.ndarray
    labels: np.ndarray
    bound_B: float

    def __post_init__(self) -> None:
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labs = np.ascontiguousarray(self.labels, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValueError(f"features must be a non-empty 2-D matrix, got {feats.shape}")
        if labs.ndim == 1:
            labs = labs.reshape(-1, 1)
        if labs.shape[0] != feats.shape[0]:
            raise ValueError("labels must have one row per data point")
        if not np.all(np.isfinite(feats)) or not np.all(np.isfinite(labs)):
            raise ValueError("features and labels must be finite")
        if not (self.bound_B > 0):
            raise ValueError("bound_B must be positive")
        norms = np.linalg.norm(feats, axis=1)
        limit = self.bound_B * (1.0 + _NORM_RTOL) + 1e-12
        if np.any(norms > limit):
            worst = float(norms.max())
            raise ValueError(f"row norm {worst:.6g} exceeds bound_B={self.bound_B:.6g}")
        feats.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class WeightMatrix:
    """m frozen Gaussian weight vectors, drawn once and never resampled."""

    weights: np.ndarray
    sigma: float
    seed_record: str = ""

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError(f"weights must be a non-empty 2-D matrix, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


class KernelMatrix:
    """Symmetric PSD kernel matrix with lazily cached eigen extremes."""

    def __init__(self, matrix: SymMatrix, kind: str):
        if kind not in KERNEL_KINDS:
            raise ValueError(f"kind must be one of {KERNEL_KINDS}, got {kind!r}")
        self.matrix = matrix
        self.kind = kind

    @cached_property
    def _extremes(self) -> tuple[float, float]:
        return eigen_extremes(self.matrix)

    @property
    def eta_min(self) -> float:
        return self._extremes[0]

    @property
    def eta_max(self) -> float:
        return self._extremes[1]

    @property
    def order(self) -> int:
        return self.matrix.order


def sample_weights(m: int, d: int, sigma: float, rng: RngStream) -> WeightMatrix:
    """Draw an (m, d) weight matrix with i.i.d. N(0, sigma^2) entries.

    sigma = 0 is allowed as the degenerate all-zero case.
    """
    if m < 1 or d < 1:
        raise ValueError("m and d must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    stream = rng.substream("weights")
    w = sigma * stream.generator().standard_normal((m, d))
    return WeightMatrix(weights=w, sigma=float(sigma), seed_record="/".join(stream.path))


def _projections(features: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """(m, n) matrix of projections w_r . x_i, columns contiguous.

    Column i is computed with the same matrix-vector product used for an
    arbitrary query point, which is what makes kernel_vector consistent
    with the kernel matrix at the bit level.
    """
    m, n = weights.shape[0], features.shape[0]
    proj = np.empty((m, n), order="F")
    for i in range(n):
        proj[:, i] = weights @ features[i]
    return proj


def _kernel_components(
    p: np.ndarray, proj: np.ndarray, features: np.ndarray, x: np.ndarray, m: int
) -> np.ndarray:
    # Reductions use elementwise products + np.sum, whose per-output order is
    # fixed by array shape alone; this makes entry (i, j) and entry (j, i)
    # bit-identical and query/matrix paths interchangeable.
    return (p[:, None] * proj).sum(axis=0) * (features * x).sum(axis=1) / m


def discrete_kernel(data: Dataset, w: WeightMatrix) -> KernelMatrix:
    """Monte-Carlo quadratic NTK matrix for the dataset under fixed weights.

    Uses the nested-inner-product identity
    <<w, a> a, <w, b> b> = (w . a)(w . b)(a . b)
    with the (m, n) projection matrix precomputed once: O(mnd + n^2 m)
    instead of the naive O(n^2 m d).
    """
    if data.dim != w.dim:
        raise ValueError(f"feature dim {data.dim} != weight dim {w.dim}")
    feats = data.features
    proj = _projections(feats, w.weights)
    n = data.n
    h = np.empty((n, n))
    for i in range(n):
        h[i] = _kernel_components(proj[:, i], proj, feats, feats[i], w.m)
    return KernelMatrix(SymMatrix(h), kind="discrete")


def continuous_kernel(data: Dataset, sigma: float) -> KernelMatrix:
    """Closed-form kernel sigma^2 (x_i . x_j)^2, the weight-expectation of the
    discrete kernel. PSD as the elementwise square of a Gram matrix."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    feats = data.features
    n = data.n
    h = np.empty((n, n))
    for i in range(n):
        g = (feats * feats[i]).sum(axis=1)
        h[i] = (sigma * sigma) * g * g
    return KernelMatrix(SymMatrix(h), kind="continuous")


def kernel_vector(x: np.ndarray, data: Dataset, w: WeightMatrix) -> np.ndarray:
    """Kernel function values between a query x and every training row.

    Component j equals (1/m) sum_r (w_r . x)(w_r . x_j)(x . x_j), computed on
    the identical arithmetic path as discrete_kernel, so feeding a training
    row back in reproduces the corresponding matrix row exactly.

    Queries outside the stated B-ball are allowed but warn: predictions stay
    well-defined, the utility bounds just no longer apply.
    """
    q = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    if q.shape[0] != data.dim:
        raise ValueError(f"query dim {q.shape[0]} != feature dim {data.dim}")
    if data.dim != w.dim:
        raise ValueError(f"feature dim {data.dim} != weight dim {w.dim}")
    norm = float(np.linalg.norm(q))
    if norm > data.bound_B * (1.0 + _NORM_RTOL):
        warnings.warn(
            f"query norm {norm:.6g} exceeds bound_B={data.bound_B:.6g}; "
            "utility bounds assume queries inside the B-ball",
            stacklevel=2,
        )
    proj = _projections(data.features, w.weights)
    return _kernel_components(w.weights @ q, proj, data.features, q, w.m)


def normalize_rows(data: Dataset) -> Dataset:
    """Rescale every feature row to unit L2 norm and set bound_B = 1."""
    norms = np.linalg.norm(data.features, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a dataset containing a zero row")
    feats = data.features / norms[:, None]
    return Dataset(features=feats, labels=data.labels, bound_B=1.0)
