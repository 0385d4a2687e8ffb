"""Kernel ridge regression on the quadratic NTK, plain and private.

The plain predictor solves (K + lambda I) alpha = Y once and answers queries
with f(x) = (1/n) K(x, X)^T alpha. The private variant releases the kernel
through the Gaussian sampling mechanism and the features through truncated
Laplace noise before solving, so everything a query touches is already
private and predictions are post-processing.

The 1/n prediction factor is applied on both paths so their outputs are
directly comparable and the utility bound's final normalization holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import Dataset, KernelMatrix, WeightMatrix, discrete_kernel, kernel_vector
from .linalg import SymMatrix, spd_solve
from .privacy import (
    BudgetInfeasibleError,
    ConditionReport,
    DPParams,
    check_dp_conditions,
    compose,
    gaussian_sampling_mechanism,
    privatize_dataset,
)
from .rng import RngStream

__all__ = [
    "NTKModel",
    "PrivateNTKModel",
    "UtilityInputs",
    "fit",
    "predict",
    "fit_private",
    "predict_private",
    "predict_class",
    "inverse_gap_bound",
    "kxX_gap_bound",
    "regression_utility_bound",
]


@dataclass(frozen=True)
class NTKModel:
    """Solved ridge system over the Monte-Carlo kernel."""

    data_ref: Dataset
    weights: WeightMatrix
    lam: float
    alpha: np.ndarray


@dataclass(frozen=True)
class PrivateNTKModel:
    """Private regression state: everything needed to answer queries.

    Only the privatized features are retained; the raw training features are
    deliberately absent so the post-processing structure of predictions is
    auditable from the object itself.
    """

    private_features: Dataset
    weights: WeightMatrix
    lam: float
    private_alpha: np.ndarray
    budget: DPParams
    condition_report: ConditionReport


def fit(
    data: Dataset,
    w: WeightMatrix,
    lam: float,
    *,
    kernel: KernelMatrix | None = None,
) -> NTKModel:
    """Solve (K + lambda I) alpha = Y with K the discrete kernel.

    A precomputed kernel for the same (data, w) may be passed to avoid
    rebuilding it.
    """
    if not (lam > 0):
        raise ValueError("lambda must be positive")
    k = kernel if kernel is not None else discrete_kernel(data, w)
    shifted = SymMatrix(k.matrix.array + lam * np.eye(data.n))
    alpha = spd_solve(shifted, data.labels)
    return NTKModel(data_ref=data, weights=w, lam=lam, alpha=alpha)


def predict(model: NTKModel, x: np.ndarray) -> np.ndarray:
    """f(x) = (1/n) K(x, X)^T alpha, one value per label column."""
    kv = kernel_vector(x, model.data_ref, model.weights)
    return (kv @ model.alpha) / model.data_ref.n


def fit_private(
    data: Dataset,
    w: WeightMatrix,
    lam: float,
    k: int,
    dp_alpha: DPParams,
    dp_x: DPParams,
    beta: float,
    rng: RngStream,
    enforce: bool = True,
    *,
    kernel: KernelMatrix | None = None,
    gamma: float = 0.01,
    c_rho: float = 1.0,
) -> PrivateNTKModel:
    """Fit the private predictor.

    Steps: privatize the kernel with k covariance samples, privatize the
    features with per-entry truncated Laplace noise, solve against the
    private kernel, and compose the two stage budgets. The feasibility
    report is computed first; with ``enforce`` the mechanisms never run on
    an infeasible configuration.

    Raises:
        BudgetInfeasibleError: if ``enforce`` and the conditions fail.
    """
    if not (lam > 0):
        raise ValueError("lambda must be positive")
    kern = kernel if kernel is not None else discrete_kernel(data, w)
    report = check_dp_conditions(
        dp_alpha, k, data.n, w.sigma, data.bound_B, beta, kern.eta_min,
        gamma=gamma, c_rho=c_rho,
    )
    if enforce and not report.feasible:
        raise BudgetInfeasibleError(report)
    private_kernel = KernelMatrix(
        gaussian_sampling_mechanism(kern.matrix, k, rng), kind="privatized"
    )
    private_data = privatize_dataset(data, beta, dp_x, rng)
    shifted = SymMatrix(private_kernel.matrix.array + lam * np.eye(data.n))
    private_alpha = spd_solve(shifted, data.labels)
    return PrivateNTKModel(
        private_features=private_data,
        weights=w,
        lam=lam,
        private_alpha=private_alpha,
        budget=compose([dp_x, dp_alpha]),
        condition_report=report,
    )


def predict_private(model: PrivateNTKModel, x: np.ndarray) -> np.ndarray:
    """f(x) = (1/n) K(x, X_tilde)^T alpha_tilde over the privatized features."""
    kv = kernel_vector(x, model.private_features, model.weights)
    return (kv @ model.private_alpha) / model.private_features.n


def predict_class(model: NTKModel | PrivateNTKModel, x: np.ndarray) -> int:
    """Argmax over the per-class outputs; ties go to the lowest index.

    Binary single-column labels use the sign of the scalar output instead
    and are rejected here.
    """
    if isinstance(model, PrivateNTKModel):
        scores = predict_private(model, x)
    else:
        scores = predict(model, x)
    if scores.shape[0] < 2:
        raise ValueError("predict_class requires >= 2 label columns; use the sign of the scalar output for binary labels")
    return int(np.argmax(scores))


@dataclass(frozen=True)
class UtilityInputs:
    """Quantities entering the theoretical accuracy-loss bounds.

    omega is the kernel-function magnitude cap 6 d sigma^2 B^4 and is always
    derived, never free.
    """

    eta_min: float
    eta_max: float
    lam: float
    rho: float
    omega: float
    b_l: float
    bound_B: float
    dim_d: int
    sigma: float

    def __post_init__(self) -> None:
        expected = 6.0 * self.dim_d * self.sigma * self.sigma * self.bound_B**4
        if not math.isclose(self.omega, expected, rel_tol=1e-12, abs_tol=0.0):
            raise ValueError(f"omega must equal 6 d sigma^2 B^4 = {expected!r}")
        if not (self.eta_min + self.lam > 0):
            raise ValueError("eta_min + lambda must be positive")

    @classmethod
    def build(
        cls,
        eta_min: float,
        eta_max: float,
        lam: float,
        rho: float,
        b_l: float,
        bound_B: float,
        dim_d: int,
        sigma: float,
    ) -> "UtilityInputs":
        return cls(
            eta_min=eta_min,
            eta_max=eta_max,
            lam=lam,
            rho=rho,
            omega=6.0 * dim_d * sigma * sigma * bound_B**4,
            b_l=b_l,
            bound_B=bound_B,
            dim_d=dim_d,
            sigma=sigma,
        )


def inverse_gap_bound(u: UtilityInputs) -> float:
    """Spectral bound rho * eta_max / (eta_min + lambda)^2 on the distance
    between the plain and private shifted-kernel inverses (unit constant)."""
    return u.rho * u.eta_max / (u.eta_min + u.lam) ** 2


def kxX_gap_bound(n: int, u: UtilityInputs) -> float:
    """L2 bound 2 sqrt(n) sigma^2 B^3 sqrt(d) B_L on the kernel-function
    change caused by feature privatization."""
    return 2.0 * math.sqrt(n) * u.sigma * u.sigma * u.bound_B**3 * math.sqrt(u.dim_d) * u.b_l


def regression_utility_bound(u: UtilityInputs) -> float:
    """Prediction-gap bound, the sum of the feature-noise and kernel-noise
    terms (unit constants):

        B^3 sqrt(d) B_L / (eta_min + lambda)
        + rho eta_max omega / (eta_min + lambda)^2
    """
    denom = u.eta_min + u.lam
    term_features = u.bound_B**3 * math.sqrt(u.dim_d) * u.b_l / denom
    term_kernel = u.rho * u.eta_max * u.omega / denom**2
    return term_features + term_kernel
