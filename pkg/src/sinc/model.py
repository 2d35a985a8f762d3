"""Shared domain types, hyperparameters and input validation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateColumn,
    DimensionMismatch,
    InvariantViolation,
    NonFiniteEntry,
    ValidationError,
)

SYMMETRY_ATOL = 1e-10


@dataclass(frozen=True)
class CountMatrix:
    """n x p table of nonnegative integer counts, one row per sample."""

    values: np.ndarray
    names: Optional[Sequence[str]] = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValidationError(f"count matrix must be 2-D, got shape {v.shape}")
        if v.dtype.kind == "f":
            if not np.all(np.isfinite(v)):
                raise NonFiniteEntry("count matrix contains non-finite entries")
            if np.any(v != np.round(v)):
                raise ValidationError("count matrix contains non-integer entries")
        elif v.dtype.kind not in "iub":
            raise ValidationError(f"count matrix has unsupported dtype {v.dtype}")
        if np.any(v < 0):
            raise ValidationError("count matrix contains negative entries")
        object.__setattr__(self, "values", v.astype(np.int64))
        if self.names is not None and len(self.names) != v.shape[1]:
            raise DimensionMismatch("number of count column names differs from p")

    @property
    def shape(self):
        return self.values.shape

    @property
    def row_totals(self) -> np.ndarray:
        return self.values.sum(axis=1)


@dataclass(frozen=True)
class CovariateMatrix:
    """n x q covariates, stored both raw and column-standardised.

    ``values`` holds the scaled matrix used by the fit (each column centred,
    sample sd 1). ``raw`` keeps the input so coefficients can be mapped back.
    """

    values: np.ndarray
    column_names: Sequence[str]
    raw: np.ndarray
    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_raw(cls, raw, column_names=None) -> "CovariateMatrix":
        raw = np.asarray(raw, dtype=float)
        if raw.ndim == 1:
            raw = raw[:, None]
        if raw.ndim != 2:
            raise ValidationError(f"covariate matrix must be 2-D, got shape {raw.shape}")
        q = raw.shape[1]
        if column_names is None:
            column_names = [f"M{k + 1}" for k in range(q)]
        if len(column_names) != q:
            raise DimensionMismatch("number of covariate names differs from q")
        if q == 0:
            zeros = np.zeros(0)
            return cls(raw.copy(), list(column_names), raw, zeros, zeros)
        if not np.all(np.isfinite(raw)):
            raise NonFiniteEntry("covariate matrix contains non-finite entries")
        center = raw.mean(axis=0)
        scale = raw.std(axis=0, ddof=1) if raw.shape[0] > 1 else np.zeros(q)
        constant = np.flatnonzero(~(scale > 0))
        if constant.size:
            k = int(constant[0])
            raise DegenerateColumn(f"covariate column {k + 1} is constant", column=k)
        return cls((raw - center) / scale, list(column_names), raw, center, scale)

    @classmethod
    def empty(cls, n: int) -> "CovariateMatrix":
        return cls.from_raw(np.zeros((n, 0)))

    @property
    def shape(self):
        return self.values.shape


@dataclass
class LatentState:
    """Latent Gaussian layer Z; the Dirichlet concentrations are exp(Z)."""

    Z: np.ndarray

    def __post_init__(self):
        self.Z = np.array(self.Z, dtype=float)
        if not np.all(np.isfinite(self.Z)):
            raise InvariantViolation("latent matrix contains non-finite entries")

    @property
    def alpha(self) -> np.ndarray:
        return np.exp(self.Z)


@dataclass
class RegressionState:
    """Variational spike-and-slab parameters for the q x p coefficient matrix.

    ``sigma`` are slab variances, ``phi`` inclusion probabilities. ``B`` holds
    mu * phi while iterating and the median-model estimate after
    :func:`sinc.regression.finalize_coefficients`.
    """

    mu: np.ndarray
    sigma: np.ndarray
    phi: np.ndarray
    B: np.ndarray
    B0: np.ndarray
    theta_gamma: np.ndarray
    finalized: bool = False

    @classmethod
    def initial(cls, q: int, p: int, B0=None, slab_variance: float = 1.0,
                theta: float = 0.5) -> "RegressionState":
        return cls(
            mu=np.zeros((q, p)),
            sigma=np.full((q, p), float(slab_variance)),
            phi=np.zeros((q, p)),
            B=np.zeros((q, p)),
            B0=np.zeros(p) if B0 is None else np.array(B0, dtype=float),
            theta_gamma=np.full(p, theta),
        )

    def check(self):
        if np.any(self.phi < 0) or np.any(self.phi > 1):
            raise InvariantViolation("inclusion probabilities outside [0, 1]")
        if np.any(self.sigma <= 0):
            raise InvariantViolation("slab variances must be positive")
        if np.any(self.theta_gamma <= 0) or np.any(self.theta_gamma >= 1):
            raise InvariantViolation("inclusion rates must lie in (0, 1)")

    def copy(self) -> "RegressionState":
        return RegressionState(
            self.mu.copy(), self.sigma.copy(), self.phi.copy(), self.B.copy(),
            self.B0.copy(), self.theta_gamma.copy(), self.finalized,
        )


def check_precision(omega: np.ndarray) -> None:
    """Raise InvariantViolation unless ``omega`` is symmetric positive definite."""
    omega = np.asarray(omega)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise InvariantViolation(f"precision matrix must be square, got {omega.shape}")
    if not np.all(np.isfinite(omega)):
        raise InvariantViolation("precision matrix has non-finite entries")
    asym = np.max(np.abs(omega - omega.T)) if omega.size else 0.0
    if asym >= SYMMETRY_ATOL:
        raise InvariantViolation(f"precision matrix asymmetric (max gap {asym:.3g})")
    if omega.size and np.linalg.eigvalsh(omega)[0] <= 0:
        raise InvariantViolation("precision matrix is not positive definite")


@dataclass
class NetworkState:
    """Precision matrix plus the E-step edge quantities and scalar rates."""

    omega: np.ndarray
    p_star: np.ndarray
    d_star: np.ndarray
    pi: float = 0.5
    tau: float = 1.0

    def __post_init__(self):
        self.omega = np.array(self.omega, dtype=float)
        check_precision(self.omega)

    @classmethod
    def from_precision(cls, omega, pi: float = 0.5, tau: float = 1.0) -> "NetworkState":
        omega = np.array(omega, dtype=float)
        p = omega.shape[0]
        return cls(omega, np.zeros((p, p)), np.zeros((p, p)), pi, tau)

    def copy(self) -> "NetworkState":
        return NetworkState(self.omega.copy(), self.p_star.copy(), self.d_star.copy(),
                            self.pi, self.tau)


@dataclass(frozen=True)
class Hyperparameters:
    """Prior settings. Defaults reproduce the simulation study settings.

    ``nuB`` is the slab *variance* of the coefficient prior; ``nu0``/``nu1``
    are the spike/slab standard deviations for off-diagonal precision entries
    and ``lam`` the exponential rate parameter of the diagonal prior.
    """

    nu0: float = 0.01
    nu1: float = 10.0
    lam: float = 150.0
    nuB: float = 1.0
    a_gamma: float = 2.0
    b_gamma: float = 2.0
    a_pi: float = 2.0
    b_pi: float = 2.0
    a_tau: float = 2.0
    b_tau: float = 2.0
    learn_tau: bool = False

    def __post_init__(self):
        for name in ("nu0", "nu1", "lam", "nuB", "a_gamma", "b_gamma",
                     "a_pi", "b_pi", "a_tau", "b_tau"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"hyperparameter {name} must be positive, got {value}")
        if not self.nu0 < self.nu1:
            raise ValidationError("spike sd nu0 must be smaller than slab sd nu1")

    def with_(self, **changes) -> "Hyperparameters":
        return replace(self, **changes)


RESIDUAL_VARIANCE_MODES = ("conditional", "marginal")


@dataclass(frozen=True)
class FitConfig:
    """Convergence, optimiser and variant settings for one fit."""

    outer_tol: float = 1e-4
    inner_tol: float = 1e-6
    max_outer_iters: int = 200
    max_inner_iters: int = 100
    lbfgs_memory: int = 10
    lbfgs_gtol: float = 1e-5
    lbfgs_max_evals: int = 200
    thread_count: int = 1
    seed: int = 0
    constrain_B_zero: bool = False
    constrain_omega_identity: bool = False
    residual_variance: str = "conditional"
    backend: Optional[str] = None

    def __post_init__(self):
        if not (self.outer_tol > 0 and self.inner_tol > 0 and self.lbfgs_gtol > 0):
            raise ValidationError("tolerances must be positive")
        for name in ("max_outer_iters", "max_inner_iters", "lbfgs_memory",
                     "lbfgs_max_evals", "thread_count"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in an unsigned 64-bit integer")
        if self.constrain_B_zero and self.constrain_omega_identity:
            raise ValidationError("constrain_B_zero and constrain_omega_identity are exclusive")
        if self.residual_variance not in RESIDUAL_VARIANCE_MODES:
            raise ValidationError(f"residual_variance must be one of {RESIDUAL_VARIANCE_MODES}")

    def with_(self, **changes) -> "FitConfig":
        return replace(self, **changes)


@dataclass
class FitResult:
    regression: RegressionState
    network: NetworkState
    latent: LatentState
    elbo_trace: list
    selected_adjacency: np.ndarray
    selected_coefficients: np.ndarray
    iterations: int
    converged: bool
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    config: FitConfig = field(default_factory=FitConfig)
    diagnostics: dict = field(default_factory=dict)

    @property
    def edge_sparsity(self) -> float:
        """Fraction of the p(p-1)/2 node pairs selected as edges."""
        p = self.selected_adjacency.shape[0]
        pairs = p * (p - 1) // 2
        if pairs == 0:
            return 0.0
        return float(np.triu(self.selected_adjacency, 1).sum()) / pairs


def validate_inputs(X: CountMatrix, M: CovariateMatrix) -> None:
    """Reject inputs the model cannot be fitted to.

    Raises DimensionMismatch, DegenerateColumn or NonFiniteEntry.
    """
    counts = np.asarray(X.values)
    raw = np.asarray(M.raw, dtype=float)
    if counts.shape[0] != raw.shape[0]:
        raise DimensionMismatch(
            f"counts have {counts.shape[0]} rows but covariates have {raw.shape[0]}")
    if not np.all(np.isfinite(counts)) or not np.all(np.isfinite(raw)):
        raise NonFiniteEntry("inputs contain non-finite entries")
    if not np.all(np.isfinite(M.values)):
        raise NonFiniteEntry("scaled covariates contain non-finite entries")
    zero_cols = np.flatnonzero(counts.sum(axis=0) == 0)
    if zero_cols.size:
        j = int(zero_cols[0])
        raise DegenerateColumn(f"count column {j + 1} is all zeros", column=j)
    if raw.shape[1]:
        spread = raw.max(axis=0) - raw.min(axis=0)
        const = np.flatnonzero(spread == 0)
        if const.size:
            k = int(const[0])
            raise DegenerateColumn(f"covariate column {k + 1} is constant", column=k)
