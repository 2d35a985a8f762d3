"""Dirichlet-multinomial likelihood of the latent layer and the Z-step.

Each latent row z_i is scored by the negative log posterior

    f(z) = -DM(x_i | exp(z)) + 1/2 (z - m_i)' Omega (z - m_i)

where m_i = B0 + M_i B and DM is the Dirichlet-multinomial log-likelihood
without its multinomial coefficient. Rows are minimised independently with
L-BFGS; the heavy lifting lives in the backend kernels.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _backend
from .errors import LineSearchWarning, NonFiniteResult, SincWarning
from .model import CountMatrix, FitConfig, LatentState, NetworkState

logger = logging.getLogger(__name__)

Z_CLAMP = 30.0


@dataclass(frozen=True)
class RowObjectiveContext:
    x_row: np.ndarray
    mean_row: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_row, dtype=float)
        m = np.asarray(self.mean_row, dtype=float)
        om = np.asarray(self.omega, dtype=float)
        p = x.shape[0]
        if x.ndim != 1 or m.shape != (p,) or om.shape != (p, p):
            raise ValueError(
                f"inconsistent row context shapes: x {x.shape}, mean {m.shape}, omega {om.shape}")
        object.__setattr__(self, "x_row", x)
        object.__setattr__(self, "mean_row", m)
        object.__setattr__(self, "omega", om)


def dm_kernel_loglik(x_row, z_row) -> float:
    """Dirichlet-multinomial log-likelihood of one count row at alpha = exp(z).

    The multinomial coefficient is omitted since it does not depend on z.
    """
    x = np.asarray(x_row, dtype=float)
    z = np.asarray(z_row, dtype=float)
    if x.shape != z.shape:
        raise ValueError("count and latent rows differ in length")
    with np.errstate(over="ignore"):
        alpha = np.exp(z)
    if not np.all(np.isfinite(alpha)):
        raise NonFiniteResult("exp(z) overflowed while evaluating the likelihood")
    total_a = alpha.sum()
    total_x = x.sum()
    # paired so that one category, or an all-zero row, cancels exactly
    value = ((gammaln(total_a) - np.sum(gammaln(alpha)))
             + (np.sum(gammaln(alpha + x)) - gammaln(total_a + total_x)))
    if not np.isfinite(value):
        raise NonFiniteResult("likelihood evaluation is not finite")
    return float(value)


def _objective_grad(ctx: RowObjectiveContext, z_row, backend=None):
    z = np.asarray(z_row, dtype=float)
    if z.shape != ctx.x_row.shape:
        raise ValueError("latent row has the wrong length")
    if not np.all(np.isfinite(z)):
        raise NonFiniteResult("latent row contains non-finite entries")
    f, g = _backend.resolve(backend).row_objective_grad(ctx.x_row, z, ctx.mean_row, ctx.omega)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NonFiniteResult("row objective is not finite")
    return float(f), np.asarray(g)


def z_objective_row(ctx: RowObjectiveContext, z_row, backend=None) -> float:
    """Per-row negative log posterior of the latent layer (to be minimised)."""
    return _objective_grad(ctx, z_row, backend)[0]


def z_gradient_row(ctx: RowObjectiveContext, z_row, backend=None) -> np.ndarray:
    """Analytic gradient of :func:`z_objective_row`.

    g_j = -alpha_j [psi(alpha_j + x_j) - psi(alpha_j) - psi(A + N) + psi(A)] + [Omega (z - m)]_j
    with A, N the row sums of alpha and x.
    """
    return _objective_grad(ctx, z_row, backend)[1]


@dataclass
class LatentReport:
    status: np.ndarray
    f_start: np.ndarray
    f_end: np.ndarray

    @property
    def n_line_search_failures(self) -> int:
        return int(np.sum(self.status == 2))

    @property
    def n_budget_exhausted(self) -> int:
        return int(np.sum(self.status == 1))


def optimize_latent_detailed(X, means, network: NetworkState, Z_init: LatentState,
                             cfg: FitConfig = FitConfig()):
    """Z-step returning the new latent state and per-row optimiser diagnostics."""
    counts = X.values if isinstance(X, CountMatrix) else np.asarray(X)
    means = np.asarray(means, dtype=float)
    Z0 = np.asarray(Z_init.Z, dtype=float)
    if counts.shape != Z0.shape or means.shape != Z0.shape:
        raise ValueError("counts, means and latent matrix must share a shape")
    kernels = _backend.resolve(cfg.backend)
    Z, status, f0, f1 = kernels.optimize_rows(
        counts.astype(float), means, network.omega, Z0,
        memory=cfg.lbfgs_memory, gtol=cfg.lbfgs_gtol,
        max_evals=cfg.lbfgs_max_evals, n_threads=cfg.thread_count)
    status = np.asarray(status)
    bad = status == 3
    if np.any(bad):
        raise NonFiniteResult(f"latent objective not finite in {int(bad.sum())} rows")
    if np.any(np.abs(Z) >= Z_CLAMP):
        warnings.warn("latent optimum reached the exp() clamp; results may be unreliable",
                      SincWarning, stacklevel=2)
    report = LatentReport(status, np.asarray(f0), np.asarray(f1))
    if report.n_line_search_failures:
        logger.debug("line search failed for %d latent rows", report.n_line_search_failures)
    return LatentState(Z), report


def optimize_latent(X, means, network: NetworkState, Z_init: LatentState,
                    cfg: FitConfig = FitConfig()) -> LatentState:
    """Minimise every row objective by L-BFGS, warm-started from ``Z_init``.

    Rows where the line search fails keep their last accepted iterate and a
    LineSearchWarning is issued; no row objective ever increases.
    """
    latent, report = optimize_latent_detailed(X, means, network, Z_init, cfg)
    if report.n_line_search_failures:
        warnings.warn(f"line search failed for {report.n_line_search_failures} latent rows",
                      LineSearchWarning, stacklevel=2)
    return latent
