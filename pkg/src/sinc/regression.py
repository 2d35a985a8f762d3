"""Variational spike-and-slab regression of the latent columns on covariates.

For a response column y = Z_j - B0_j with residual variance s (``sigma_star``)
each coefficient has the mean-field factor

    q(B_k, gamma_k) = phi_k N(B_k | mu_k, sigma_k)  if gamma_k = 1,
                      (1 - phi_k) delta_0(B_k)      otherwise,

and the slab prior is N(0, nuB * s). Coordinate updates below are the exact
maximisers of the column ELBO (see :func:`column_elbo`) in (mu_k, sigma_k,
phi_k), so every sweep is an ascent step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit, logit

from .errors import NonConvergenceWarning
from .model import FitConfig, RegressionState

PHI_CLAMP = 1e-12


@dataclass
class ColumnRegressionProblem:
    """Data for the VI sweep of one response column.

    ``nuB`` is the slab variance in units of ``sigma_star_j``. ``MtM`` and
    ``Mty`` are computed on demand when not supplied.
    """

    z_col: np.ndarray
    M: np.ndarray
    sigma_star_j: float
    theta_gamma_j: float
    b0_j: float = 0.0
    nuB: float = 1.0
    MtM: Optional[np.ndarray] = None
    MtM_diag: np.ndarray = field(init=False)
    Mty: np.ndarray = field(init=False)

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        self.z_col = np.asarray(self.z_col, dtype=float)
        if not self.sigma_star_j > 0:
            raise ValueError("residual variance sigma_star_j must be positive")
        if self.M.shape[0] != self.z_col.shape[0]:
            raise ValueError("response and design have different row counts")
        if self.MtM is None:
            self.MtM = self.M.T @ self.M
        self.MtM_diag = np.diag(self.MtM).copy()
        self.Mty = self.M.T @ (self.z_col - self.b0_j)

    @property
    def q(self) -> int:
        return self.M.shape[1]


def update_sigma_entry(prob: ColumnRegressionProblem, k: int) -> float:
    """Slab variance of coefficient k: s / ((M'M)_kk + 1/nuB)."""
    return prob.sigma_star_j / (prob.MtM_diag[k] + 1.0 / prob.nuB)


def update_mu_entry(prob: ColumnRegressionProblem, k: int, mu, phi, sigma_kj: float) -> float:
    """Slab mean of coefficient k given the current means of all other coefficients."""
    r = np.asarray(phi) * np.asarray(mu)
    cross = prob.MtM[k] @ r - prob.MtM[k, k] * r[k]
    return sigma_kj / prob.sigma_star_j * (prob.Mty[k] - cross)


def update_phi_entry(prob: ColumnRegressionProblem, k: int, mu_kj: float, sigma_kj: float) -> float:
    """Posterior inclusion probability of coefficient k."""
    odds = (logit(prob.theta_gamma_j)
            + 0.5 * np.log(sigma_kj / (prob.nuB * prob.sigma_star_j))
            + mu_kj * mu_kj / (2.0 * sigma_kj))
    return float(np.clip(expit(odds), PHI_CLAMP, 1.0 - PHI_CLAMP))


def _xlogx_ratio(a, b):
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    pos = a > 0
    out[pos] = a[pos] * np.log(a[pos] / np.broadcast_to(b, a.shape)[pos])
    return out


def column_elbo(prob: ColumnRegressionProblem, mu, sigma, phi) -> float:
    """Terms of the ELBO that involve one column's variational factors.

    Expected Gaussian log-likelihood of y under q, plus the expected
    spike-and-slab log prior and the entropy of q.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s = prob.sigma_star_j
    y = prob.z_col - prob.b0_j
    n = y.shape[0]
    r = phi * mu
    rss = y @ y - 2.0 * r @ prob.Mty + r @ prob.MtM @ r
    var = phi * (sigma + mu * mu) - r * r
    slab = prob.nuB * s
    theta = prob.theta_gamma_j
    value = -0.5 * n * np.log(2 * np.pi * s) - 0.5 * rss / s
    value -= 0.5 * np.sum(prob.MtM_diag * var) / s
    value += 0.5 * np.sum(phi * (1.0 + np.log(sigma / slab) - (sigma + mu * mu) / slab))
    value -= np.sum(_xlogx_ratio(phi, theta)) + np.sum(_xlogx_ratio(1.0 - phi, 1.0 - theta))
    return float(value)


def sweep_once(prob: ColumnRegressionProblem, mu, sigma, phi):
    """One pass k = 0..q-1 of the coordinate updates, in place."""
    for k in range(prob.q):
        s_k = update_sigma_entry(prob, k)
        m_k = update_mu_entry(prob, k, mu, phi, s_k)
        sigma[k] = s_k
        mu[k] = m_k
        phi[k] = update_phi_entry(prob, k, m_k, s_k)


def vi_sweep_column(prob: ColumnRegressionProblem, state: RegressionState, j: int,
                    cfg: FitConfig = FitConfig(), warn: bool = True):
    """Sweep column j until its ELBO contribution stabilises.

    Returns ``(mu_j, sigma_j, phi_j, sweeps, converged)``; ``state`` is not
    modified. Convergence is a relative ELBO change below ``cfg.inner_tol``.
    """
    mu = state.mu[:, j].copy()
    sigma = state.sigma[:, j].copy()
    phi = state.phi[:, j].copy()
    if prob.q == 0:
        return mu, sigma, phi, 0, True
    previous = column_elbo(prob, mu, sigma, phi)
    converged = False
    sweeps = 0
    while sweeps < cfg.max_inner_iters:
        sweep_once(prob, mu, sigma, phi)
        sweeps += 1
        current = column_elbo(prob, mu, sigma, phi)
        if abs(current - previous) <= cfg.inner_tol * max(abs(current), 1.0):
            converged = True
            break
        previous = current
    if not converged and warn:
        warnings.warn(f"VI sweep for column {j} hit {cfg.max_inner_iters} iterations",
                      NonConvergenceWarning, stacklevel=2)
    return mu, sigma, phi, sweeps, converged


def finalize_coefficients(state: RegressionState) -> RegressionState:
    """Median-model estimate: B = mu where phi > 0.5, else 0."""
    out = state.copy()
    out.B = np.where(state.phi > 0.5, state.mu, 0.0)
    out.finalized = True
    return out


def expected_coefficients(state: RegressionState) -> np.ndarray:
    """E_q[B] = mu * phi, the coefficient estimate used while iterating."""
    return state.mu * state.phi


def coefficient_variance(state: RegressionState) -> np.ndarray:
    """Var_q[B] for every entry."""
    r = state.mu * state.phi
    return state.phi * (state.sigma + state.mu ** 2) - r * r


def residual_variances(omega: np.ndarray, mode: str) -> np.ndarray:
    """Per-column residual variance used by the sweeps.

    'conditional' gives 1/Omega_jj, the variance of Z_j given the other columns;
    'marginal' gives (Omega^-1)_jj.
    """
    if mode == "conditional":
        return 1.0 / np.diag(omega)
    if mode == "marginal":
        return np.diag(np.linalg.inv(omega)).copy()
    raise ValueError(f"unknown residual variance mode {mode!r}")


def vi_step(Z: np.ndarray, M: np.ndarray, state: RegressionState, omega: np.ndarray,
            nuB: float, cfg: FitConfig = FitConfig()):
    """Update every column's (mu, sigma, phi) and set B = mu * phi.

    In 'conditional' mode columns are swept in order j = 0..p-1 against the
    response Z_j - B0_j + sum_{l != j} (Omega_jl / Omega_jj) R_l, where R are
    the current expected residuals; this is exact coordinate ascent of the
    joint ELBO with slab prior N(0, nuB). In 'marginal' mode each column is
    regressed independently on Z_j - B0_j with variance (Omega^-1)_jj and
    slab prior N(0, nuB * (Omega^-1)_jj).

    Returns the new state and a dict of sweep statistics.
    """
    out = state.copy()
    n, p = Z.shape
    q = M.shape[1]
    stats = {"sweeps": 0, "unconverged_columns": 0}
    if q == 0:
        out.B = np.zeros((0, p))
        return out, stats
    MtM = M.T @ M
    s = residual_variances(omega, cfg.residual_variance)
    conditional = cfg.residual_variance == "conditional"
    if conditional:
        R = Z - out.B0 - M @ (out.mu * out.phi)
    for j in range(p):
        if conditional:
            w = omega[j] / omega[j, j]
            w[j] = 0.0
            z_col = Z[:, j] + R @ w
            prob = ColumnRegressionProblem(z_col, M, s[j], out.theta_gamma[j], out.B0[j],
                                           nuB=nuB / s[j], MtM=MtM)
        else:
            prob = ColumnRegressionProblem(Z[:, j], M, s[j], out.theta_gamma[j], out.B0[j],
                                           nuB=nuB, MtM=MtM)
        mu, sigma, phi, sweeps, ok = vi_sweep_column(prob, out, j, cfg, warn=False)
        out.mu[:, j] = mu
        out.sigma[:, j] = sigma
        out.phi[:, j] = phi
        stats["sweeps"] += sweeps
        stats["unconverged_columns"] += int(not ok)
        if conditional:
            R[:, j] = Z[:, j] - out.B0[j] - M @ (mu * phi)
    out.B = out.mu * out.phi
    out.finalized = False
    return out, stats
