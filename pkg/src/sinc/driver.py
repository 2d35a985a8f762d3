"""ELBO evaluation, the coordinate-ascent fitting loop and the nu0 grid.

One outer iteration runs, in order: the VI step for the coefficients, the
E-step for the edge posteriors, then the M-step (intercepts, precision
matrix, inclusion rate, edge rate, scale, latent layer). Every block update
maximises :func:`compute_elbo` in its own variables, so the recorded trace
is non-decreasing apart from rounding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import betaln, gammaln, xlogy

from . import network as net_ops
from . import regression as reg_ops
from .errors import NonFiniteResult
from .likelihood import Z_CLAMP, optimize_latent_detailed
from .model import (
    CountMatrix,
    CovariateMatrix,
    FitConfig,
    FitResult,
    Hyperparameters,
    LatentState,
    NetworkState,
    RegressionState,
    validate_inputs,
)

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2 * np.pi))
DEFAULT_NU0_GRID = tuple(float(v) for v in np.logspace(-4, -1, 20))
DEFAULT_SPARSITY_TARGET = 0.10


@dataclass
class ElboBreakdown:
    dm_term: float
    gaussian_term: float
    b_prior_term: float
    omega_prior_term: float
    edge_prior_term: float
    entropy_term: float

    @property
    def total(self) -> float:
        return (self.dm_term + self.gaussian_term + self.b_prior_term
                + self.omega_prior_term + self.edge_prior_term + self.entropy_term)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "dm_term", "gaussian_term", "b_prior_term", "omega_prior_term",
            "edge_prior_term", "entropy_term")}
        out["total"] = self.total
        return out


def _dm_term(counts: np.ndarray, Z: np.ndarray) -> float:
    alpha = np.exp(np.clip(Z, -Z_CLAMP, Z_CLAMP))
    x = counts.astype(float)
    per_entry = np.where(x > 0, gammaln(alpha + x) - gammaln(alpha), 0.0)
    A = alpha.sum(axis=1)
    N = x.sum(axis=1)
    per_row = per_entry.sum(axis=1) + np.where(N > 0, gammaln(A) - gammaln(A + N), 0.0)
    return float(per_row.sum())


def _log_beta_pdf(x, a, b):
    return xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x) - betaln(a, b)


def _binary_entropy(p):
    return -(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p))


def _slab_variances(omega: np.ndarray, hp: Hyperparameters, cfg: FitConfig) -> np.ndarray:
    p = omega.shape[0]
    if cfg.residual_variance == "conditional":
        return np.full(p, hp.nuB)
    return hp.nuB * reg_ops.residual_variances(omega, "marginal")


def compute_elbo(X, M, latent: LatentState, reg: RegressionState, net: NetworkState,
                 hp: Hyperparameters, cfg: FitConfig = FitConfig()) -> ElboBreakdown:
    """Evaluate the objective at the current state.

    Z, B0, Omega, pi, theta_gamma and tau enter as point values; only the
    coefficients carry a variational distribution. The edge indicators are
    integrated against p*, whose entropy is part of ``edge_prior_term``.
    Constant terms (multinomial coefficients) are dropped.
    """
    counts = X.values if isinstance(X, CountMatrix) else np.asarray(X)
    Mv = M.values if isinstance(M, CovariateMatrix) else np.asarray(M, dtype=float)
    Z = latent.Z
    n, p = Z.shape
    q = Mv.shape[1]
    omega = net.omega
    fixed_b = cfg.constrain_B_zero or q == 0
    fixed_omega = cfg.constrain_omega_identity

    dm = _dm_term(counts, Z)

    Bbar = np.zeros((q, p)) if fixed_b else reg.mu * reg.phi
    R = Z - reg.B0 - Mv @ Bbar
    scatter = R.T @ R
    if not fixed_b:
        var = reg_ops.coefficient_variance(reg)
        scatter[np.diag_indices(p)] += np.sum(Mv * Mv, axis=0) @ var
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        raise NonFiniteResult("precision matrix is not positive definite")
    gaussian = 0.5 * n * logdet - 0.5 * np.sum(omega * scatter) - 0.5 * n * p * LOG_2PI

    b_prior = 0.0
    entropy = 0.0
    if not fixed_b:
        slab = _slab_variances(omega, hp, cfg)[None, :]
        phi, mu, sigma = reg.phi, reg.mu, reg.sigma
        theta = reg.theta_gamma[None, :]
        b_prior = float(np.sum(phi * (-0.5 * np.log(2 * np.pi * slab)
                                      - (mu * mu + sigma) / (2.0 * slab))))
        b_prior += float(np.sum(xlogy(phi, theta) + xlogy(1.0 - phi, 1.0 - theta)))
        b_prior += float(np.sum(_log_beta_pdf(reg.theta_gamma, hp.a_gamma, hp.b_gamma)))
        entropy = float(np.sum(0.5 * phi * np.log(2 * np.pi * np.e * sigma))
                        + np.sum(_binary_entropy(phi)))

    omega_prior = 0.0
    edge_prior = 0.0
    if not fixed_omega:
        iu = np.triu_indices(p, 1)
        w2 = omega[iu] ** 2
        ps = net.p_star[iu]
        tau = net.tau

        def log_normal(var):
            return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * w2 / var

        omega_prior = float(np.sum(ps * log_normal(hp.nu1 ** 2 / tau)
                                   + (1.0 - ps) * log_normal(hp.nu0 ** 2 / tau)))
        diag = np.diag(omega)
        omega_prior += float(np.sum(np.log(hp.lam / 2.0) - 0.5 * hp.lam * diag))
        if hp.learn_tau:
            # scale terms whose maximiser is the closed-form update in network.update_tau
            omega_prior += ((hp.a_tau - 1.0 + p * (p - 1) / 4.0) * np.log(tau)
                            - (hp.b_tau - 2.0) * tau)
        edge_prior = float(np.sum(xlogy(ps, net.pi) + xlogy(1.0 - ps, 1.0 - net.pi)
                                  + _binary_entropy(ps)))
        edge_prior += float(_log_beta_pdf(net.pi, hp.a_pi, hp.b_pi))

    out = ElboBreakdown(dm, float(gaussian), b_prior, omega_prior, edge_prior, entropy)
    if not np.isfinite(out.total):
        raise NonFiniteResult("ELBO is not finite; the fit diverged")
    return out


def initial_precision(Z: np.ndarray) -> np.ndarray:
    """Inverse of the centred latent scatter / n, ridged until it factorises."""
    n, p = Z.shape
    Zc = Z - Z.mean(axis=0)
    sigma = Zc.T @ Zc / n
    jitter = 1e-3 * max(float(np.mean(np.diag(sigma))), 1e-12)
    ridge = 0.0
    for _ in range(60):
        trial = sigma + ridge * np.eye(p)
        try:
            chol = np.linalg.cholesky(trial)
            if np.min(np.diag(chol)) > 1e-8 * np.sqrt(jitter):
                inv = np.linalg.inv(trial)
                return 0.5 * (inv + inv.T)
        except np.linalg.LinAlgError:
            pass
        ridge += jitter
    raise NonFiniteResult("could not initialise the precision matrix")


@dataclass
class _Trace:
    elbo: list = field(default_factory=list)
    breakdowns: list = field(default_factory=list)
    omega_min_eig: list = field(default_factory=list)
    omega_asymmetry: list = field(default_factory=list)
    omega_cycles: list = field(default_factory=list)
    vi_sweeps: list = field(default_factory=list)
    line_search_failures: list = field(default_factory=list)


def fit_once(X, M, hp: Hyperparameters = Hyperparameters(), cfg: FitConfig = FitConfig(),
             callback: Optional[Callable[[int, dict], None]] = None) -> FitResult:
    """Fit the model by iterating VI, E and M steps until the ELBO settles."""
    if not isinstance(X, CountMatrix):
        X = CountMatrix(np.asarray(X))
    if M is None:
        M = CovariateMatrix.empty(X.shape[0])
    elif not isinstance(M, CovariateMatrix):
        M = CovariateMatrix.from_raw(M)
    validate_inputs(X, M)
    counts = X.values
    Mv = M.values
    n, p = counts.shape
    q = Mv.shape[1]
    fixed_b = cfg.constrain_B_zero or q == 0
    fixed_omega = cfg.constrain_omega_identity

    latent = LatentState(np.log(counts + 1.0))
    omega0 = np.eye(p) if fixed_omega else initial_precision(latent.Z)
    a0 = hp.a_pi / (hp.a_pi + hp.b_pi)
    network = NetworkState.from_precision(omega0, pi=a0, tau=1.0)
    reg = RegressionState.initial(q, p, B0=latent.Z.mean(axis=0), slab_variance=hp.nuB)

    trace = _Trace()
    elbo = compute_elbo(X, M, latent, reg, network, hp, cfg)
    trace.elbo.append(elbo.total)
    trace.breakdowns.append(elbo.as_dict())
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_outer_iters + 1):
        # VI step
        if not fixed_b:
            reg, vi_stats = reg_ops.vi_step(latent.Z, Mv, reg, network.omega, hp.nuB, cfg)
            trace.vi_sweeps.append(vi_stats["sweeps"])

        # E step
        if not fixed_omega:
            p_star, d_star = net_ops.e_step(network.omega, network.pi, network.tau, hp)
            network = NetworkState(network.omega, p_star, d_star, network.pi, network.tau)

        # M step
        Bbar = np.zeros((q, p)) if fixed_b else reg.mu * reg.phi
        reg.B = Bbar
        reg.B0 = net_ops.update_intercepts(latent.Z, Mv, Bbar)
        if not fixed_omega:
            R = latent.Z - reg.B0 - Mv @ Bbar
            extra = None if fixed_b else np.sum(Mv * Mv, axis=0) @ reg_ops.coefficient_variance(reg)
            scat = net_ops.ResidualScatter.from_residuals(R, extra)
            network, cycles = net_ops.update_precision(network, scat, n, hp, cfg)
            trace.omega_cycles.append(cycles)
        if not fixed_b:
            reg.theta_gamma = net_ops.update_theta_gamma(reg.phi, hp)
        if not fixed_omega:
            network.pi = net_ops.update_pi(network.p_star, hp)
            if hp.learn_tau:
                network.tau = net_ops.update_tau(
                    network.omega, net_ops.tau_free_weights(network.p_star, hp), hp,
                    tau_prev=network.tau)
        means = reg.B0 + Mv @ Bbar
        latent, report = optimize_latent_detailed(counts, means, network, latent, cfg)
        trace.line_search_failures.append(report.n_line_search_failures)

        eig = np.linalg.eigvalsh(network.omega)[0]
        trace.omega_min_eig.append(float(eig))
        trace.omega_asymmetry.append(float(np.max(np.abs(network.omega - network.omega.T))))

        elbo = compute_elbo(X, M, latent, reg, network, hp, cfg)
        previous = trace.elbo[-1]
        trace.elbo.append(elbo.total)
        trace.breakdowns.append(elbo.as_dict())
        if callback is not None:
            callback(iteration, {"elbo": elbo, "regression": reg, "network": network,
                                 "latent": latent})
        change = abs(elbo.total - previous) / max(abs(previous), 1e-300)
        logger.debug("iteration %d elbo %.10g rel change %.3g", iteration, elbo.total, change)
        if change < cfg.outer_tol:
            converged = True
            break

    # final edge posteriors for the returned precision matrix
    if not fixed_omega:
        p_star, d_star = net_ops.e_step(network.omega, network.pi, network.tau, hp)
        network = NetworkState(network.omega, p_star, d_star, network.pi, network.tau)
    reg.B = reg.mu * reg.phi
    final = reg_ops.finalize_coefficients(reg)

    adjacency = np.zeros((p, p), dtype=bool) if fixed_omega else network.p_star > 0.5
    np.fill_diagonal(adjacency, False)
    adjacency = adjacency & adjacency.T
    selected_b = final.phi > 0.5 if not fixed_b else np.zeros((q, p), dtype=bool)

    diagnostics = {
        "elbo_breakdowns": trace.breakdowns,
        "omega_min_eig": trace.omega_min_eig,
        "omega_asymmetry": trace.omega_asymmetry,
        "omega_cycles": trace.omega_cycles,
        "vi_sweeps": trace.vi_sweeps,
        "line_search_failures": trace.line_search_failures,
    }
    return FitResult(final, network, latent, trace.elbo, adjacency, selected_b, iteration,
                     converged, hp, cfg, diagnostics)


@dataclass
class GridFit:
    nu0: float
    sparsity: float
    elbo: float
    adjacency: np.ndarray
    converged: bool
    iterations: int
    result: Optional[FitResult] = None
    fpr: Optional[float] = None
    tpr: Optional[float] = None


@dataclass
class GridResult:
    nu0_values: list
    fits: list
    selected_index: int
    sparsity_target: float

    @property
    def selected(self) -> GridFit:
        return self.fits[self.selected_index]

    @property
    def roc_points(self):
        return [(f.fpr, f.tpr) for f in self.fits if f.fpr is not None]


def select_by_sparsity(nu0_values: Sequence[float], sparsities: Sequence[float],
                       target: float) -> int:
    """Index of the sparsity closest to ``target``; ties go to the smaller nu0."""
    gaps = [abs(s - target) for s in sparsities]
    best = min(gaps)
    ties = [i for i, g in enumerate(gaps) if g == best]
    return min(ties, key=lambda i: nu0_values[i])


def fit_grid(X, M, hp_base: Hyperparameters = Hyperparameters(), cfg: FitConfig = FitConfig(),
             nu0_grid: Sequence[float] = DEFAULT_NU0_GRID,
             sparsity_target: float = DEFAULT_SPARSITY_TARGET,
             truth_adjacency=None, keep_results: bool = True) -> GridResult:
    """Fit once per nu0 and keep the fit whose edge sparsity is nearest the target.

    With ``truth_adjacency`` each grid point also gets its (FPR, TPR) pair for
    an ROC curve over the grid.
    """
    from .metrics import confusion_edges, scores

    nu0_grid = [float(v) for v in nu0_grid]
    if not nu0_grid:
        raise ValueError("nu0 grid is empty")
    fits = []
    for nu0 in nu0_grid:
        result = fit_once(X, M, hp_base.with_(nu0=nu0), cfg)
        fit = GridFit(nu0, result.edge_sparsity, result.elbo_trace[-1],
                      result.selected_adjacency, result.converged, result.iterations,
                      result if keep_results else None)
        if truth_adjacency is not None:
            s = scores(confusion_edges(result.selected_adjacency, truth_adjacency))
            fit.tpr, fit.fpr = s.tpr, s.fpr
        fits.append(fit)
        logger.info("nu0=%.4g sparsity=%.4f converged=%s", nu0, fit.sparsity, fit.converged)
    index = select_by_sparsity(nu0_grid, [f.sparsity for f in fits], sparsity_target)
    return GridResult(nu0_grid, fits, index, sparsity_target)
