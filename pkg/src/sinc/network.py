"""E-step and M-step for the precision matrix and the scalar rates.

Off-diagonal precision entries carry a two-component normal mixture prior
with variances nu0^2/tau (spike) and nu1^2/tau (slab); diagonal entries an
exponential prior with rate lam/2. Given the edge posteriors the precision
matrix is updated one column at a time in closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DegenerateDenominator, NonFiniteResult, SingularBlock
from .model import FitConfig, Hyperparameters, NetworkState, check_precision

RATE_CLAMP = 1e-6


def _log_density_gap(omega, nu0: float, nu1: float, tau: float):
    """log N(w | 0, nu0^2/tau) - log N(w | 0, nu1^2/tau), elementwise."""
    w2 = np.square(omega)
    return np.log(nu1) - np.log(nu0) - 0.5 * tau * w2 * (1.0 / nu0 ** 2 - 1.0 / nu1 ** 2)


def edge_posterior(omega, pi: float, tau: float, nu0: float, nu1: float):
    """p* and d* for precision entries ``omega`` (scalar or array).

    p* = pi / (pi + (1 - pi) exp(gap)), so equal component widths give p* = pi
    exactly; d* = tau ((1 - p*)/nu0^2 + p*/nu1^2).
    """
    with np.errstate(over="ignore"):
        ratio = np.exp(_log_density_gap(omega, nu0, nu1, tau))
    p_star = pi / (pi + (1.0 - pi) * ratio)
    d_star = tau * ((1.0 - p_star) / nu0 ** 2 + p_star / nu1 ** 2)
    return p_star, d_star


def _edge_posterior(omega, pi, tau, hp):
    return edge_posterior(omega, pi, tau, hp.nu0, hp.nu1)


def e_step_edge(omega_ij: float, net: NetworkState, hp: Hyperparameters):
    """Posterior edge probability p* and expected reciprocal prior variance d*."""
    p_star, d_star = _edge_posterior(np.float64(omega_ij), net.pi, net.tau, hp)
    return float(p_star), float(d_star)


def e_step(omega: np.ndarray, pi: float, tau: float, hp: Hyperparameters):
    """Matrix form of :func:`e_step_edge`; p* is zero on the diagonal."""
    p_star, d_star = _edge_posterior(np.asarray(omega, dtype=float), pi, tau, hp)
    np.fill_diagonal(p_star, 0.0)
    np.fill_diagonal(d_star, tau / hp.nu0 ** 2)
    if not (np.all(np.isfinite(p_star)) and np.all(np.isfinite(d_star))):
        raise NonFiniteResult(f"edge weights are not finite at tau={tau:.3g}")
    return p_star, d_star


def tau_free_weights(p_star: np.ndarray, hp: Hyperparameters) -> np.ndarray:
    """(1 - p*)/nu0^2 + p*/nu1^2, i.e. d* with the scale tau divided out."""
    return (1.0 - p_star) / hp.nu0 ** 2 + p_star / hp.nu1 ** 2


def update_intercepts(Z, M, B) -> np.ndarray:
    """Column means of Z - M B."""
    Z = np.asarray(Z, dtype=float)
    M = np.asarray(M, dtype=float)
    B = np.asarray(B, dtype=float)
    if M.shape[1] == 0:
        return Z.mean(axis=0)
    return (Z - M @ B).mean(axis=0)


@dataclass
class ResidualScatter:
    """p x p scatter of latent residuals, partitioned per working column."""

    S: np.ndarray

    @classmethod
    def from_residuals(cls, R: np.ndarray, extra_diag=None) -> "ResidualScatter":
        S = R.T @ R
        if extra_diag is not None:
            S[np.diag_indices_from(S)] += extra_diag
        return cls(0.5 * (S + S.T))

    def partition(self, col: int):
        """Return (S11, s12, s22) with column ``col`` moved last."""
        others = np.arange(self.S.shape[0]) != col
        return (self.S[np.ix_(others, others)], self.S[others, col], float(self.S[col, col]))


@dataclass
class OmegaPartition:
    Omega11: np.ndarray
    omega12: np.ndarray
    omega22: float
    C: np.ndarray


def partition_precision(net: NetworkState, scat: "ResidualScatter", col: int,
                        hp: Hyperparameters) -> OmegaPartition:
    """Split Omega around column ``col``.

    C = ((s22 + lam) Omega11^-1 + diag(d*_12))^-1 is the covariance of the
    column's conditional Gaussian; its mean is -C s12.
    """
    others = np.arange(net.omega.shape[0]) != col
    omega11 = net.omega[np.ix_(others, others)]
    _, _, s22 = scat.partition(col)
    system = (s22 + hp.lam) * linalg.inv(omega11)
    system[np.diag_indices_from(system)] += net.d_star[others, col]
    return OmegaPartition(omega11, net.omega[others, col].copy(), float(net.omega[col, col]),
                          linalg.inv(system))


def _column_solve(omega11_inv, s12, s22, d12, n, lam):
    """Closed-form maximiser of the column objective; returns (omega12, omega22, C)."""
    system = (s22 + lam) * omega11_inv
    system[np.diag_indices_from(system)] += d12
    try:
        factor = linalg.cho_factor(system, lower=True, check_finite=True)
        omega12 = -linalg.cho_solve(factor, s12)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularBlock(f"precision column update failed: {exc}") from exc
    omega22 = float(omega12 @ omega11_inv @ omega12) + n / (lam + s22)
    return omega12, omega22, factor


def update_precision_column(net: NetworkState, scat: ResidualScatter, col: int, n: int,
                            hp: Hyperparameters, omega11_inv=None):
    """New (omega12, omega22) for column ``col`` with the rest of Omega fixed.

    omega12 = -((s22 + lam) Omega11^-1 + diag(d*_12))^-1 s12
    omega22 = omega12' Omega11^-1 omega12 + n / (lam + s22)
    """
    p = net.omega.shape[0]
    others = np.arange(p) != col
    _, s12, s22 = scat.partition(col)
    if p == 1:
        return np.zeros(0), n / (hp.lam + s22)
    if omega11_inv is None:
        try:
            omega11_inv = linalg.inv(net.omega[np.ix_(others, others)])
        except linalg.LinAlgError as exc:
            raise SingularBlock(f"cannot invert precision block: {exc}") from exc
    d12 = net.d_star[others, col]
    omega12, omega22, _ = _column_solve(np.array(omega11_inv, dtype=float), s12, s22, d12,
                                        n, hp.lam)
    return omega12, omega22


def _inverse_spd(A):
    try:
        c = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularBlock(f"precision matrix lost positive definiteness: {exc}") from exc
    inv = linalg.cho_solve(c, np.eye(A.shape[0]))
    return 0.5 * (inv + inv.T)


def update_precision(net: NetworkState, scat: ResidualScatter, n: int, hp: Hyperparameters,
                     cfg: FitConfig = FitConfig()):
    """Cycle the column updates over all columns until Omega stops moving.

    p* and d* are held at their values in ``net``. Returns the updated
    network state and the number of cycles run.
    """
    omega = net.omega.copy()
    p = omega.shape[0]
    idx = np.arange(p)
    cycles = 0
    for cycles in range(1, cfg.max_inner_iters + 1):
        before = omega.copy()
        W = _inverse_spd(omega)
        for j in range(p):
            if p == 1:
                omega[0, 0] = n / (hp.lam + scat.S[0, 0])
                W[0, 0] = 1.0 / omega[0, 0]
                continue
            others = idx != j
            w12 = W[others, j]
            A = W[np.ix_(others, others)] - np.outer(w12, w12) / W[j, j]
            _, s12, s22 = scat.partition(j)
            omega12, omega22, _ = _column_solve(A, s12, s22, net.d_star[others, j], n, hp.lam)
            omega[others, j] = omega12
            omega[j, others] = omega12
            omega[j, j] = omega22
            v = n / (hp.lam + s22)
            a = A @ omega12
            W[np.ix_(others, others)] = A + np.outer(a, a) / v
            W[others, j] = -a / v
            W[j, others] = -a / v
            W[j, j] = 1.0 / v
        if np.max(np.abs(omega - before)) < cfg.inner_tol:
            break
    out = NetworkState(omega, net.p_star.copy(), net.d_star.copy(), net.pi, net.tau)
    check_precision(out.omega)
    return out, cycles


def update_theta_gamma(phi: np.ndarray, hp: Hyperparameters) -> np.ndarray:
    """Per-response inclusion rate: (sum_k phi_kj + a - 1) / (q + a + b - 2)."""
    phi = np.asarray(phi, dtype=float)
    q = phi.shape[0]
    theta = (phi.sum(axis=0) + hp.a_gamma - 1.0) / (q + hp.a_gamma + hp.b_gamma - 2.0)
    return np.clip(theta, RATE_CLAMP, 1.0 - RATE_CLAMP)


def update_pi(p_star: np.ndarray, hp: Hyperparameters) -> float:
    """Edge rate from the expected edge count over the p(p-1)/2 pairs."""
    p = p_star.shape[0]
    pairs = p * (p - 1) / 2.0
    expected_edges = np.triu(p_star, 1).sum()
    value = (hp.a_pi + expected_edges - 1.0) / (hp.a_pi + hp.b_pi + pairs - 2.0)
    return float(np.clip(value, RATE_CLAMP, 1.0 - RATE_CLAMP))


def update_tau(omega: np.ndarray, d_star_free: np.ndarray, hp: Hyperparameters,
               tau_prev: float = 1.0) -> float:
    """Closed-form scale update.

    tau = (a_tau - 1 + p(p-1)/2) / (b_tau - 2 + 1/2 sum_{i<j} omega_ij^2 dfree_ij);
    a non-positive denominator keeps ``tau_prev`` and warns.
    """
    if not hp.learn_tau:
        return float(tau_prev)
    p = omega.shape[0]
    iu = np.triu_indices(p, 1)
    num = hp.a_tau - 1.0 + 0.5 * p * (p - 1)
    den = hp.b_tau - 2.0 + 0.5 * np.sum(omega[iu] ** 2 * d_star_free[iu])
    if not den > 0 or not num > 0:
        warnings.warn("scale update denominator is not positive; keeping previous tau",
                      DegenerateDenominator, stacklevel=2)
        return float(tau_prev)
    tau = num / den
    if not np.isfinite(tau):
        raise NonFiniteResult("scale update diverged: tau is not finite")
    return float(tau)
