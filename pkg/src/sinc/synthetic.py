"""Synthetic benchmark data: graphs, precision matrices, covariates and counts.

The generative chain is

    M ~ N(0, 1), column-standardised
    B_kj = U[-1, -0.5] w.p. 0.1, U[0.5, 1] w.p. 0.1, else 0
    B0_j = U[6, 8] w.p. 0.2, else U[2, 4]
    Z_i ~ MVN(B0 + M_i B, Omega^-1),  alpha_i = exp(Z_i)
    h_i ~ Dirichlet(alpha_i),  X_i ~ Multinomial(h_i, round(N(3000, 250)))
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .model import CountMatrix, CovariateMatrix

GRAPH_KINDS = ("band", "cluster", "hub", "random")

SeedLike = Union[int, np.random.Generator, None]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class GraphSpec:
    kind: str
    p: int
    bandwidth: int = 3
    n_hubs: int = 3
    edge_prob: float = 0.025
    within_cluster_prob: float = 0.30
    n_clusters: int = 3

    def __post_init__(self):
        if self.kind not in GRAPH_KINDS:
            raise ValueError(f"graph kind must be one of {GRAPH_KINDS}, got {self.kind!r}")
        if self.p < 1:
            raise ValueError("p must be positive")
        for name in ("bandwidth", "n_hubs", "n_clusters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("edge_prob", "within_cluster_prob"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")


def _groups(p: int, k: int) -> np.ndarray:
    """Group label per node, splitting 0..p-1 into k contiguous near-equal blocks."""
    k = min(k, p)
    return np.repeat(np.arange(k), [len(b) for b in np.array_split(np.arange(p), k)])


def generate_graph(spec: GraphSpec, seed: SeedLike = None) -> np.ndarray:
    """Symmetric boolean adjacency matrix with an empty diagonal."""
    p = spec.p
    rng = _rng(seed)
    A = np.zeros((p, p), dtype=bool)
    iu = np.triu_indices(p, 1)
    if spec.kind == "band":
        gap = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        A = (gap > 0) & (gap <= spec.bandwidth)
        return A
    if spec.kind == "random":
        A[iu] = rng.random(len(iu[0])) < spec.edge_prob
    elif spec.kind == "cluster":
        g = _groups(p, spec.n_clusters)
        same = g[iu[0]] == g[iu[1]]
        A[iu] = same & (rng.random(len(iu[0])) < spec.within_cluster_prob)
    else:
        g = _groups(p, spec.n_hubs)
        for label in np.unique(g):
            members = np.flatnonzero(g == label)
            A[members[0], members[1:]] = True
    return A | A.T


def generate_precision(adjacency, v: float = 1.0, u: float = 1e-4, seed: SeedLike = None,
                       random_sign: bool = False) -> np.ndarray:
    """SPD precision matrix with support on ``adjacency``.

    Off-diagonal entries are v on edges (random sign when ``random_sign``);
    the diagonal is |lambda_min(off-diagonal part)| + 0.1 + u.
    """
    A = np.asarray(adjacency, dtype=bool)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.array_equal(A, A.T):
        raise ValueError("adjacency must be a symmetric square matrix")
    p = A.shape[0]
    off = v * A.astype(float)
    np.fill_diagonal(off, 0.0)
    if random_sign:
        rng = _rng(seed)
        signs = np.where(rng.random((p, p)) < 0.5, -1.0, 1.0)
        signs = np.triu(signs, 1)
        signs = signs + signs.T
        off = off * signs
    lam_min = float(np.linalg.eigvalsh(off)[0]) if p else 0.0
    return off + (abs(lam_min) + 0.1 + u) * np.eye(p)


@dataclass
class GroundTruth:
    adjacency: np.ndarray
    omega_true: np.ndarray
    B_true: np.ndarray
    B0_true: np.ndarray
    Z_true: np.ndarray
    h: np.ndarray
    counts: CountMatrix
    covariates: CovariateMatrix
    totals: Optional[np.ndarray] = None


def sample_coefficients(q: int, p: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random((q, p))
    mag = rng.uniform(0.5, 1.0, size=(q, p))
    return np.where(u < 0.1, -mag, np.where(u < 0.2, mag, 0.0))


def sample_intercepts(p: int, rng: np.random.Generator) -> np.ndarray:
    high = rng.random(p) < 0.2
    return np.where(high, rng.uniform(6.0, 8.0, p), rng.uniform(2.0, 4.0, p))


def sample_dirichlet(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise Dirichlet draws via normalised gamma variates."""
    g = rng.standard_gamma(alpha)
    s = g.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise FloatingPointError("all gamma draws underflowed in a Dirichlet row")
    return g / s


def generate_dataset(spec: GraphSpec, n: int, q: int, seed: SeedLike = None,
                     v: float = 1.0, u: float = 1e-4, random_sign: bool = False,
                     total_mean: float = 3000.0, total_sd: float = 250.0) -> GroundTruth:
    """Draw one synthetic dataset; identical seeds give identical output."""
    rng = _rng(seed)
    p = spec.p
    adjacency = generate_graph(spec, rng)
    omega = generate_precision(adjacency, v, u, rng, random_sign)
    cov = np.linalg.inv(omega)
    cov = 0.5 * (cov + cov.T)

    raw = rng.standard_normal((n, q))
    M = CovariateMatrix.from_raw(raw) if q else CovariateMatrix.empty(n)
    B = sample_coefficients(q, p, rng)
    B0 = sample_intercepts(p, rng)
    mean = B0 + (M.values @ B if q else 0.0)
    Z = mean + rng.multivariate_normal(np.zeros(p), cov, size=n, method="cholesky")
    h = sample_dirichlet(np.exp(Z), rng)
    totals = np.rint(rng.normal(total_mean, total_sd, size=n)).astype(np.int64)
    totals = np.maximum(totals, 0)
    counts = np.vstack([rng.multinomial(t, row) for t, row in zip(totals, h)])
    return GroundTruth(adjacency, omega, B, B0, Z, h, CountMatrix(counts), M, totals)


def write_ground_truth(truth: GroundTruth, directory) -> None:
    """Persist a dataset as delimited files readable by :func:`sinc.io.load_matrix`."""
    from .io import write_matrix

    os.makedirs(directory, exist_ok=True)
    p = truth.omega_true.shape[0]
    taxa = [f"taxon{j + 1}" for j in range(p)]
    covs = list(truth.covariates.column_names)
    write_matrix(os.path.join(directory, "counts.tsv"), truth.counts.values, taxa)
    write_matrix(os.path.join(directory, "covariates.tsv"), truth.covariates.raw, covs)
    write_matrix(os.path.join(directory, "b_true.tsv"), truth.B_true, taxa, covs)
    write_matrix(os.path.join(directory, "b0_true.tsv"), truth.B0_true[None, :], taxa)
    write_matrix(os.path.join(directory, "omega_true.tsv"), truth.omega_true, taxa, taxa)
    write_matrix(os.path.join(directory, "adjacency_true.tsv"),
                 truth.adjacency.astype(np.int64), taxa, taxa)
