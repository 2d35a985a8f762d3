import numpy as np
import pytest

from sinc.synthetic import (
    GraphSpec,
    generate_dataset,
    generate_graph,
    generate_precision,
    sample_dirichlet,
    write_ground_truth,
)


def edges(A):
    return int(np.triu(A, 1).sum())


def test_band_edge_count():
    A = generate_graph(GraphSpec("band", 5, bandwidth=3))
    assert edges(A) == 9


def test_hub_star():
    A = generate_graph(GraphSpec("hub", 7, n_hubs=1))
    assert edges(A) == 6
    assert A[0, 1:].all() and not A[1:, 1:].any()


def test_hub_groups():
    A = generate_graph(GraphSpec("hub", 9, n_hubs=3))
    assert edges(A) == 6
    assert A.sum(axis=1).max() == 2


def test_cluster_edges_stay_within_clusters():
    A = generate_graph(GraphSpec("cluster", 12, within_cluster_prob=0.9), seed=1)
    labels = np.repeat(np.arange(3), 4)
    i, j = np.nonzero(A)
    assert np.all(labels[i] == labels[j])
    assert edges(A) > 0


def test_random_graph_binomial_concentration():
    pairs = 100 * 99 // 2
    mean = 0.025 * pairs
    sd = np.sqrt(pairs * 0.025 * 0.975)
    for seed in range(10):
        A = generate_graph(GraphSpec("random", 100), seed=seed)
        assert abs(edges(A) - mean) < 3 * sd


def test_graph_structure_invariants():
    for kind in ("band", "cluster", "hub", "random"):
        A = generate_graph(GraphSpec(kind, 20), seed=0)
        assert A.dtype == bool and np.array_equal(A, A.T) and not A.diagonal().any()


def test_invalid_spec():
    with pytest.raises(ValueError):
        GraphSpec("ring", 5)
    with pytest.raises(ValueError):
        GraphSpec("random", 5, edge_prob=1.5)


def test_empty_graph_precision():
    omega = generate_precision(np.zeros((4, 4), bool), v=1.0, u=1e-4)
    np.testing.assert_array_equal(omega, np.eye(4) * (0.1 + 1e-4))


def test_path_graph_precision():
    A = generate_graph(GraphSpec("band", 3, bandwidth=1))
    omega = generate_precision(A, v=1.0, u=1e-4)
    assert omega[0, 1] == omega[1, 2] == 1.0 and omega[0, 2] == 0.0
    assert omega[0, 0] == pytest.approx(np.sqrt(2) + 0.1 + 1e-4, rel=1e-12)


@pytest.mark.parametrize("kind", ["band", "cluster", "hub", "random"])
@pytest.mark.parametrize("p", [10, 50, 100])
def test_precision_spd(kind, p):
    omega = generate_precision(generate_graph(GraphSpec(kind, p), seed=p), seed=p,
                               random_sign=(p == 50))
    assert np.linalg.eigvalsh(omega)[0] >= 0.1 + 1e-4 - 1e-9


def test_dataset_constraints():
    gt = generate_dataset(GraphSpec("random", 12), 40, 5, seed=4)
    np.testing.assert_allclose(gt.h.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(gt.counts.values.sum(axis=1), gt.totals)
    assert gt.counts.shape == (40, 12) and gt.covariates.shape == (40, 5)
    assert gt.B_true.shape == (5, 12) and gt.B0_true.shape == (12,)
    assert np.all((gt.B0_true >= 2) & (gt.B0_true <= 8))
    nz = gt.B_true[gt.B_true != 0]
    assert np.all((np.abs(nz) >= 0.5) & (np.abs(nz) <= 1))


def test_dataset_reproducible():
    a = generate_dataset(GraphSpec("cluster", 10), 20, 3, seed=9)
    b = generate_dataset(GraphSpec("cluster", 10), 20, 3, seed=9)
    for name in ("adjacency", "omega_true", "B_true", "B0_true", "Z_true", "h"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    np.testing.assert_array_equal(a.counts.values, b.counts.values)


def test_coefficient_density_concentration():
    q, p = 50, 40
    sd = np.sqrt(q * p * 0.2 * 0.8)
    for seed in range(5):
        gt = generate_dataset(GraphSpec("random", p), 10, q, seed=seed)
        assert abs(np.count_nonzero(gt.B_true) - 0.2 * q * p) < 3 * sd


def test_dirichlet_mean():
    rng = np.random.default_rng(0)
    alpha = np.array([0.5, 2.0, 7.5])
    h = sample_dirichlet(np.tile(alpha, (100_000, 1)), rng)
    mean = alpha / alpha.sum()
    se = np.sqrt(mean * (1 - mean) / (alpha.sum() + 1) / 100_000)
    assert np.all(np.abs(h.mean(axis=0) - mean) < 3 * se)


def test_ground_truth_directory(tmp_path):
    from sinc.io import load_matrix

    gt = generate_dataset(GraphSpec("band", 6), 15, 2, seed=0)
    write_ground_truth(gt, tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["adjacency_true.tsv", "b0_true.tsv", "b_true.tsv", "counts.tsv",
                     "covariates.tsv", "omega_true.tsv"]
    np.testing.assert_array_equal(load_matrix(tmp_path / "counts.tsv", "counts").values,
                                  gt.counts.values)
    np.testing.assert_array_equal(load_matrix(tmp_path / "omega_true.tsv").values, gt.omega_true)
