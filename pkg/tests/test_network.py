import warnings
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import optimize

from sinc.errors import DegenerateDenominator
from sinc.model import FitConfig, Hyperparameters, NetworkState
from sinc.network import (
    ResidualScatter,
    e_step,
    e_step_edge,
    edge_posterior,
    partition_precision,
    tau_free_weights,
    update_intercepts,
    update_pi,
    update_precision,
    update_precision_column,
    update_tau,
    update_theta_gamma,
)
from sinc.synthetic import GraphSpec, generate_graph, generate_precision


def test_e_step_at_zero():
    hp = Hyperparameters(nu0=0.1, nu1=10.0)
    net = NetworkState.from_precision(np.eye(2), pi=0.5, tau=1.0)
    p_star, d_star = e_step_edge(0.0, net, hp)
    assert p_star == pytest.approx(0.1 / 10.1, rel=1e-12)
    assert d_star == pytest.approx((1 - p_star) / 0.01 + p_star / 100.0, rel=1e-12)
    assert d_star == pytest.approx(99.01, abs=1e-3)


def test_e_step_equal_widths_returns_prior(rng):
    for _ in range(200):
        pi = rng.random()
        nu = 10 ** rng.uniform(-3, 1)
        p_star, _ = edge_posterior(rng.normal(scale=5.0), pi, rng.uniform(0.1, 10), nu, nu)
        assert p_star == pi


def test_e_step_endpoints():
    tau = 2.5
    p1, d1 = edge_posterior(50.0, 0.5, tau, 0.01, 10.0)
    assert p1 == 1.0 and d1 == pytest.approx(tau / 100.0, rel=1e-12)
    p0, d0 = edge_posterior(0.0, 1e-300, tau, 0.01, 10.0)
    assert d0 == pytest.approx(tau / 1e-4, rel=1e-12)


def test_e_step_matrix(rng):
    hp = Hyperparameters()
    A = rng.normal(size=(5, 5)) * 0.05
    omega = A + A.T + 5 * np.eye(5)
    p_star, d_star = e_step(omega, 0.3, 1.7, hp)
    assert np.all(np.diag(p_star) == 0)
    np.testing.assert_array_equal(p_star, p_star.T)
    off = ~np.eye(5, dtype=bool)
    assert np.all(d_star[off] >= 1.7 / hp.nu1 ** 2) and np.all(d_star[off] <= 1.7 / hp.nu0 ** 2)
    np.testing.assert_allclose(d_star[off], 1.7 * tau_free_weights(p_star, hp)[off], rtol=1e-14)


def test_intercepts(rng):
    Z = rng.normal(size=(6, 3))
    np.testing.assert_allclose(update_intercepts(Z, np.zeros((6, 0)), np.zeros((0, 3))),
                               Z.mean(axis=0))
    M = rng.normal(size=(6, 2))
    B = rng.normal(size=(2, 3))
    np.testing.assert_allclose(update_intercepts(M @ B, M, B), 0.0, atol=1e-14)
    assert update_intercepts(np.array([[1.0], [3.0]]), np.zeros((2, 1)), np.zeros((1, 1)))[0] == 2


def _net(omega, d=1.0):
    p = omega.shape[0]
    return NetworkState(omega, np.zeros((p, p)), np.full((p, p), d))


def test_column_update_zero_cross_scatter():
    S = np.array([[4.0, 0.0, 1.0], [0.0, 6.0, 0.0], [1.0, 0.0, 3.0]])
    hp = Hyperparameters(lam=2.0)
    omega12, omega22 = update_precision_column(_net(np.eye(3) * 2), ResidualScatter(S), 1, 10,
                                               hp)
    np.testing.assert_array_equal(omega12, 0.0)
    assert omega22 == pytest.approx(10 / (2.0 + 6.0), rel=1e-12)


def test_decoupled_two_by_two():
    hp = Hyperparameters(lam=1.0)
    scat = ResidualScatter(np.diag([4.0, 4.0]))
    net, _ = update_precision(_net(np.eye(2), d=3.7), scat, 10, hp, FitConfig(max_inner_iters=1))
    np.testing.assert_allclose(net.omega, np.diag([2.0, 2.0]), rtol=1e-14)


def test_scalar_precision():
    hp = Hyperparameters()
    scat = ResidualScatter(np.array([[50.0]]))
    net, cycles = update_precision(_net(np.eye(1)), scat, 100, hp)
    assert net.omega[0, 0] == pytest.approx(100 / 200.0, rel=1e-14)
    assert update_precision_column(_net(np.eye(1)), scat, 0, 100, hp)[1] == 0.5


def column_objective(theta, omega, S, d, col, n, lam):
    p = omega.shape[0]
    others = np.arange(p) != col
    trial = omega.copy()
    trial[others, col] = trial[col, others] = theta[:-1]
    trial[col, col] = theta[-1]
    sign, logdet = np.linalg.slogdet(trial)
    if sign <= 0:
        return np.inf
    value = 0.5 * n * logdet - 0.5 * np.sum(trial * S)
    value -= 0.5 * np.sum(d[others, col] * theta[:-1] ** 2) + 0.5 * lam * theta[-1]
    return -value


def test_column_update_matches_numerical_maximiser(rng):
    p, n, lam = 3, 40, 5.0
    R = rng.normal(size=(n, p)) @ np.array([[1.0, 0.4, 0.0], [0.0, 1.0, 0.3], [0.0, 0.0, 1.0]])
    S = R.T @ R
    omega = np.array([[1.2, 0.1, 0.05], [0.1, 0.9, -0.2], [0.05, -0.2, 1.1]])
    d = np.array([[0.0, 2.0, 7.0], [2.0, 0.0, 0.5], [7.0, 0.5, 0.0]])
    net = NetworkState(omega, np.zeros((p, p)), d)
    hp = Hyperparameters(lam=lam)
    for col in range(p):
        omega12, omega22 = update_precision_column(net, ResidualScatter(S), col, n, hp)
        others = np.arange(p) != col
        start = np.append(omega[others, col], omega[col, col])
        res = optimize.minimize(column_objective, start, args=(omega, S, d, col, n, lam),
                                method="Nelder-Mead",
                                options=dict(xatol=1e-10, fatol=1e-14, maxiter=20000))
        np.testing.assert_allclose(np.append(omega12, omega22), res.x, atol=1e-6)


def test_partition_conditional_mean(rng):
    p = 4
    A = rng.normal(size=(30, p))
    scat = ResidualScatter(A.T @ A)
    omega = np.eye(p) + 0.1
    net = _net(omega, d=2.0)
    hp = Hyperparameters(lam=3.0)
    part = partition_precision(net, scat, 2, hp)
    omega12, _ = update_precision_column(net, scat, 2, 30, hp)
    _, s12, _ = scat.partition(2)
    np.testing.assert_allclose(-part.C @ s12, omega12, rtol=1e-10)
    assert part.Omega11.shape == (3, 3) and part.omega22 == omega[2, 2]


def test_precision_recovery_large_sample():
    rng = np.random.default_rng(3)
    truth = generate_precision(generate_graph(GraphSpec("band", 5, bandwidth=1)))
    n = 5000
    R = rng.multivariate_normal(np.zeros(5), np.linalg.inv(truth), size=n)
    scat = ResidualScatter.from_residuals(R)
    hp = Hyperparameters()
    net = NetworkState.from_precision(np.linalg.inv(scat.S / n))
    for _ in range(20):
        p_star, d_star = e_step(net.omega, net.pi, net.tau, hp)
        net, _ = update_precision(NetworkState(net.omega, p_star, d_star), scat, n, hp)
    err = np.linalg.norm(net.omega - truth) / np.linalg.norm(truth)
    assert err < 0.1


def test_precision_stays_spd(rng):
    hp = Hyperparameters(lam=1.0)
    for _ in range(5):
        R = rng.normal(size=(8, 6))
        scat = ResidualScatter.from_residuals(R)
        net = _net(np.eye(6), d=rng.uniform(0.01, 100))
        out, _ = update_precision(net, scat, 8, hp)
        assert np.linalg.eigvalsh(out.omega)[0] > 0
        assert np.max(np.abs(out.omega - out.omega.T)) < 1e-10


@pytest.mark.parametrize("value,expected", [(0.0, 1 / 52), (1.0, 51 / 52)])
def test_theta_gamma(value, expected):
    phi = np.full((50, 3), value)
    np.testing.assert_allclose(update_theta_gamma(phi, Hyperparameters()), expected, rtol=1e-14)


def test_theta_gamma_uniform_prior():
    phi = np.zeros((50, 1))
    phi[:10] = 1.0
    hp = Hyperparameters(a_gamma=1.0, b_gamma=1.0)
    assert update_theta_gamma(phi, hp)[0] == pytest.approx(0.2, rel=1e-14)


def test_pi_examples():
    hp = Hyperparameters()
    assert update_pi(np.zeros((3, 3)), hp) == pytest.approx(1 / 5, rel=1e-14)
    full = np.ones((3, 3)) - np.eye(3)
    assert update_pi(full, hp) == pytest.approx(4 / 5, rel=1e-14)
    flat = Hyperparameters(a_pi=1.0, b_pi=1.0)
    p_star = np.zeros((5, 5))
    p_star[0, 1] = p_star[1, 0] = p_star[2, 4] = p_star[4, 2] = 1.0
    assert update_pi(p_star, flat) == 2 / 10


def test_pi_permutation_invariant(rng):
    A = rng.random((6, 6))
    p_star = np.triu(A, 1) + np.triu(A, 1).T
    perm = rng.permutation(6)
    hp = Hyperparameters()
    assert update_pi(p_star, hp) == pytest.approx(update_pi(p_star[np.ix_(perm, perm)], hp),
                                                  rel=1e-14)


def _tau_case(w2d):
    omega = np.array([[3.0, np.sqrt(w2d)], [np.sqrt(w2d), 3.0]])
    return omega, np.ones((2, 2))


@pytest.mark.parametrize("w2d,expected", [(1.0, 4.0), (4.0, 1.0)])
def test_tau_examples(w2d, expected):
    omega, dfree = _tau_case(w2d)
    hp = Hyperparameters(learn_tau=True)
    assert update_tau(omega, dfree, hp) == pytest.approx(expected, rel=1e-14)


def test_tau_fixed_when_not_learned():
    omega, dfree = _tau_case(1.0)
    assert update_tau(omega, dfree, Hyperparameters(), tau_prev=1.0) == 1.0


def test_tau_degenerate_denominator_keeps_previous():
    omega, dfree = _tau_case(0.0)
    hp = Hyperparameters(learn_tau=True, b_tau=1.0)
    with pytest.warns(DegenerateDenominator):
        assert update_tau(omega, dfree, hp, tau_prev=2.5) == 2.5


def test_diverged_scale_is_reported():
    from sinc.errors import NonFiniteResult
    omega = np.array([[2.0, 0.5], [0.5, 2.0]])
    with pytest.raises(NonFiniteResult):
        e_step(omega, 0.5, 1e305, Hyperparameters())
