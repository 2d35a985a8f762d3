import numpy as np
import pytest
from scipy.special import expit, logit

from sinc.errors import NonConvergenceWarning
from sinc.model import FitConfig, RegressionState
from sinc.regression import (
    ColumnRegressionProblem,
    column_elbo,
    finalize_coefficients,
    residual_variances,
    sweep_once,
    update_mu_entry,
    update_phi_entry,
    update_sigma_entry,
    vi_step,
    vi_sweep_column,
)


def problem_with_gram(mtm_diag, sigma_star=1.0, nuB=1.0, theta=0.5):
    q = len(mtm_diag)
    M = np.zeros((max(q, 1), q))
    prob = ColumnRegressionProblem(np.zeros(M.shape[0]), M, sigma_star, theta, nuB=nuB,
                                   MtM=np.diag(np.asarray(mtm_diag, float)))
    return prob


@pytest.mark.parametrize("mtm,nuB,s,expected", [
    (9.0, 1.0, 1.0, 0.1),
    (0.0, 1.0, 1.0, 1.0),
    (100.0, 1.0, 2.0, 2.0 / 101.0),
])
def test_sigma_entry(mtm, nuB, s, expected):
    prob = problem_with_gram([mtm], sigma_star=s, nuB=nuB)
    assert update_sigma_entry(prob, 0) == pytest.approx(expected, rel=1e-12)


def test_mu_entry_direct_formula():
    prob = problem_with_gram([9.0, 4.0])
    prob.Mty = np.array([5.0, 1.0])
    mu = update_mu_entry(prob, 0, np.zeros(2), np.zeros(2), 0.1)
    assert mu == pytest.approx(0.5, rel=1e-12)


def test_mu_entry_zero_residual(rng):
    M = rng.normal(size=(10, 2))
    prob = ColumnRegressionProblem(np.full(10, 3.0), M, 1.0, 0.5, b0_j=3.0)
    assert update_mu_entry(prob, 0, np.zeros(2), np.zeros(2), 0.2) == 0.0


def orthogonal_design(rng, n=20, q=3):
    Q, _ = np.linalg.qr(rng.normal(size=(n, q)))
    return Q * np.array([2.0, 3.0, 5.0])[:q]


def test_orthogonal_design_matches_ridge(rng):
    M = orthogonal_design(rng)
    y = M @ np.array([1.0, -0.5, 0.2]) + 0.1 * rng.normal(size=20)
    prob = ColumnRegressionProblem(y, M, 0.7, 0.4, nuB=2.0)
    mu_other = rng.normal(size=3)
    phi_other = rng.random(3)
    for k in range(3):
        s = update_sigma_entry(prob, k)
        ridge = (M[:, k] @ y) / (M[:, k] @ M[:, k] + 1.0 / 2.0)
        assert update_mu_entry(prob, k, mu_other, phi_other, s) == pytest.approx(ridge,
                                                                                 rel=1e-10)


def test_orthogonal_design_one_sweep_fixed_point(rng):
    M = orthogonal_design(rng)
    y = M @ np.array([1.0, 0.0, 0.3]) + 0.2 * rng.normal(size=20)
    prob = ColumnRegressionProblem(y, M, 0.5, 0.5)
    mu, sigma, phi = np.zeros(3), np.ones(3), np.full(3, 0.5)
    sweep_once(prob, mu, sigma, phi)
    before = (mu.copy(), sigma.copy(), phi.copy())
    sweep_once(prob, mu, sigma, phi)
    for a, b in zip(before, (mu, sigma, phi)):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


def test_phi_entry_neutral_point():
    prob = problem_with_gram([4.0], sigma_star=2.0, nuB=3.0, theta=0.5)
    assert update_phi_entry(prob, 0, 0.0, 6.0) == pytest.approx(0.5, rel=1e-12)


def test_phi_entry_prior_limit():
    for theta in (0.1, 0.8, 0.999):
        prob = problem_with_gram([4.0], sigma_star=2.0, nuB=3.0, theta=theta)
        assert update_phi_entry(prob, 0, 0.0, 6.0) == pytest.approx(theta, rel=1e-12)


def test_phi_is_clamped():
    prob = problem_with_gram([4.0], theta=0.5)
    assert update_phi_entry(prob, 0, 100.0, 1e-4) == 1.0 - 1e-12
    prob = problem_with_gram([4.0], theta=1e-6)
    assert update_phi_entry(prob, 0, 0.0, 1e-30) == 1e-12


def exact_inclusion_probability(y, m, s, nuB, theta):
    """Posterior P(gamma = 1 | y) for y = m b + e, e ~ N(0, s), b ~ N(0, nuB s)."""
    mm = m @ m
    my = m @ y
    log_bf = -0.5 * np.log1p(nuB * mm) + nuB * my ** 2 / (2 * s * (1 + nuB * mm))
    return expit(logit(theta) + log_bf)


def test_single_covariate_matches_bayes_factor(rng):
    n = 2000
    m = rng.normal(size=n)
    y = 1.0 * m + rng.normal(size=n)
    prob = ColumnRegressionProblem(y, m[:, None], 1.0, 0.3, nuB=1.0)
    state = RegressionState.initial(1, 1)
    _, _, phi, _, _ = vi_sweep_column(prob, state, 0)
    exact = exact_inclusion_probability(y, m, 1.0, 1.0, 0.3)
    assert phi[0] > 0.99
    assert logit(min(phi[0], 1 - 1e-12)) == pytest.approx(logit(min(exact, 1 - 1e-12)),
                                                          rel=1e-9)


def test_single_covariate_bayes_factor_weak_signal(rng):
    n = 60
    m = rng.normal(size=n)
    y = 0.15 * m + rng.normal(size=n)
    prob = ColumnRegressionProblem(y, m[:, None], 1.3, 0.4, nuB=0.7)
    _, _, phi, _, _ = vi_sweep_column(prob, RegressionState.initial(1, 1), 0)
    assert phi[0] == pytest.approx(exact_inclusion_probability(y, m, 1.3, 0.7, 0.4), rel=1e-10)


def test_sweeps_never_decrease_column_elbo(rng):
    for _ in range(5):
        M = rng.normal(size=(50, 4))
        M[:, 1] += 0.8 * M[:, 0]
        y = M @ (rng.normal(size=4) * (rng.random(4) < 0.5)) + rng.normal(size=50)
        prob = ColumnRegressionProblem(y, M, 1.0, 0.3)
        mu, sigma, phi = rng.normal(size=4), np.ones(4), rng.random(4)
        values = [column_elbo(prob, mu, sigma, phi)]
        for _ in range(10):
            sweep_once(prob, mu, sigma, phi)
            values.append(column_elbo(prob, mu, sigma, phi))
        assert np.all(np.diff(values) >= -1e-10)
        assert np.all((phi >= 0) & (phi <= 1)) and np.all(sigma > 0)


def test_converged_sweep_is_fixed_point(rng):
    M = rng.normal(size=(40, 3))
    y = M @ np.array([1.0, 0.0, -1.0]) + rng.normal(size=40)
    prob = ColumnRegressionProblem(y, M, 1.0, 0.5)
    cfg = FitConfig(inner_tol=1e-15, max_inner_iters=1000)
    mu, sigma, phi, _, ok = vi_sweep_column(prob, RegressionState.initial(3, 1), 0, cfg)
    assert ok
    again = (mu.copy(), sigma.copy(), phi.copy())
    sweep_once(prob, mu, sigma, phi)
    for a, b in zip(again, (mu, sigma, phi)):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_empty_design_is_noop():
    prob = ColumnRegressionProblem(np.ones(5), np.zeros((5, 0)), 1.0, 0.5)
    mu, sigma, phi, sweeps, ok = vi_sweep_column(prob, RegressionState.initial(0, 1), 0)
    assert sweeps == 0 and ok and mu.size == 0


def test_sweep_warns_at_iteration_cap(rng):
    M = rng.normal(size=(30, 3))
    M[:, 2] = M[:, 0] + 0.05 * rng.normal(size=30)
    y = M[:, 0] + rng.normal(size=30)
    prob = ColumnRegressionProblem(y, M, 1.0, 0.5)
    with pytest.warns(NonConvergenceWarning):
        vi_sweep_column(prob, RegressionState.initial(3, 1), 0, FitConfig(max_inner_iters=1))


def test_sign_equivariance(rng):
    M = rng.normal(size=(40, 3))
    y = M @ np.array([0.8, -0.4, 0.0]) + rng.normal(size=40)
    flipped = M.copy()
    flipped[:, 1] *= -1
    out = []
    for design in (M, flipped):
        prob = ColumnRegressionProblem(y, design, 1.0, 0.5)
        out.append(vi_sweep_column(prob, RegressionState.initial(3, 1), 0))
    np.testing.assert_array_equal(out[0][0][[0, 2]], out[1][0][[0, 2]])
    np.testing.assert_array_equal(out[0][0][1], -out[1][0][1])
    np.testing.assert_array_equal(out[0][2], out[1][2])


@pytest.mark.parametrize("phi,mu,expected", [(0.6, 0.3, 0.3), (0.5, 7.0, 0.0), (0.49, -2.0, 0.0)])
def test_finalize_threshold(phi, mu, expected):
    state = RegressionState.initial(1, 1)
    state.phi[:] = phi
    state.mu[:] = mu
    assert finalize_coefficients(state).B[0, 0] == expected


def test_residual_variances():
    omega = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(residual_variances(omega, "conditional"), [0.5, 1.0])
    np.testing.assert_allclose(residual_variances(omega, "marginal"),
                               np.diag(np.linalg.inv(omega)))
    with pytest.raises(ValueError):
        residual_variances(omega, "other")


@pytest.mark.parametrize("mode", ["conditional", "marginal"])
def test_vi_step_column_permutation(rng, mode):
    n, q, p = 40, 3, 4
    M = rng.normal(size=(n, q))
    Z = M @ rng.normal(size=(q, p)) + rng.normal(size=(n, p))
    omega = np.eye(p) if mode == "conditional" else np.eye(p) + 0.2
    cfg = FitConfig(residual_variance=mode)
    state = RegressionState.initial(q, p, B0=np.zeros(p))
    a, _ = vi_step(Z, M, state, omega, 1.0, cfg)
    perm = np.array([2, 0, 3, 1])
    b, _ = vi_step(Z[:, perm], M, state, omega[np.ix_(perm, perm)], 1.0, cfg)
    np.testing.assert_allclose(a.mu[:, perm], b.mu, rtol=1e-12)
    np.testing.assert_allclose(a.phi[:, perm], b.phi, rtol=1e-12)
