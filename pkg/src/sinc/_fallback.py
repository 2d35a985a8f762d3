"""Pure-Python latent-row kernels.

Mirrors ``sinc._kernels`` step for step so either backend can be used; this
one is selected automatically when the compiled module is unavailable.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import digamma as _digamma
from scipy.special import gammaln

Z_CLAMP = 30.0
ARMIJO_C1 = 1e-4
MIN_STEP = 1e-16

STATUS_CONVERGED = 0
STATUS_MAX_EVALS = 1
STATUS_LINE_SEARCH = 2
STATUS_NONFINITE = 3


def digamma(x):
    return float(_digamma(x))


def row_objective_grad(x, z, m, omega):
    """Return (objective, gradient) for one latent row."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    m = np.asarray(m, dtype=float)
    omega = np.asarray(omega, dtype=float)
    p = z.shape[0]
    if x.shape != (p,) or m.shape != (p,) or omega.shape != (p, p):
        raise ValueError("row dimensions do not match")
    clamped = np.abs(z) > Z_CLAMP
    a = np.exp(np.clip(z, -Z_CLAMP, Z_CLAMP))
    A = a.sum()
    N = x.sum()
    pos = x > 0
    kern = float(np.sum(gammaln(a[pos] + x[pos]) - gammaln(a[pos])))
    common = 0.0
    if N > 0:
        kern += gammaln(A) - gammaln(A + N)
        common = _digamma(A) - _digamma(A + N)
    r = z - m
    t = omega @ r
    dm = a * common
    dm[pos] += a[pos] * (_digamma(a[pos] + x[pos]) - _digamma(a[pos]))
    dm[clamped] = 0.0
    return -kern + 0.5 * float(r @ t), t - dm


def _lbfgs_row(x, m, omega, z, memory, gtol, max_evals):
    p = z.shape[0]
    S = np.zeros((memory, p))
    Y = np.zeros((memory, p))
    rho = np.zeros(memory)
    alph = np.zeros(memory)
    k = head = 0

    f, g = row_objective_grad(x, z, m, omega)
    evals = 1
    f_start = f
    if not np.isfinite(f):
        return z, STATUS_NONFINITE, f_start, f
    gmax = np.max(np.abs(g))
    if gmax <= gtol:
        return z, STATUS_CONVERGED, f_start, f
    gamma = 1.0 / gmax if gmax > 1.0 else 1.0

    while True:
        d = g.copy()
        for i in range(k):
            idx = (head - 1 - i) % memory
            alph[idx] = rho[idx] * (S[idx] @ d)
            d -= alph[idx] * Y[idx]
        d *= gamma
        for i in range(k - 1, -1, -1):
            idx = (head - 1 - i) % memory
            beta = rho[idx] * (Y[idx] @ d)
            d += S[idx] * (alph[idx] - beta)
        d = -d
        gd = g @ d
        if not gd < 0.0:
            k = 0
            gmax = np.max(np.abs(g))
            gamma = 1.0 / gmax if gmax > 1.0 else 1.0
            d = -gamma * g
            gd = g @ d

        step = 1.0
        while True:
            zt = z + step * d
            ft, gt = row_objective_grad(x, zt, m, omega)
            evals += 1
            if np.isfinite(ft) and ft <= f + ARMIJO_C1 * step * gd:
                break
            if evals >= max_evals:
                return z, STATUS_MAX_EVALS, f_start, f
            step *= 0.5
            if step < MIN_STEP:
                return z, STATUS_LINE_SEARCH, f_start, f

        s = zt - z
        y = gt - g
        sy = s @ y
        yy = y @ y
        S[head] = s
        Y[head] = y
        if sy > 1e-12 * yy and yy > 0.0:
            rho[head] = 1.0 / sy
            gamma = sy / yy
            head = (head + 1) % memory
            k = min(k + 1, memory)
        z, g, f = zt, gt, ft
        if np.max(np.abs(g)) <= gtol:
            return z, STATUS_CONVERGED, f_start, f
        if evals >= max_evals:
            return z, STATUS_MAX_EVALS, f_start, f


def optimize_rows(X, means, omega, Z0, memory=10, gtol=1e-5, max_evals=200, n_threads=1):
    """Minimise every row objective from the starting rows ``Z0``.

    Returns (Z, status, f_start, f_end) with one status code per row.
    """
    X = np.asarray(X, dtype=float)
    means = np.asarray(means, dtype=float)
    omega = np.ascontiguousarray(omega, dtype=float)
    Z = np.array(Z0, dtype=float, copy=True)
    n, p = Z.shape
    if X.shape != (n, p) or means.shape != (n, p):
        raise ValueError("row matrices do not share a shape")
    if omega.shape != (p, p):
        raise ValueError("precision matrix does not match p")
    status = np.zeros(n, dtype=np.intc)
    f0 = np.zeros(n)
    f1 = np.zeros(n)
    if n == 0 or p == 0:
        return Z, status, f0, f1

    def work(i):
        Z[i], status[i], f0[i], f1[i] = _lbfgs_row(X[i], means[i], omega, Z[i].copy(),
                                                   memory, gtol, max_evals)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, range(n)))
    else:
        for i in range(n):
            work(i)
    return Z, status, f0, f1
