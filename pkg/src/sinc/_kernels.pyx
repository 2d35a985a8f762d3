# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled latent-row kernels.

Same algorithm as ``sinc._fallback``: Dirichlet-multinomial row objective,
its gradient, and a per-row L-BFGS with Armijo backtracking. Rows are
independent and optionally spread over OpenMP threads.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, lgamma, log, fabs, isfinite, NAN
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double Z_CLAMP = 30.0
cdef double ARMIJO_C1 = 1e-4
cdef double MIN_STEP = 1e-16

# status codes shared with the fallback
STATUS_CONVERGED = 0
STATUS_MAX_EVALS = 1
STATUS_LINE_SEARCH = 2
STATUS_NONFINITE = 3


cdef inline double _digamma(double x) noexcept nogil:
    cdef double result = 0.0
    cdef double f
    if x <= 0.0:
        return NAN
    if x < 1e-6:
        # psi(x) = -1/x - euler + (pi^2/6) x + O(x^2)
        return -1.0 / x - 0.5772156649015329 + 1.6449340668482264 * x
    while x < 10.0:
        result -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    result += log(x) - 0.5 / x - f * (1.0 / 12 - f * (1.0 / 120 - f * (
        1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132)))))
    return result


def digamma(double x):
    """Digamma function for positive arguments."""
    return _digamma(x)


cdef double _row_fg(const double* x, const double* z, const double* m,
                    const double* om, int p, double* r, double* a,
                    double* g) noexcept nogil:
    """Row objective; writes the gradient into ``g`` unless it is NULL."""
    cdef int j, k
    cdef double A = 0.0, N = 0.0, kern = 0.0, quad = 0.0
    cdef double zj, t, common = 0.0, dm
    for j in range(p):
        zj = z[j]
        if zj > Z_CLAMP:
            zj = Z_CLAMP
        elif zj < -Z_CLAMP:
            zj = -Z_CLAMP
        a[j] = exp(zj)
        A += a[j]
        N += x[j]
        if x[j] > 0.0:
            kern += lgamma(a[j] + x[j]) - lgamma(a[j])
        r[j] = z[j] - m[j]
    if N > 0.0:
        kern += lgamma(A) - lgamma(A + N)
        if g != NULL:
            common = _digamma(A) - _digamma(A + N)
    for j in range(p):
        t = 0.0
        for k in range(p):
            t += om[j * p + k] * r[k]
        quad += r[j] * t
        if g != NULL:
            if z[j] > Z_CLAMP or z[j] < -Z_CLAMP:
                dm = 0.0
            elif x[j] > 0.0:
                dm = a[j] * (_digamma(a[j] + x[j]) - _digamma(a[j]) + common)
            else:
                dm = a[j] * common
            g[j] = -dm + t
    return -kern + 0.5 * quad


cdef inline double _dot(const double* u, const double* v, int p) noexcept nogil:
    cdef double s = 0.0
    cdef int j
    for j in range(p):
        s += u[j] * v[j]
    return s


cdef inline double _maxabs(const double* u, int p) noexcept nogil:
    cdef double s = 0.0
    cdef int j
    for j in range(p):
        if fabs(u[j]) > s:
            s = fabs(u[j])
    return s


cdef int _lbfgs_row(const double* x, const double* m, const double* om, int p,
                    double* z, int mem, double gtol, int max_evals,
                    double* work, double* f_start, double* f_end) noexcept nogil:
    cdef double* S = work
    cdef double* Y = S + mem * p
    cdef double* rho = Y + mem * p
    cdef double* alph = rho + mem
    cdef double* g = alph + mem
    cdef double* d = g + p
    cdef double* zt = d + p
    cdef double* gt = zt + p
    cdef double* r = gt + p
    cdef double* a = r + p
    cdef int j, i, idx, k = 0, head = 0, evals, status
    cdef double f, ft, gd, step, sy, yy, beta, gamma, gmax

    f = _row_fg(x, z, m, om, p, r, a, g)
    evals = 1
    f_start[0] = f
    f_end[0] = f
    if not isfinite(f):
        return 3
    gmax = _maxabs(g, p)
    if gmax <= gtol:
        return 0
    gamma = 1.0 / gmax if gmax > 1.0 else 1.0

    while True:
        # two-loop recursion, newest pair first
        for j in range(p):
            d[j] = g[j]
        for i in range(k):
            idx = (head - 1 - i + mem) % mem
            alph[idx] = rho[idx] * _dot(S + idx * p, d, p)
            for j in range(p):
                d[j] -= alph[idx] * Y[idx * p + j]
        for j in range(p):
            d[j] *= gamma
        for i in range(k - 1, -1, -1):
            idx = (head - 1 - i + mem) % mem
            beta = rho[idx] * _dot(Y + idx * p, d, p)
            for j in range(p):
                d[j] += S[idx * p + j] * (alph[idx] - beta)
        for j in range(p):
            d[j] = -d[j]
        gd = _dot(g, d, p)
        if not (gd < 0.0):
            # lost descent: restart from scaled steepest descent
            k = 0
            gmax = _maxabs(g, p)
            gamma = 1.0 / gmax if gmax > 1.0 else 1.0
            for j in range(p):
                d[j] = -gamma * g[j]
            gd = _dot(g, d, p)

        step = 1.0
        while True:
            for j in range(p):
                zt[j] = z[j] + step * d[j]
            ft = _row_fg(x, zt, m, om, p, r, a, gt)
            evals += 1
            if isfinite(ft) and ft <= f + ARMIJO_C1 * step * gd:
                break
            if evals >= max_evals:
                f_end[0] = f
                return 1
            step *= 0.5
            if step < MIN_STEP:
                f_end[0] = f
                return 2

        sy = 0.0
        yy = 0.0
        for j in range(p):
            S[head * p + j] = zt[j] - z[j]
            Y[head * p + j] = gt[j] - g[j]
            sy += S[head * p + j] * Y[head * p + j]
            yy += Y[head * p + j] * Y[head * p + j]
        if sy > 1e-12 * yy and yy > 0.0:
            rho[head] = 1.0 / sy
            gamma = sy / yy
            head = (head + 1) % mem
            if k < mem:
                k += 1
        for j in range(p):
            z[j] = zt[j]
            g[j] = gt[j]
        f = ft
        f_end[0] = f
        if _maxabs(g, p) <= gtol:
            return 0
        if evals >= max_evals:
            return 1


def row_objective_grad(x, z, m, omega):
    """Return (objective, gradient) for one latent row."""
    cdef cnp.ndarray[double, ndim=1, mode="c"] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] mv = np.ascontiguousarray(m, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] om = np.ascontiguousarray(omega, dtype=np.float64)
    cdef int p = zv.shape[0]
    cdef cnp.ndarray[double, ndim=1, mode="c"] g = np.empty(p)
    cdef cnp.ndarray[double, ndim=1, mode="c"] r = np.empty(p)
    cdef cnp.ndarray[double, ndim=1, mode="c"] a = np.empty(p)
    if xv.shape[0] != p or mv.shape[0] != p or om.shape[0] != p or om.shape[1] != p:
        raise ValueError("row dimensions do not match")
    cdef double f = _row_fg(&xv[0], &zv[0], &mv[0], &om[0, 0], p, &r[0], &a[0], &g[0])
    return f, g


def optimize_rows(X, means, omega, Z0, int memory=10, double gtol=1e-5,
                  int max_evals=200, int n_threads=1):
    """Minimise every row objective from the starting rows ``Z0``.

    Returns (Z, status, f_start, f_end) with one status code per row.
    """
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Mv = np.ascontiguousarray(means, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] om = np.ascontiguousarray(omega, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Z = np.array(Z0, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = Z.shape[0]
    cdef int p = Z.shape[1]
    if Xv.shape[0] != n or Mv.shape[0] != n or Xv.shape[1] != p or Mv.shape[1] != p:
        raise ValueError("row matrices do not share a shape")
    if om.shape[0] != p or om.shape[1] != p:
        raise ValueError("precision matrix does not match p")
    cdef cnp.ndarray[int, ndim=1, mode="c"] status = np.zeros(n, dtype=np.intc)
    cdef cnp.ndarray[double, ndim=1, mode="c"] f0 = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1, mode="c"] f1 = np.zeros(n)
    if n == 0 or p == 0:
        return Z, status, f0, f1
    cdef Py_ssize_t i
    cdef size_t wsize = (2 * memory * p + 2 * memory + 6 * p) * sizeof(double)
    cdef double* work
    cdef double* xp = &Xv[0, 0]
    cdef double* mp = &Mv[0, 0]
    cdef double* zp = &Z[0, 0]
    cdef double* op = &om[0, 0]
    cdef int* sp = &status[0]
    cdef double* f0p = &f0[0]
    cdef double* f1p = &f1[0]
    if n_threads < 1:
        n_threads = 1
    for i in prange(n, nogil=True, schedule="static", num_threads=n_threads):
        work = <double*> malloc(wsize)
        if work == NULL:
            sp[i] = 3
        else:
            sp[i] = _lbfgs_row(xp + i * p, mp + i * p, op, p, zp + i * p, memory,
                               gtol, max_evals, work, f0p + i, f1p + i)
            free(work)
    return Z, status, f0, f1
