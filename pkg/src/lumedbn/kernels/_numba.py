"""Loop kernels compiled with numba.

Every function here has a numpy twin in ``_numpy.py`` with the same
signature and semantics; ``tests/test_kernels.py`` holds them to each other.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def lagged_gram(values):
    N, k, T1 = values.shape
    d = 2 * k + 1
    G = np.zeros((d, d))
    z = np.empty(d)
    for n in range(N):
        for t in range(1, T1):
            z[0] = 1.0
            for i in range(k):
                z[1 + i] = values[n, i, t - 1]
                z[1 + k + i] = values[n, i, t]
            for a in range(d):
                za = z[a]
                for b in range(a, d):
                    G[a, b] += za * z[b]
    for a in range(d):
        for b in range(a):
            G[a, b] = G[b, a]
    return G


@njit(cache=True)
def _cholesky(A, jitter):
    p = A.shape[0]
    L = np.zeros((p, p))
    for j in range(p):
        s = A[j, j] + jitter
        for m in range(j):
            s -= L[j, m] * L[j, m]
        if not s > 0.0 or not np.isfinite(s):
            return L, False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, p):
            s = A[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            L[i, j] = s / L[j, j]
    return L, True


@njit(cache=True)
def _forward(L, r):
    p = L.shape[0]
    y = np.empty(p)
    for i in range(p):
        s = r[i]
        for m in range(i):
            s -= L[i, m] * y[m]
        y[i] = s / L[i, i]
    return y


@njit(cache=True)
def chol_backsolve(L, y):
    """Solve ``L.T @ x = y`` for lower-triangular ``L``."""
    p = L.shape[0]
    x = np.empty(p)
    for i in range(p - 1, -1, -1):
        s = y[i]
        for m in range(i + 1, p):
            s -= L[m, i] * x[m]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def conjugate_terms(G, idx, resp, mu, delta2):
    """Collapsed-regression quantities from a Gram matrix.

    Returns ``(shift, L, logdet_c, quad, status)`` where ``shift`` solves
    ``(XtX + I/delta2) shift = Xt(Y - X mu)``, ``L`` is the Cholesky factor of
    that precision, ``logdet_c = log det(I + delta2 X Xt)`` and
    ``quad = M' (I + delta2 X Xt)^-1 M`` with ``M = Y - X mu``.
    ``status`` is 0 (clean), 1 (needed jitter) or 2 (failed).
    """
    p = idx.shape[0]
    P = np.empty((p, p))
    xtm = np.empty(p)
    inv_d = 1.0 / delta2
    mtm = G[resp, resp]
    for a in range(p):
        ga = idx[a]
        s = G[ga, resp]
        for b in range(p):
            gab = G[ga, idx[b]]
            P[a, b] = gab
            s -= gab * mu[b]
        xtm[a] = s
        P[a, a] += inv_d
        mtm -= 2.0 * mu[a] * G[ga, resp]
        for b in range(p):
            mtm += mu[a] * G[ga, idx[b]] * mu[b]
    L, ok = _cholesky(P, 0.0)
    status = 0
    if not ok:
        L, ok = _cholesky(P, 1e-10)
        status = 1 if ok else 2
    if status == 2:
        return np.zeros(p), L, np.nan, np.nan, status
    y = _forward(L, xtm)
    shift = chol_backsolve(L, y)
    quad = mtm
    logdet = p * np.log(delta2)
    for a in range(p):
        quad -= y[a] * y[a]
        logdet += 2.0 * np.log(L[a, a])
    if quad < 0.0:
        quad = 0.0
    return shift, L, logdet, quad, status


@njit(cache=True)
def cell_fcd(values, n, i, t, adj, intercept, weights, sigma2, t0_mean, t0_var):
    """Accumulated precision and precision-weighted mean for one cell.

    At ``t = 0`` the own term is the Gaussian ``(t0_mean, t0_var)``;
    ``t0_var = inf`` drops it.
    """
    k = values.shape[1]
    T = values.shape[2] - 1
    prec = 0.0
    num = 0.0
    if t >= 1:
        m_own = intercept[i]
        for p in range(k):
            if adj[p, i]:
                m_own += weights[p, i] * values[n, p, t - 1]
        prec += 1.0 / sigma2[i]
        num += m_own / sigma2[i]
    else:
        prec += 1.0 / t0_var
        num += t0_mean / t0_var
    if t + 1 <= T:
        for j in range(k):
            if adj[i, j]:
                b = weights[i, j]
                rest = intercept[j]
                for m in range(k):
                    if m != i and adj[m, j]:
                        rest += weights[m, j] * values[n, m, t]
                prec += b * b / sigma2[j]
                num += b * (values[n, j, t + 1] - rest) / sigma2[j]
    return prec, num


@njit(cache=True)
def gibbs_sweep(values, cells, adj, intercept, weights, sigma2, fb_mean, fb_sd, z):
    """Systematic-scan update of every cell in ``cells``, in place.

    Callers pass cells sorted by (sample, time, variable); ``z[c]`` drives cell ``c``.
    """
    for c in range(cells.shape[0]):
        n = cells[c, 0]
        i = cells[c, 1]
        t = cells[c, 2]
        prec, num = cell_fcd(values, n, i, t, adj, intercept, weights, sigma2,
                             fb_mean[i], fb_sd[i] * fb_sd[i])
        if prec > 0.0:
            var = 1.0 / prec
            values[n, i, t] = var * num + np.sqrt(var) * z[c]
        else:
            values[n, i, t] = fb_mean[i] + fb_sd[i] * z[c]
