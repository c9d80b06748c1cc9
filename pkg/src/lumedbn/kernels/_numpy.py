"""Pure-numpy implementations of the loop kernels."""
import numpy as np
from scipy.linalg import solve_triangular


def lagged_gram(values):
    N, k, T1 = values.shape
    Z = np.empty((N * (T1 - 1), 2 * k + 1))
    Z[:, 0] = 1.0
    Z[:, 1:k + 1] = values[:, :, :-1].transpose(0, 2, 1).reshape(-1, k)
    Z[:, k + 1:] = values[:, :, 1:].transpose(0, 2, 1).reshape(-1, k)
    return Z.T @ Z


def _cholesky(A):
    try:
        return np.linalg.cholesky(A), 0
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(A + 1e-10 * np.eye(A.shape[0])), 1
    except np.linalg.LinAlgError:
        return np.zeros_like(A), 2


def chol_backsolve(L, y):
    return solve_triangular(L, y, lower=True, trans="T")


def conjugate_terms(G, idx, resp, mu, delta2):
    xtx = G[np.ix_(idx, idx)]
    xty = G[idx, resp]
    xtm = xty - xtx @ mu
    mtm = G[resp, resp] - 2.0 * mu @ xty + mu @ xtx @ mu
    p = len(idx)
    L, status = _cholesky(xtx + np.eye(p) / delta2)
    if status == 2:
        return np.zeros(p), L, np.nan, np.nan, status
    y = solve_triangular(L, xtm, lower=True)
    shift = solve_triangular(L, y, lower=True, trans="T")
    quad = max(mtm - y @ y, 0.0)
    logdet = p * np.log(delta2) + 2.0 * np.log(np.diag(L)).sum()
    return shift, L, logdet, quad, status


def _fcd_batch(values, ns, i, t, adj, intercept, weights, sigma2, t0_mean, t0_var):
    T = values.shape[2] - 1
    prec = np.zeros(len(ns))
    num = np.zeros(len(ns))
    if t >= 1:
        m_own = intercept[i] + values[ns, :, t - 1] @ (weights[:, i] * adj[:, i])
        prec += 1.0 / sigma2[i]
        num += m_own / sigma2[i]
    else:
        prec += 1.0 / t0_var
        num += t0_mean / t0_var
    if t + 1 <= T:
        children = np.flatnonzero(adj[i])
        if children.size:
            w = weights * adj
            b = w[i, children]
            w_rest = w[:, children].copy()
            w_rest[i] = 0.0
            rest = intercept[children] + values[ns, :, t] @ w_rest
            resid = values[ns][:, children, t + 1] - rest
            prec += np.sum(b * b / sigma2[children])
            num += resid @ (b / sigma2[children])
    return prec, num


def cell_fcd(values, n, i, t, adj, intercept, weights, sigma2, t0_mean, t0_var):
    prec, num = _fcd_batch(values, np.array([n]), i, t, adj, intercept, weights, sigma2,
                           t0_mean, t0_var)
    return float(prec[0]), float(num[0])


def gibbs_sweep(values, cells, adj, intercept, weights, sigma2, fb_mean, fb_sd, z):
    # Cells sharing (t, i) sit in different samples and are conditionally
    # independent, so each (t, i) group is drawn in one vectorised step.
    if len(cells) == 0:
        return
    order = np.lexsort((cells[:, 0], cells[:, 1], cells[:, 2]))
    key = cells[order, 2] * values.shape[1] + cells[order, 1]
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    ends = np.r_[starts[1:], len(order)]
    for s, e in zip(starts, ends):
        rows = order[s:e]
        i, t = cells[rows[0], 1], cells[rows[0], 2]
        ns = cells[rows, 0]
        prec, num = _fcd_batch(values, ns, i, t, adj, intercept, weights, sigma2,
                               fb_mean[i], fb_sd[i] ** 2)
        ok = prec > 0.0
        draw = np.empty(len(rows))
        var = 1.0 / np.where(ok, prec, 1.0)
        draw[ok] = (var * num + np.sqrt(var) * z[rows])[ok]
        draw[~ok] = fb_mean[i] + fb_sd[i] * z[rows][~ok]
        values[ns, i, t] = draw
