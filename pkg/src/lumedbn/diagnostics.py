"""Convergence monitoring and reconstruction scoring."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import DbnStructure
from .sampler import PosteriorTrace


class DiagnosticError(ValueError):
    pass


def psrf(chains, upto: int | None = None):
    """Gelman-Rubin potential scale reduction factor over chain prefixes.

    ``chains`` has shape ``(R, n)`` or ``(R, n, Q)`` for ``Q`` quantities at
    once; only the first ``upto`` samples of each chain are used.

    Uses ``sqrt((n-1)/n + B/(n W))`` with ``W`` the mean within-chain variance
    and ``B/n`` the variance of the chain means. ``W = B = 0`` gives exactly 1;
    ``W = 0 < B`` gives ``inf``.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim < 2 or x.shape[0] < 2:
        raise DiagnosticError("PSRF needs at least two chains")
    if upto is not None:
        x = x[:, :upto]
    n = x.shape[1]
    if n < 4:
        raise DiagnosticError("PSRF needs at least four samples per chain")
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    B_over_n = means.var(axis=0, ddof=1)
    # exact zeros for constant chains, so the conventions below trigger reliably
    W = np.where(np.all(x == x[:, :1], axis=(0, 1)) | (W < 1e-300), 0.0, W)
    B_over_n = np.where(np.all(means == means[:1], axis=0), 0.0, B_over_n)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt((n - 1) / n + B_over_n / W)
    r = np.where(W == 0, np.where(B_over_n == 0, 1.0, np.inf), r)
    return float(r) if r.ndim == 0 else r


def phi_fraction(chains, upto: int, threshold: float = 1.1) -> float:
    """Fraction of monitored quantities with PSRF below ``threshold``."""
    x = np.asarray(chains, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.shape[2] == 0:
        return 1.0
    return float(np.mean(psrf(x, upto) < threshold))


def phi_trajectory(chains, stride: int = 50, threshold: float = 1.1, start: int = 4):
    """``(epochs, phi)`` evaluated on growing prefixes every ``stride`` epochs."""
    x = np.asarray(chains, dtype=float)
    n = x.shape[1]
    epochs = np.arange(max(start, stride), n + 1, stride)
    if len(epochs) == 0 or epochs[-1] != n:
        epochs = np.append(epochs, n)
    return epochs, np.array([phi_fraction(x, int(e), threshold) for e in epochs])


def convergence_epoch(epochs, phi, window: int = 100):
    """First epoch from which ``phi`` stays at 1 to the end of the run.

    Returns None when ``phi`` is not 1 at the final evaluation or when the
    stable stretch is shorter than ``window`` epochs.
    """
    epochs = np.asarray(epochs)
    ok = np.asarray(phi) >= 1.0
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    first = 0 if len(bad) == 0 else bad[-1] + 1
    if epochs[-1] - epochs[first] < window:
        return None
    return int(epochs[first])


def arc_series(traces: Sequence[PosteriorTrace]) -> np.ndarray:
    """``(R, E, k*k)`` arc-indicator array."""
    return np.stack([t.adjacency.reshape(len(t), -1) for t in traces]).astype(float)


def missing_series(traces: Sequence[PosteriorTrace]) -> np.ndarray:
    if any(t.imputations is None for t in traces):
        return np.zeros((len(traces), len(traces[0]), 0))
    return np.stack([t.imputations for t in traces])


def burn_in_thin(trace, burn_in: int, thinning: int):
    """Keep epochs ``e > burn_in`` with ``(e - burn_in) % thinning == 0``.

    Works on a :class:`PosteriorTrace` (whose epochs are numbered from 1) or
    on any sequence, treating position ``r`` as epoch ``r + 1``.
    """
    n = len(trace)
    if burn_in >= n:
        raise DiagnosticError(f"burn-in {burn_in} leaves nothing of a length-{n} trace")
    if thinning < 1:
        raise DiagnosticError("thinning must be >= 1")
    rows = np.arange(burn_in + thinning - 1, n, thinning)
    if isinstance(trace, PosteriorTrace):
        return trace.subset(rows)
    if isinstance(trace, np.ndarray):
        return trace[rows]
    return [trace[r] for r in rows]


def inclusion_probabilities(traces: Sequence[PosteriorTrace]) -> np.ndarray:
    """Posterior arc frequencies pooled over all retained samples of all chains."""
    adj = np.concatenate([t.adjacency for t in traces])
    if len(adj) == 0:
        raise DiagnosticError("no retained samples")
    return adj.sum(axis=0) / len(adj)


def pr_curve(scores, truth):
    """Tie-grouped precision-recall steps as ``(recall, precision)`` arrays."""
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(truth, dtype=bool).ravel()
    n_pos = int(y.sum())
    if n_pos == 0:
        raise DiagnosticError("AUC-PR undefined without positive arcs")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    block_end = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tp = np.cumsum(y)[block_end]
    seen = block_end + 1
    return tp / n_pos, tp / seen


def auc_pr(scores, truth) -> float:
    """Average-precision area: sum of precision times recall increment, per tie block."""
    recall, precision = pr_curve(scores, truth)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def threshold_network(probs, tau: float = 0.8) -> DbnStructure:
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    return DbnStructure.from_adjacency(np.asarray(probs) >= tau)


def posterior_mean_imputation(traces: Sequence[PosteriorTrace]) -> np.ndarray:
    imps = [t.imputations for t in traces if t.imputations is not None]
    if not imps:
        raise DiagnosticError("traces carry no imputations")
    return np.concatenate(imps).mean(axis=0)


def imputation_rmse(imputed, truth) -> float:
    imputed = np.asarray(imputed, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if imputed.size == 0:
        raise DiagnosticError("RMSE undefined for an empty mask")
    return float(np.sqrt(np.mean((imputed - truth) ** 2)))
