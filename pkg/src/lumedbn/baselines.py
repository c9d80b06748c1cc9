"""Single-completion imputation baselines and the complete-data learner."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import McmcConfig, Priors, TimeSeriesDataset
from .sampler import PosteriorTrace, run_lume_dbn


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class MiceConfig:
    max_iterations: int = 20
    tolerance: float = 1e-4
    ridge: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or self.tolerance < 0:
            raise ValueError("need max_iterations >= 1 and tolerance >= 0")


def _ridge_fit(X, y, ridge):
    """Least squares with an intercept; ``ridge`` penalises slopes only."""
    A = np.column_stack([np.ones(len(X)), X])
    pen = np.full(A.shape[1], ridge)
    pen[0] = 0.0
    lhs = A.T @ A + np.diag(pen)
    try:
        return np.linalg.solve(lhs, A.T @ y)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError("singular baseline regression") from exc


def _predict(coef, X):
    return coef[0] + X @ coef[1:]


def _column_means(obs, mask):
    with np.errstate(invalid="ignore"):
        cnt = mask.sum(axis=0)
        return np.where(cnt > 0, np.where(mask, obs, 0.0).sum(axis=0) / np.maximum(cnt, 1), 0.0)


def _chained_equations(rows, rows_mask, design, cfg: MiceConfig):
    """Generic loop; ``design(filled, i)`` returns ``(X, target_rows)``."""
    filled = rows.copy()
    miss = ~rows_mask
    targets = [i for i in range(rows.shape[1]) if miss[:, i].any()]
    for _ in range(cfg.max_iterations):
        before = filled[miss].copy()
        for i in targets:
            X, valid = design(filled, i)
            fit_rows = valid & rows_mask[:, i]
            pred_rows = valid & miss[:, i]
            if not pred_rows.any() or not fit_rows.any():
                continue
            coef = _ridge_fit(X[fit_rows], filled[fit_rows, i], cfg.ridge)
            filled[pred_rows, i] = _predict(coef, X[pred_rows])
        change = np.sqrt(np.mean((filled[miss] - before) ** 2)) if miss.any() else 0.0
        if change < cfg.tolerance:
            break
    return filled


def mice_impute(d: TimeSeriesDataset, cfg: MiceConfig = MiceConfig()) -> TimeSeriesDataset:
    """Chained equations over ``(sample, time)`` records using same-slice predictors."""
    N, k, T1 = d.values.shape
    if d.mask.all():
        return d
    rows = d.observed_values().transpose(0, 2, 1).reshape(-1, k)
    rmask = d.mask.transpose(0, 2, 1).reshape(-1, k)
    rows = np.where(rmask, rows, _column_means(rows, rmask))
    everything = np.ones(len(rows), dtype=bool)

    def design(filled, i):
        return np.delete(filled, i, axis=1), everything

    filled = _chained_equations(rows, rmask, design, cfg)
    values = filled.reshape(N, T1, k).transpose(0, 2, 1)
    return TimeSeriesDataset(values, np.ones_like(d.mask), d.variable_names, d.sample_ids, d.times)


def temporal_mice_impute(d: TimeSeriesDataset, cfg: MiceConfig = MiceConfig()) -> TimeSeriesDataset:
    """Chained equations regressing each variable at ``t >= 1`` on all variables at ``t - 1``.

    Missing cells at ``t = 0`` take the variable's observed mean at time 0
    (overall observed mean if none) and are not refined.
    """
    N, k, T1 = d.values.shape
    if d.mask.all():
        return d
    obs = d.observed_values()
    overall = _column_means(obs.transpose(0, 2, 1).reshape(-1, k), d.mask.transpose(0, 2, 1).reshape(-1, k))
    t0 = np.where(d.mask[:, :, 0].any(axis=0),
                  _column_means(obs[:, :, 0], d.mask[:, :, 0]), overall)
    values = np.where(d.mask, obs, overall[None, :, None])
    values[:, :, 0] = np.where(d.mask[:, :, 0], obs[:, :, 0], t0)

    rows = values.transpose(0, 2, 1).reshape(-1, k)
    rmask = d.mask.transpose(0, 2, 1).reshape(-1, k)
    time_of_row = np.tile(np.arange(T1), N)
    not_first = time_of_row >= 1
    rmask_loop = rmask | ~not_first[:, None]  # t = 0 cells are frozen

    def design(filled, i):
        lagged = np.empty_like(filled)
        lagged[1:] = filled[:-1]
        lagged[~not_first] = 0.0
        return lagged, not_first

    filled = _chained_equations(rows, rmask_loop, design, cfg)
    values = filled.reshape(N, T1, k).transpose(0, 2, 1)
    return TimeSeriesDataset(values, np.ones_like(d.mask), d.variable_names, d.sample_ids, d.times)


def learn_complete(d: TimeSeriesDataset, priors: Priors, config: McmcConfig,
                   rng: np.random.Generator, kern=None) -> PosteriorTrace:
    """Structure learning on a fully observed dataset (no imputation move)."""
    if not d.mask.all():
        raise PreconditionError("learn_complete requires a fully observed dataset")
    return run_lume_dbn(d, priors, config, rng, impute=False, kern=kern)
