"""Random ground-truth DBNs, trajectory simulation and MCAR masking."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import DbnStructure, RegressionParams, TimeSeriesDataset


@dataclass(frozen=True)
class GeneratorConfig:
    k: int = 10
    fan_in_max: int = 5
    coef_low: float = 0.2
    coef_high: float = 0.8
    noise_variance: float = 1.0
    T: int = 100
    n_series: int = 1
    seed: int = 0
    random_signs: bool = False

    def __post_init__(self):
        if self.k < 1 or self.T < 1 or self.n_series < 1:
            raise ValueError("k, T and n_series must be >= 1")
        if self.coef_low > self.coef_high:
            raise ValueError("coef_low must not exceed coef_high")
        if self.fan_in_max < 0 or self.noise_variance < 0:
            raise ValueError("fan_in_max and noise_variance must be non-negative")


@dataclass(frozen=True)
class GroundTruth:
    structure: DbnStructure
    params: RegressionParams
    order: np.ndarray  # generating permutation: order[r] is the node at rank r

    @property
    def adjacency(self) -> np.ndarray:
        return self.structure.adjacency()


def generate_random_dbn(cfg: GeneratorConfig, rng: np.random.Generator) -> GroundTruth:
    """Random DAG over a random node ordering, with uniform coefficients.

    Each node draws a parent-set size uniformly from ``0..min(fan_in_max,
    #predecessors)`` and then that many distinct predecessors.
    """
    k = cfg.k
    order = rng.permutation(k)
    weights = np.zeros((k, k))
    parent_sets = [()] * k
    for rank, node in enumerate(order):
        size = int(rng.integers(min(cfg.fan_in_max, rank) + 1))
        ps = np.sort(rng.choice(order[:rank], size=size, replace=False)) if size else np.array([], int)
        coefs = rng.uniform(cfg.coef_low, cfg.coef_high, size=size)
        if cfg.random_signs:
            coefs *= rng.choice([-1.0, 1.0], size=size)
        weights[ps, node] = coefs
        parent_sets[node] = tuple(ps.tolist())
    params = RegressionParams(np.zeros(k), weights, np.full(k, float(cfg.noise_variance)), np.ones(k))
    return GroundTruth(DbnStructure(tuple(parent_sets)), params, order)


def simulate_series(truth: GroundTruth, N: int, T: int, rng: np.random.Generator,
                    variable_names=()) -> TimeSeriesDataset:
    """Fully observed trajectories; the first slice is i.i.d. standard normal."""
    p = truth.params
    k = p.intercept.shape[0]
    x = np.empty((N, k, T + 1))
    x[:, :, 0] = rng.standard_normal((N, k))
    sd = np.sqrt(p.sigma2)
    for t in range(1, T + 1):
        x[:, :, t] = p.intercept + x[:, :, t - 1] @ p.weights + sd * rng.standard_normal((N, k))
    return TimeSeriesDataset(x, np.ones_like(x, dtype=bool), tuple(variable_names))


def inject_mcar(d: TimeSeriesDataset, rate: float, rng: np.random.Generator) -> TimeSeriesDataset:
    """Drop each cell independently with probability ``rate``.

    Values under the new mask are left in place so reconstruction error can be
    measured later.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    drop = rng.random(d.values.shape) < rate
    return replace(d, mask=d.mask & ~drop)


def make_dataset(cfg: GeneratorConfig, rate: float = 0.0, replicate: int = 0, T: int | None = None):
    """``(truth, complete, incomplete)`` for one replicate.

    Streams are keyed on ``cfg.seed``: the DBN on ``(seed, replicate)``, the
    series on ``(seed, replicate, 1, T)`` and the mask on
    ``(seed, replicate, 2, T, round(rate * 1e6))``.
    """
    T = cfg.T if T is None else T
    truth = generate_random_dbn(cfg, np.random.default_rng([cfg.seed, replicate]))
    complete = simulate_series(truth, cfg.n_series, T, np.random.default_rng([cfg.seed, replicate, 1, T]))
    mask_rng = np.random.default_rng([cfg.seed, replicate, 2, T, int(round(rate * 1e6))])
    return truth, complete, inject_mcar(complete, rate, mask_rng)
