"""Core data types for Gaussian lag-1 dynamic Bayesian networks.

Indices are 0-based throughout. Adjacency-style matrices are oriented
``[parent, child]``: entry ``(i, j)`` refers to the arc ``X_i(t-1) -> X_j(t)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Panel of ``N`` multivariate series with ``T + 1`` time slices.

    ``values`` has shape ``(N, k, T + 1)``. ``mask`` is True where a cell is
    observed; values under a False mask are ignored by every consumer (they may
    hold NaN, a current imputation, or the held-out truth).
    """

    values: np.ndarray
    mask: np.ndarray
    variable_names: tuple[str, ...] = ()
    sample_ids: tuple[str, ...] = ()
    times: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3:
            raise DimensionError(f"values must be 3-D (N, k, T+1), got shape {values.shape}")
        mask = np.broadcast_to(np.asarray(self.mask, dtype=bool), values.shape).copy()
        N, k, T1 = values.shape
        if N < 1 or k < 1 or T1 < 2:
            raise DimensionError(f"need N >= 1, k >= 1, T >= 1; got shape {values.shape}")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed cells must be finite")
        names = tuple(self.variable_names) or tuple(f"X{i + 1}" for i in range(k))
        ids = tuple(self.sample_ids) or tuple(f"s{n + 1}" for n in range(N))
        if len(names) != k or len(ids) != N:
            raise DimensionError("variable_names / sample_ids do not match the tensor shape")
        times = np.arange(T1, dtype=float) if self.times is None else np.asarray(self.times, float)
        if times.shape != (T1,):
            raise DimensionError("times must have one entry per slice")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "times", times)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def T(self) -> int:
        return self.values.shape[2] - 1

    @property
    def missing_cells(self) -> np.ndarray:
        """``(m, 3)`` int array of ``(n, i, t)`` for masked-out cells.

        Ordered per sample, then time ascending, then variable ascending.
        """
        n, i, t = np.nonzero(~self.mask)
        order = np.lexsort((i, t, n))
        return np.column_stack([n[order], i[order], t[order]]).astype(np.int64)

    def with_mask(self, mask: np.ndarray) -> "TimeSeriesDataset":
        return replace(self, mask=np.asarray(mask, dtype=bool))

    def with_values(self, values: np.ndarray) -> "TimeSeriesDataset":
        return replace(self, values=np.asarray(values, dtype=float))

    def observed_values(self) -> np.ndarray:
        """Copy of ``values`` with NaN in every missing cell."""
        out = self.values.copy()
        out[~self.mask] = np.nan
        return out


@dataclass(frozen=True)
class LaggedDataset:
    response: np.ndarray   # (N*T, k), x_i^t for t = 1..T
    predictor: np.ndarray  # (N*T, k), x_i^{t-1}
    row_index: np.ndarray  # (N*T, 2) of (n, t)

    @property
    def n_rows(self) -> int:
        return self.response.shape[0]


@dataclass(frozen=True)
class DbnStructure:
    parent_sets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        sets = tuple(tuple(sorted(set(int(p) for p in ps))) for ps in self.parent_sets)
        k = len(sets)
        for ps in sets:
            if ps and (ps[0] < 0 or ps[-1] >= k):
                raise ValueError(f"parent index out of range for k={k}: {ps}")
        object.__setattr__(self, "parent_sets", sets)

    @property
    def k(self) -> int:
        return len(self.parent_sets)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.k, self.k), dtype=bool)
        for j, ps in enumerate(self.parent_sets):
            adj[list(ps), j] = True
        return adj

    @classmethod
    def from_adjacency(cls, adj: np.ndarray) -> "DbnStructure":
        adj = np.asarray(adj, dtype=bool)
        return cls(tuple(tuple(np.flatnonzero(adj[:, j]).tolist()) for j in range(adj.shape[1])))

    def max_fan_in(self) -> int:
        return max((len(ps) for ps in self.parent_sets), default=0)


@dataclass
class RegressionParams:
    """Per-node regression parameters in dense form.

    ``weights[p, j]`` is the coefficient of parent ``p`` in node ``j``'s
    regression and is zero for non-parents.
    """

    intercept: np.ndarray
    weights: np.ndarray
    sigma2: np.ndarray
    delta2: np.ndarray

    def __post_init__(self):
        self.intercept = np.asarray(self.intercept, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        self.delta2 = np.asarray(self.delta2, dtype=float)
        k = self.intercept.shape[0]
        if self.weights.shape != (k, k) or self.sigma2.shape != (k,) or self.delta2.shape != (k,):
            raise DimensionError("inconsistent parameter shapes")
        if np.any(self.sigma2 < 0) or np.any(self.delta2 <= 0):
            raise ValueError("sigma2 must be >= 0 and delta2 > 0")

    @classmethod
    def initial(cls, k: int) -> "RegressionParams":
        return cls(np.zeros(k), np.zeros((k, k)), np.ones(k), np.ones(k))

    def beta(self, j: int, parents: Sequence[int]) -> np.ndarray:
        """Intercept followed by coefficients ordered as ``parents``."""
        return np.concatenate([[self.intercept[j]], self.weights[list(parents), j]])

    def copy(self) -> "RegressionParams":
        return RegressionParams(self.intercept.copy(), self.weights.copy(),
                                self.sigma2.copy(), self.delta2.copy())


@dataclass(frozen=True)
class Priors:
    """Conjugate hyperparameters.

    ``mu[j, 0]`` is the prior intercept mean for node ``j``; ``mu[j, 1 + p]``
    the prior mean of parent ``p``'s coefficient.
    """

    k: int
    a_sigma: float = 0.01
    b_sigma: float = 0.01
    a_delta: float = 0.01
    b_delta: float = 0.01
    lam: float = 1.0
    fan_in_max: int = 5
    mu: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("a_sigma", "b_sigma", "a_delta", "b_delta", "lam"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.fan_in_max < 0:
            raise ValueError("fan_in_max must be >= 0")
        mu = np.zeros((self.k, self.k + 1)) if self.mu is None else np.asarray(self.mu, float)
        if mu.shape != (self.k, self.k + 1):
            raise DimensionError(f"mu must have shape ({self.k}, {self.k + 1})")
        object.__setattr__(self, "mu", mu)

    def mu_for(self, j: int, parents: Sequence[int]) -> np.ndarray:
        return self.mu[j, np.concatenate([[0], np.asarray(parents, dtype=int) + 1])]


@dataclass(frozen=True)
class McmcConfig:
    epochs: int = 20_000
    missing_update_interval: int = 10
    burn_in: int = 5_000
    thinning: int = 5
    chains: int = 5
    seed: int = 0
    record_missing_trace: bool = True

    def __post_init__(self):
        if not 0 < self.burn_in < self.epochs:
            raise ValueError("need 0 < burn_in < epochs")
        if self.missing_update_interval < 1 or self.thinning < 1 or self.chains < 1:
            raise ValueError("missing_update_interval, thinning and chains must be >= 1")


def lag_dataset(d: TimeSeriesDataset) -> LaggedDataset:
    """Pair every slice ``t = 1..T`` with its predecessor, sample-major."""
    values = d.values
    N, k, T1 = values.shape
    if T1 < 2:
        raise DimensionError("need at least two time slices to lag")
    response = values[:, :, 1:].transpose(0, 2, 1).reshape(N * (T1 - 1), k)
    predictor = values[:, :, :-1].transpose(0, 2, 1).reshape(N * (T1 - 1), k)
    nn, tt = np.meshgrid(np.arange(N), np.arange(1, T1), indexing="ij")
    return LaggedDataset(response, predictor, np.column_stack([nn.ravel(), tt.ravel()]))


def design_matrix(lagged: LaggedDataset, node: int, parents: Sequence[int]):
    """Return ``(Y, X)`` with ``X = [1 | parent predictors in ascending order]``."""
    parents = sorted(parents)
    X = np.empty((lagged.n_rows, len(parents) + 1))
    X[:, 0] = 1.0
    X[:, 1:] = lagged.predictor[:, parents]
    return lagged.response[:, node].copy(), X
