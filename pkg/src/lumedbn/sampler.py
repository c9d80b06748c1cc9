"""MCMC moves for Gaussian DBN structure learning with missing data.

The per-node regression quantities are all read off the Gram matrix of the
lagged design ``Z = [1 | X(t-1) | X(t)]`` (see :func:`lumedbn.kernels`), so a
move on a node with ``p`` parents costs a ``(p+1) x (p+1)`` Cholesky
factorisation regardless of the number of rows.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .model import DbnStructure, McmcConfig, Priors, RegressionParams, TimeSeriesDataset

log = logging.getLogger(__name__)

DELETION, ADDITION, EXCHANGE = "deletion", "addition", "exchange"


class NumericalError(ArithmeticError):
    pass


class ProposalError(ValueError):
    pass


class DegenerateCellError(ArithmeticError):
    pass


@dataclass(frozen=True)
class InvGammaParams:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError(f"invalid inverse-gamma parameters {self}")

    def sample(self, rng: np.random.Generator) -> float:
        return self.rate / rng.standard_gamma(self.shape)


@dataclass(frozen=True)
class GaussianFcd:
    mean: float
    variance: float


@dataclass(frozen=True)
class MhProposal:
    move_kind: str
    proposed_parents: tuple[int, ...]
    hastings_ratio: float


def chain_rng(seed: int, *counters: int) -> np.random.Generator:
    """Independent stream for ``(seed, counters...)``, e.g. ``(seed, chain)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, counters)]))


# --- collapsed Bayesian linear regression -----------------------------------

def _local_gram(Y, X):
    Y = np.asarray(Y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(Y), X.shape[-1] if X.ndim == 2 else -1)
    Z = np.column_stack([X, Y])
    p = X.shape[1]
    return Z.T @ Z, np.arange(p, dtype=np.int64), p, len(Y)


def _terms(G, idx, resp, mu, delta2, kern=None):
    kern = kern or kernels.backend
    shift, L, logdet, quad, status = kern.conjugate_terms(
        G, np.asarray(idx, dtype=np.int64), int(resp), np.asarray(mu, dtype=float), float(delta2))
    if status == 2 or not np.isfinite(quad):
        raise NumericalError("posterior precision is not positive definite")
    return shift, L, logdet, quad


def _log_ml(logdet, quad, n_rows, priors):
    a, b = priors.a_sigma, priors.b_sigma
    A = n_rows / 2.0 + a
    return (math.lgamma(A) - math.lgamma(a) - n_rows / 2.0 * math.log(math.pi)
            + a * math.log(2.0 * b) - 0.5 * logdet - A * math.log(2.0 * b + quad))


def sigma2_posterior(Y, X, mu, delta2, priors: Priors) -> InvGammaParams:
    """Inverse-gamma posterior of the noise variance with ``beta`` integrated out."""
    G, idx, resp, n = _local_gram(Y, X)
    _, _, _, quad = _terms(G, idx, resp, mu, delta2)
    return InvGammaParams(priors.a_sigma + n / 2.0, priors.b_sigma + 0.5 * quad)


def beta_fcd(Y, X, mu, sigma2, delta2):
    """Mean and covariance of the Gaussian full conditional of ``beta``."""
    G, idx, resp, _ = _local_gram(Y, X)
    shift, L, _, _ = _terms(G, idx, resp, mu, delta2)
    Linv = np.linalg.inv(L)
    cov = sigma2 * (Linv.T @ Linv)
    return np.asarray(mu, dtype=float) + shift, 0.5 * (cov + cov.T)


def delta2_posterior(beta_full, mu, sigma2, priors: Priors) -> InvGammaParams:
    dev = np.asarray(beta_full, dtype=float) - np.asarray(mu, dtype=float)
    return InvGammaParams(priors.a_delta + dev.size / 2.0,
                          priors.b_delta + 0.5 * float(dev @ dev) / sigma2)


def log_marginal_likelihood(Y, X, mu, delta2, priors: Priors) -> float:
    """Log density of ``Y`` given the design, with ``beta`` and ``sigma2`` integrated out."""
    G, idx, resp, n = _local_gram(Y, X)
    _, _, logdet, quad = _terms(G, idx, resp, mu, delta2)
    return _log_ml(logdet, quad, n, priors)


# --- structure moves ---------------------------------------------------------

def structure_log_prior(parents: Sequence[int], lam: float) -> float:
    m = len(parents)
    return m * math.log(lam) - math.lgamma(m + 1)


def legal_moves(n_parents: int, k: int, fan_in_max: int) -> list[str]:
    moves = []
    if n_parents > 0:
        moves.append(DELETION)
    if n_parents < min(fan_in_max, k):
        moves.append(ADDITION)
    if 0 < n_parents < k:
        moves.append(EXCHANGE)
    return moves


def propose_structure_move(current: Sequence[int], k: int, fan_in_max: int,
                           rng: np.random.Generator) -> MhProposal:
    current = sorted(current)
    m = len(current)
    if m > fan_in_max:
        raise ProposalError(f"parent set of size {m} exceeds fan-in {fan_in_max}")
    moves = legal_moves(m, k, fan_in_max)
    if not moves:
        raise ProposalError(f"no legal structure move for k={k}, fan_in_max={fan_in_max}")
    kind = moves[rng.integers(len(moves))]
    outside = [p for p in range(k) if p not in current]
    if kind == DELETION:
        drop = current[rng.integers(m)]
        new = [p for p in current if p != drop]
        hr = m / (k - len(new))
    elif kind == ADDITION:
        new = sorted(current + [outside[rng.integers(len(outside))]])
        hr = (k - m) / len(new)
    else:
        drop = current[rng.integers(m)]
        add = outside[rng.integers(len(outside))]
        new = sorted([p for p in current if p != drop] + [add])
        hr = 1.0
    return MhProposal(kind, tuple(new), hr)


def acceptance_probability(log_ml_new: float, log_ml_old: float,
                           old: Sequence[int], new: Sequence[int],
                           lam: float, hastings_ratio: float) -> float:
    log_a = (log_ml_new - log_ml_old
             + structure_log_prior(new, lam) - structure_log_prior(old, lam)
             + math.log(hastings_ratio))
    return 1.0 if log_a >= 0 else math.exp(log_a)


def _design_index(parents):
    return np.concatenate([[0], np.asarray(parents, dtype=np.int64) + 1]).astype(np.int64)


def _draw_beta(mu, shift, L, sigma2, rng, kern):
    z = rng.standard_normal(len(mu))
    return mu + shift + math.sqrt(sigma2) * kern.chol_backsolve(L, z)


def parameter_update(G, node, parents, delta2, priors, n_rows, rng, kern=None):
    """Collapsed Gibbs draw of ``(beta, sigma2, delta2)`` for one node."""
    kern = kern or kernels.backend
    k = priors.k
    idx = _design_index(parents)
    mu = priors.mu_for(node, parents)
    shift, L, _, quad = _terms(G, idx, 1 + k + node, mu, delta2, kern)
    sigma2 = InvGammaParams(priors.a_sigma + n_rows / 2.0, priors.b_sigma + 0.5 * quad).sample(rng)
    beta = _draw_beta(mu, shift, L, sigma2, rng, kern)
    delta2 = delta2_posterior(beta, mu, sigma2, priors).sample(rng)
    return beta, sigma2, delta2


def mh_structure_update(G, node, parents, beta, sigma2, delta2, priors, n_rows, rng, kern=None):
    """One Metropolis-Hastings step on a node's parent set.

    Returns ``(parents, beta, accepted)``; on rejection the inputs come back
    unchanged.
    """
    kern = kern or kernels.backend
    k = priors.k
    parents = tuple(parents)
    if not legal_moves(len(parents), k, priors.fan_in_max):
        return parents, beta, False
    prop = propose_structure_move(parents, k, priors.fan_in_max, rng)
    resp = 1 + k + node
    mu_old = priors.mu_for(node, parents)
    mu_new = priors.mu_for(node, prop.proposed_parents)
    _, _, logdet_old, quad_old = _terms(G, _design_index(parents), resp, mu_old, delta2, kern)
    shift, L, logdet_new, quad_new = _terms(
        G, _design_index(prop.proposed_parents), resp, mu_new, delta2, kern)
    acc = acceptance_probability(_log_ml(logdet_new, quad_new, n_rows, priors),
                                 _log_ml(logdet_old, quad_old, n_rows, priors),
                                 parents, prop.proposed_parents, priors.lam, prop.hastings_ratio)
    if rng.random() < acc:
        return prop.proposed_parents, _draw_beta(mu_new, shift, L, sigma2, rng, kern), True
    return parents, beta, False


# --- missing-value moves -----------------------------------------------------

def missing_fcd(cell, values, structure: DbnStructure, params: RegressionParams,
                fallback: tuple[float, float] | None = None, kern=None) -> GaussianFcd:
    """Gaussian full conditional of the cell ``(n, i, t)`` given everything else.

    ``fallback`` is the ``(mean, variance)`` of the variable's empirical
    marginal. At ``t = 0``, where there is no own regression term, it stands in
    for one; without it a ``t = 0`` cell uses its children alone and a
    childless one raises :class:`DegenerateCellError`.
    """
    kern = kern or kernels.backend
    n, i, t = map(int, cell)
    t0_mean, t0_var = (0.0, np.inf) if fallback is None else map(float, fallback)
    prec, num = kern.cell_fcd(np.asarray(values, dtype=float), n, i, t, structure.adjacency(),
                              params.intercept, params.weights, params.sigma2, t0_mean, t0_var)
    if prec > 0:
        return GaussianFcd(num / prec, 1.0 / prec)
    if fallback is None:
        raise DegenerateCellError(f"cell {(n, i, t)} has no likelihood terms")
    return GaussianFcd(float(fallback[0]), float(fallback[1]))


def fallback_moments(d: TimeSeriesDataset):
    """Per-variable observed mean and standard deviation (0 / 1 when unavailable)."""
    obs = d.observed_values()
    k = d.n_vars
    mean = np.zeros(k)
    sd = np.ones(k)
    for i in range(k):
        x = obs[:, i, :][d.mask[:, i, :]]
        if x.size:
            mean[i] = x.mean()
        if x.size >= 2 and x.std(ddof=1) > 0:
            sd[i] = x.std(ddof=1)
    return mean, sd


def gibbs_impute_sweep(values, cells, structure: DbnStructure, params: RegressionParams,
                       rng: np.random.Generator, fb_mean, fb_sd, mask=None, kern=None):
    """Redraw every cell in ``cells`` from its full conditional; returns a new tensor.

    Cells are visited per sample, time ascending, then variable ascending, each
    draw seeing the latest values of its neighbours.
    """
    kern = kern or kernels.backend
    out = np.array(values, dtype=float, copy=True)
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    if len(cells) == 0:
        return out
    cells = cells[np.lexsort((cells[:, 1], cells[:, 2], cells[:, 0]))]
    z = rng.standard_normal(len(cells))
    kern.gibbs_sweep(out, cells, structure.adjacency(), params.intercept, params.weights,
                     params.sigma2, np.asarray(fb_mean, float), np.asarray(fb_sd, float), z)
    if mask is not None and not np.array_equal(out[mask], np.asarray(values)[mask]):
        raise AssertionError("imputation wrote to an observed cell")
    return out


# --- main loop ---------------------------------------------------------------

@dataclass
class PosteriorTrace:
    """Stacked per-epoch samples of one chain."""

    epochs: np.ndarray          # (E,)
    adjacency: np.ndarray       # (E, k, k) bool, [parent, child]
    intercept: np.ndarray       # (E, k)
    weights: np.ndarray         # (E, k, k)
    sigma2: np.ndarray          # (E, k)
    delta2: np.ndarray          # (E, k)
    missing_cells: np.ndarray   # (m, 3)
    imputations: np.ndarray | None = None  # (E, m)
    accepted: np.ndarray | None = field(default=None, repr=False)  # (E, k) bool

    def __len__(self):
        return len(self.epochs)

    def subset(self, rows) -> "PosteriorTrace":
        def take(a):
            return None if a is None else a[rows]
        return PosteriorTrace(self.epochs[rows], self.adjacency[rows], self.intercept[rows],
                              self.weights[rows], self.sigma2[rows], self.delta2[rows],
                              self.missing_cells, take(self.imputations), take(self.accepted))

    def structure(self, row: int) -> DbnStructure:
        return DbnStructure.from_adjacency(self.adjacency[row])

    def params(self, row: int) -> RegressionParams:
        return RegressionParams(self.intercept[row], self.weights[row],
                                self.sigma2[row], self.delta2[row])

    def imputation_map(self, row: int) -> dict:
        if self.imputations is None:
            return {}
        return {tuple(c): float(v) for c, v in zip(self.missing_cells.tolist(), self.imputations[row])}


def initial_completion(d: TimeSeriesDataset) -> np.ndarray:
    """Fill missing cells with the observed mean of the variable at that time.

    Falls back to the variable's overall observed mean, then to 0.
    """
    obs = d.observed_values()
    with np.errstate(invalid="ignore"):
        cnt_t = d.mask.sum(axis=0)
        sum_t = np.where(d.mask, obs, 0.0).sum(axis=0)
        cnt = cnt_t.sum(axis=1)
        overall = np.where(cnt > 0, sum_t.sum(axis=1) / np.maximum(cnt, 1), 0.0)
        per_t = np.where(cnt_t > 0, sum_t / np.maximum(cnt_t, 1), overall[:, None])
    out = d.values.copy()
    fill = np.broadcast_to(per_t, out.shape)
    out[~d.mask] = fill[~d.mask]
    return out


def random_parent_sets(k: int, fan_in_max: int, rng: np.random.Generator):
    sets = []
    top = min(fan_in_max, k)
    for _ in range(k):
        size = int(rng.integers(top + 1))
        sets.append(tuple(sorted(rng.choice(k, size=size, replace=False).tolist())))
    return sets


def run_lume_dbn(d: TimeSeriesDataset, priors: Priors, config: McmcConfig,
                 rng: np.random.Generator, impute: bool = True, kern=None) -> PosteriorTrace:
    """Run one chain; returns one trace record per epoch ``1..E``.

    With ``impute=False`` the missing-data move is skipped (the dataset must
    then be complete for the result to be meaningful).
    """
    kern = kern or kernels.backend
    k, E = d.n_vars, config.epochs
    if priors.k != k:
        raise ValueError(f"priors built for k={priors.k}, data has k={k}")
    n_rows = d.n_samples * d.T
    values = initial_completion(d)
    cells = d.missing_cells
    m = len(cells) if impute else 0
    fb_mean, fb_sd = fallback_moments(d)

    parents = random_parent_sets(k, priors.fan_in_max, rng)
    intercept = np.zeros(k)
    weights = np.zeros((k, k))
    sigma2 = np.ones(k)
    delta2 = np.ones(k)
    betas = [np.zeros(len(ps) + 1) for ps in parents]

    tr_adj = np.zeros((E, k, k), dtype=bool)
    tr_b0 = np.empty((E, k))
    tr_w = np.zeros((E, k, k))
    tr_s2 = np.empty((E, k))
    tr_d2 = np.empty((E, k))
    tr_acc = np.zeros((E, k), dtype=bool)
    record_missing = config.record_missing_trace and m > 0
    tr_imp = np.empty((E, m)) if record_missing else None
    if record_missing:
        flat_cells = np.ravel_multi_index(cells.T, values.shape)

    G = kern.lagged_gram(values)
    for e in range(E):
        try:
            for j in range(k):
                beta, sigma2[j], delta2[j] = parameter_update(
                    G, j, parents[j], delta2[j], priors, n_rows, rng, kern)
                parents[j], beta, tr_acc[e, j] = mh_structure_update(
                    G, j, parents[j], beta, sigma2[j], delta2[j], priors, n_rows, rng, kern)
                betas[j] = beta
            for j in range(k):
                intercept[j] = betas[j][0]
                weights[:, j] = 0.0
                weights[list(parents[j]), j] = betas[j][1:]
            if m and (e + 1) % config.missing_update_interval == 0:
                adj = np.zeros((k, k), dtype=bool)
                for j, ps in enumerate(parents):
                    adj[list(ps), j] = True
                z = rng.standard_normal(m)
                kern.gibbs_sweep(values, cells, adj, intercept, weights, sigma2, fb_mean, fb_sd, z)
                G = kern.lagged_gram(values)
        except (NumericalError, ValueError, FloatingPointError) as exc:
            raise NumericalError(f"chain aborted at epoch {e + 1}: {exc}") from exc
        for j, ps in enumerate(parents):
            tr_adj[e, list(ps), j] = True
        tr_b0[e] = intercept
        tr_w[e] = weights
        tr_s2[e] = sigma2
        tr_d2[e] = delta2
        if record_missing:
            tr_imp[e] = values.ravel()[flat_cells]
    return PosteriorTrace(np.arange(1, E + 1), tr_adj, tr_b0, tr_w, tr_s2, tr_d2,
                          cells if impute else cells[:0], tr_imp, tr_acc)


def run_chains(d: TimeSeriesDataset, priors: Priors, config: McmcConfig,
               impute: bool = True, counters: Sequence[int] = (), kern=None) -> list[PosteriorTrace]:
    """Run ``config.chains`` independent chains; chain ``c`` uses ``chain_rng(seed, *counters, c)``."""
    traces = []
    for c in range(config.chains):
        rng = chain_rng(config.seed, *counters, c)
        log.debug("chain %d/%d", c + 1, config.chains)
        traces.append(run_lume_dbn(d, priors, config, rng, impute=impute, kern=kern))
    return traces
