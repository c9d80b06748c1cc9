"""Experiment configuration, the simulation grid and report emission.

Seeds: one master seed per concern. The DBN/series/mask streams derive from
``generator.seed`` (see :func:`lumedbn.synth.make_dataset`); chain ``c`` of
grid condition ``q`` on replicate ``r`` uses ``chain_rng(mcmc.seed, q, r, c)``;
MICE configs carry their own seed. A rerun of the same manifest therefore
reproduces every file bit for bit, whatever the parallelism.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from . import diagnostics as dg
from .baselines import MiceConfig, mice_impute, temporal_mice_impute
from .io import FLOAT_FMT, write_json, write_matrix_csv
from .model import McmcConfig, Priors
from .sampler import run_chains
from .synth import GeneratorConfig, make_dataset

log = logging.getLogger(__name__)

MODES = ("simulate", "learn", "baseline-mice", "baseline-temporal-mice", "evaluate", "diagnose", "grid")
METHODS = ("lume", "mice", "temporal-mice", "complete")


@dataclass(frozen=True)
class PriorsConfig:
    a_sigma: float = 0.01
    b_sigma: float = 0.01
    a_delta: float = 0.01
    b_delta: float = 0.01
    lam: float = 1.0
    fan_in_max: int = 5

    def build(self, k: int) -> Priors:
        return Priors(k=k, **dataclasses.asdict(self))


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "grid"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    priors: PriorsConfig = field(default_factory=PriorsConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    mice: MiceConfig = field(default_factory=MiceConfig)
    missingness_rates: tuple = (0.1, 0.2, 0.3, 0.4)
    series_lengths: tuple = (50, 100, 200)
    methods: tuple = METHODS
    standardization: str = "none"
    time_bin_width: float | None = None
    missingness_filter_threshold: float = 0.4
    output_dir: str = "output"
    replicates: int = 10
    diagnostics_stride: int = 50
    threshold: float = 0.8
    parallelism: int = 1
    data_path: str | None = None
    groups_path: str | None = None
    truth_path: str | None = None
    inclusion_path: str | None = None
    traces_path: str | None = None
    complete_path: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.standardization not in ("none", "local", "global"):
            raise ValueError("standardization must be none, local or global")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0.0 <= self.missingness_filter_threshold <= 1.0:
            raise ValueError("missingness_filter_threshold must lie in [0, 1]")
        if any(not 0.0 <= r <= 1.0 for r in self.missingness_rates):
            raise ValueError("missingness rates must lie in [0, 1]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()


_NESTED = {"generator": GeneratorConfig, "priors": PriorsConfig, "mcmc": McmcConfig, "mice": MiceConfig}


def config_from_dict(raw: dict, **overrides) -> ExperimentConfig:
    raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    extra = set(raw) - known
    if extra:
        raise ValueError(f"unknown config keys {sorted(extra)}")
    kwargs = {}
    for key, value in raw.items():
        if key in _NESTED:
            sub = _NESTED[key]
            names = {f.name for f in dataclasses.fields(sub)}
            bad = set(value) - names
            if bad:
                raise ValueError(f"unknown keys in {key}: {sorted(bad)}")
            value = sub(**value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_config(path, **overrides) -> ExperimentConfig:
    return config_from_dict(json.loads(Path(path).read_text()), **overrides)


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Set every master seed from a single CLI seed."""
    return dataclasses.replace(
        cfg,
        generator=dataclasses.replace(cfg.generator, seed=seed),
        mcmc=dataclasses.replace(cfg.mcmc, seed=seed),
        mice=dataclasses.replace(cfg.mice, seed=seed),
    )


# --- single condition --------------------------------------------------------

def grid_conditions(cfg: ExperimentConfig):
    """Condition tuples ``(index, replicate, T, rate, method)`` in canonical order.

    The complete-data reference runs once per ``(replicate, T)`` with rate 0.
    """
    conds = []
    per_rep = []
    for T in cfg.series_lengths:
        if "complete" in cfg.methods:
            per_rep.append((T, 0.0, "complete"))
        for rate, method in product(cfg.missingness_rates, [m for m in cfg.methods if m != "complete"]):
            per_rep.append((T, float(rate), method))
    for rep in range(cfg.replicates):
        for T, rate, method in per_rep:
            conds.append((len(conds), rep, T, rate, method))
    return conds


def prepare_method_data(method, incomplete, complete, mice_cfg):
    if method == "lume":
        return incomplete, True
    if method == "complete":
        return complete, False
    if method == "mice":
        return mice_impute(incomplete, mice_cfg), False
    return temporal_mice_impute(incomplete, mice_cfg), False


def diagnostics_table(traces, stride: int) -> pd.DataFrame:
    """Columns ``epoch, phi_arcs, phi_missing, psrf_max`` on growing prefixes."""
    cols = ["epoch", "phi_arcs", "phi_missing", "psrf_max"]
    if len(traces) < 2:
        return pd.DataFrame(columns=cols)
    arcs = dg.arc_series(traces)
    miss = dg.missing_series(traces)
    both = np.concatenate([arcs, miss], axis=2)
    epochs, phi_a = dg.phi_trajectory(arcs, stride)
    rows = []
    for e, pa in zip(epochs, phi_a):
        pm = dg.phi_fraction(miss, int(e)) if miss.shape[2] else np.nan
        rows.append((int(e), pa, pm, float(np.max(dg.psrf(both, int(e))))))
    return pd.DataFrame(rows, columns=cols)


def run_condition(cfg: ExperimentConfig, cond, out_dir: Path) -> dict:
    index, rep, T, rate, method = cond
    truth, complete, incomplete = make_dataset(cfg.generator, rate, rep, T)
    data, impute = prepare_method_data(method, incomplete, complete, cfg.mice)
    priors = cfg.priors.build(cfg.generator.k)
    traces = run_chains(data, priors, cfg.mcmc, impute=impute, counters=(index, rep))
    retained = [dg.burn_in_thin(t, cfg.mcmc.burn_in, cfg.mcmc.thinning) for t in traces]
    probs = dg.inclusion_probabilities(retained)
    auc = dg.auc_pr(probs, truth.adjacency)
    cells = incomplete.missing_cells
    rmse = np.nan
    if method != "complete" and len(cells):
        held_out = complete.values[tuple(cells.T)]
        imputed = (dg.posterior_mean_imputation(retained) if method == "lume"
                   else data.values[tuple(cells.T)])
        rmse = dg.imputation_rmse(imputed, held_out)

    out_dir.mkdir(parents=True, exist_ok=True)
    names = complete.variable_names
    write_matrix_csv(probs, names, out_dir / "inclusion.csv")
    write_matrix_csv(truth.adjacency, names, out_dir / "truth_adjacency.csv")
    recall, precision = dg.pr_curve(probs, truth.adjacency)
    pd.DataFrame({"recall": recall, "precision": precision}).to_csv(
        out_dir / "pr_curve.csv", index=False, float_format=FLOAT_FMT)
    diag = diagnostics_table(traces, cfg.diagnostics_stride)
    diag.to_csv(out_dir / "diagnostics.csv", index=False, float_format=FLOAT_FMT)
    arcs_conv = dg.convergence_epoch(diag["epoch"], diag["phi_arcs"]) if len(diag) else None
    row = {"condition": index, "replicate": rep, "T": T, "missingness_rate": rate,
           "method": method, "auc_pr": auc, "rmse": rmse, "n_missing": int(len(cells)),
           "arc_convergence_epoch": arcs_conv}
    write_json(row, out_dir / "summary.json")
    return row


def condition_dir(root: Path, cond) -> Path:
    index, rep, T, rate, method = cond
    return root / "conditions" / f"{index:04d}_rep{rep}_T{T}_rate{rate:g}_{method}"


def _job(args):
    cfg, cond, root = args
    try:
        return run_condition(cfg, cond, condition_dir(root, cond)), None
    except Exception as exc:  # recorded in the manifest; the grid carries on
        log.error("condition %s failed: %s", cond, exc)
        return None, {"condition": list(cond), "error": f"{type(exc).__name__}: {exc}",
                      "traceback": traceback.format_exc()}


def run_grid(cfg: ExperimentConfig, output_dir=None, parallelism: int | None = None) -> pd.DataFrame:
    """Run every grid condition and write summaries, report and manifest."""
    root = Path(output_dir or cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    conds = grid_conditions(cfg)
    jobs = [(cfg, c, root) for c in conds]
    workers = parallelism or cfg.parallelism
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    rows = [r for r, _ in results if r is not None]
    errors = [e for _, e in results if e is not None]
    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS).sort_values("condition")
    summary.to_csv(root / "summary.csv", index=False, float_format=FLOAT_FMT)
    if rows:
        emit_report(summary, root, root / "conditions")
    write_json({
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed_scheme": {"dbn": "(generator.seed, replicate)",
                        "series": "(generator.seed, replicate, 1, T)",
                        "mask": "(generator.seed, replicate, 2, T, round(rate*1e6))",
                        "chain": "(mcmc.seed, condition, replicate, chain)"},
        "conditions": [dict(zip(("condition", "replicate", "T", "missingness_rate", "method"), c))
                       for c in conds],
        "errors": errors,
    }, root / "manifest.json")
    return summary


SUMMARY_COLUMNS = ["condition", "replicate", "T", "missingness_rate", "method", "auc_pr", "rmse",
                   "n_missing", "arc_convergence_epoch"]


# --- reporting ---------------------------------------------------------------

def emit_report(summary: pd.DataFrame, out_dir, conditions_dir=None) -> dict:
    """Write plot-ready tables; returns the frames keyed by file stem.

    ``report_long.csv`` has one row per summary; ``paired_differences.csv``
    aligns each baseline with LUME-DBN on the same ``(replicate, T, rate)``;
    ``phi_trajectories.csv`` stacks the per-condition diagnostics.
    """
    out_dir = Path(out_dir)
    if len(summary) == 0:
        raise ValueError("no summaries to report")
    long = summary[["T", "missingness_rate", "method", "replicate", "auc_pr", "rmse"]].reset_index(drop=True)
    long.to_csv(out_dir / "report_long.csv", index=False, float_format=FLOAT_FMT)

    key = ["replicate", "T", "missingness_rate"]
    lume = summary[summary["method"] == "lume"].set_index(key)["auc_pr"]
    paired = []
    for method in sorted(set(summary["method"]) - {"lume", "complete"}):
        other = summary[summary["method"] == method].set_index(key)["auc_pr"]
        both = pd.concat([lume.rename("auc_lume"), other.rename("auc_baseline")], axis=1, join="inner")
        both = both.reset_index().assign(baseline=method)
        both["difference"] = both["auc_lume"] - both["auc_baseline"]
        paired.append(both)
    cols = key + ["baseline", "auc_lume", "auc_baseline", "difference"]
    paired = pd.concat(paired, ignore_index=True)[cols] if paired else pd.DataFrame(columns=cols)
    paired = paired.sort_values(["baseline"] + key, kind="stable").reset_index(drop=True)
    paired.to_csv(out_dir / "paired_differences.csv", index=False, float_format=FLOAT_FMT)

    grand = (summary.groupby(["T", "missingness_rate", "method"], sort=True)[["auc_pr", "rmse"]]
             .mean().reset_index())
    grand.to_csv(out_dir / "grand_means.csv", index=False, float_format=FLOAT_FMT)

    frames = {"report_long": long, "paired_differences": paired, "grand_means": grand}
    if conditions_dir is not None and Path(conditions_dir).exists():
        traj = []
        for d in sorted(Path(conditions_dir).iterdir()):
            f = d / "diagnostics.csv"
            s = d / "summary.json"
            if f.exists() and s.exists():
                meta = json.loads(s.read_text())
                df = pd.read_csv(f, float_precision="round_trip")
                for c in reversed(("condition", "replicate", "T", "missingness_rate", "method")):
                    df.insert(0, c, meta[c])
                traj.append(df)
        if traj:
            phi = pd.concat(traj, ignore_index=True)
            phi.to_csv(out_dir / "phi_trajectories.csv", index=False, float_format=FLOAT_FMT)
            frames["phi_trajectories"] = phi
    return frames
