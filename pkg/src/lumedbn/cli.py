"""Command-line entry point: ``lumedbn <command> --config PATH``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import diagnostics as dg
from .baselines import learn_complete, mice_impute, temporal_mice_impute
from .experiment import diagnostics_table, emit_report, load_config, run_grid, with_seed
from .io import (FLOAT_FMT, bin_time, dataset_to_records, filter_by_missingness, load_groups,
                 load_long_csv, read_long_records, read_matrix_csv, standardize, write_json,
                 write_long_csv, write_matrix_csv)
from .model import TimeSeriesDataset
from .sampler import PosteriorTrace, chain_rng, run_chains
from .synth import make_dataset

log = logging.getLogger("lumedbn")


def _out(cfg, args) -> Path:
    path = Path(args.output_dir or cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(cfg, name):
    value = getattr(cfg, name)
    if not value:
        raise SystemExit(f"config field {name!r} is required for this command")
    return value


def cmd_simulate(cfg, args):
    out = _out(cfg, args)
    gen = cfg.generator
    for rep in range(cfg.replicates):
        rep_dir = out / f"rep{rep}"
        rep_dir.mkdir(exist_ok=True)
        truth, complete, _ = make_dataset(gen, 0.0, rep)
        write_matrix_csv(truth.adjacency, complete.variable_names, rep_dir / "truth_adjacency.csv")
        write_json({"intercept": truth.params.intercept, "weights": truth.params.weights,
                    "sigma2": truth.params.sigma2, "order": truth.order,
                    "variables": list(complete.variable_names)}, rep_dir / "truth_params.json")
        write_long_csv(complete, rep_dir / "complete.csv")
        for rate in cfg.missingness_rates:
            _, _, incomplete = make_dataset(gen, rate, rep)
            write_long_csv(incomplete, rep_dir / f"data_rate{rate:g}.csv")
    log.info("wrote %d replicate(s) to %s", cfg.replicates, out)


def _load_and_preprocess(cfg, out: Path) -> tuple[TimeSeriesDataset, object]:
    path = _require(cfg, "data_path")
    groups = load_groups(cfg.groups_path) if cfg.groups_path else None
    if cfg.time_bin_width:
        d = bin_time(read_long_records(path), cfg.time_bin_width)
    else:
        d = load_long_csv(path)
    d, dropped = filter_by_missingness(d, cfg.missingness_filter_threshold, groups)
    d, record = standardize(d, cfg.standardization, groups)
    write_json({"dropped_variables": dropped, "variables": list(d.variable_names),
                "standardization": record.to_json()}, out / "preprocessing.json")
    return d, record


def _save_traces(traces: list[PosteriorTrace], path):
    arrays = {"missing_cells": traces[0].missing_cells}
    for c, t in enumerate(traces):
        arrays[f"adjacency_{c}"] = t.adjacency
        if t.imputations is not None:
            arrays[f"imputations_{c}"] = t.imputations
    np.savez_compressed(path, **arrays)


def _load_traces(path) -> list[PosteriorTrace]:
    z = np.load(path)
    traces = []
    c = 0
    while f"adjacency_{c}" in z:
        adj = z[f"adjacency_{c}"]
        E, k, _ = adj.shape
        imp = z[f"imputations_{c}"] if f"imputations_{c}" in z else None
        traces.append(PosteriorTrace(np.arange(1, E + 1), adj, np.zeros((E, k)), np.zeros((E, k, k)),
                                     np.ones((E, k)), np.ones((E, k)), z["missing_cells"], imp))
        c += 1
    return traces


def _write_learning_outputs(cfg, args, out, d, traces, record=None):
    retained = [dg.burn_in_thin(t, cfg.mcmc.burn_in, cfg.mcmc.thinning) for t in traces]
    probs = dg.inclusion_probabilities(retained)
    names = d.variable_names
    write_matrix_csv(probs, names, out / "inclusion.csv")
    net = dg.threshold_network(probs, args.threshold if args.threshold is not None else cfg.threshold)
    edges = [(names[p], names[j], probs[p, j]) for j, ps in enumerate(net.parent_sets) for p in ps]
    pd.DataFrame(edges, columns=["parent", "child", "inclusion_prob"]).to_csv(
        out / "network.csv", index=False, float_format=FLOAT_FMT)
    diagnostics_table(traces, cfg.diagnostics_stride).to_csv(
        out / "diagnostics.csv", index=False, float_format=FLOAT_FMT)
    _save_traces(traces, out / "traces.npz")
    cells = traces[0].missing_cells
    if len(cells) and traces[0].imputations is not None:
        filled = d.values.copy()
        filled[tuple(cells.T)] = dg.posterior_mean_imputation(retained)
        if record is not None:
            filled = record.inverse(filled)
        only_missing = d.with_values(np.nan_to_num(filled)).with_mask(~d.mask)
        dataset_to_records(only_missing).to_csv(out / "imputations.csv", index=False,
                                                float_format=FLOAT_FMT)


def cmd_learn(cfg, args):
    out = _out(cfg, args)
    d, record = _load_and_preprocess(cfg, out)
    traces = run_chains(d, cfg.priors.build(d.n_vars), cfg.mcmc)
    _write_learning_outputs(cfg, args, out, d, traces, record)


def cmd_baseline(cfg, args):
    out = _out(cfg, args)
    method = args.method or ("mice" if cfg.mode == "baseline-mice" else "temporal-mice")
    d, record = _load_and_preprocess(cfg, out)
    imputer = mice_impute if method == "mice" else temporal_mice_impute
    completed = imputer(d, cfg.mice)
    write_long_csv(completed.with_values(record.inverse(completed.values)), out / "imputed.csv")
    priors = cfg.priors.build(d.n_vars)
    traces = [learn_complete(completed, priors, cfg.mcmc, chain_rng(cfg.mcmc.seed, c))
              for c in range(cfg.mcmc.chains)]
    _write_learning_outputs(cfg, args, out, completed, traces)


def cmd_evaluate(cfg, args):
    out = _out(cfg, args)
    probs, names = read_matrix_csv(_require(cfg, "inclusion_path"))
    truth, truth_names = read_matrix_csv(_require(cfg, "truth_path"))
    if names != truth_names:
        raise SystemExit("inclusion and truth matrices list different variables")
    recall, precision = dg.pr_curve(probs, truth.astype(bool))
    pd.DataFrame({"recall": recall, "precision": precision}).to_csv(
        out / "pr_curve.csv", index=False, float_format=FLOAT_FMT)
    summary = {"auc_pr": dg.auc_pr(probs, truth.astype(bool))}
    if cfg.complete_path and cfg.data_path:
        imputed = read_long_records(cfg.data_path)
        full = read_long_records(cfg.complete_path)
        merged = imputed.merge(full, on=["sample_id", "time", "variable"], suffixes=("_imp", "_true"))
        summary["rmse"] = dg.imputation_rmse(merged["value_imp"], merged["value_true"])
    write_json(summary, out / "summary.json")
    print(f"auc_pr={summary['auc_pr']:.17g}" + (f" rmse={summary['rmse']:.17g}" if "rmse" in summary else ""))


def cmd_diagnose(cfg, args):
    out = _out(cfg, args)
    traces = _load_traces(_require(cfg, "traces_path"))
    diag = diagnostics_table(traces, cfg.diagnostics_stride)
    diag.to_csv(out / "diagnostics.csv", index=False, float_format=FLOAT_FMT)
    conv = {}
    if len(diag):
        conv["arcs"] = dg.convergence_epoch(diag["epoch"], diag["phi_arcs"])
        if diag["phi_missing"].notna().all():
            conv["missing"] = dg.convergence_epoch(diag["epoch"], diag["phi_missing"])
    write_json({"convergence_epoch": conv}, out / "convergence.json")


def cmd_grid(cfg, args):
    summary = run_grid(cfg, _out(cfg, args), args.parallelism)
    log.info("grid finished: %d condition(s)", len(summary))


def cmd_report(cfg, args):
    out = _out(cfg, args)
    summary = pd.read_csv(out / "summary.csv", float_precision="round_trip")
    emit_report(summary, out, out / "conditions")


COMMANDS = {"simulate": cmd_simulate, "learn": cmd_learn, "baseline": cmd_baseline,
            "evaluate": cmd_evaluate, "diagnose": cmd_diagnose, "grid": cmd_grid, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lumedbn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--output-dir", help="overrides output_dir in the config")
        p.add_argument("--seed", type=int, help="master seed for data, chains and baselines")
        p.add_argument("--parallelism", type=int, help="concurrent grid conditions")
        p.add_argument("--threshold", type=float, help="inclusion threshold for network export")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "baseline":
            p.add_argument("--method", choices=["mice", "temporal-mice"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    if args.parallelism is not None:
        cfg = dataclasses.replace(cfg, parallelism=args.parallelism)
    COMMANDS[args.command](cfg, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
