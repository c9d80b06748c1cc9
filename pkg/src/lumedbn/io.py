"""Long-format CSV ingestion and generic preprocessing.

Long format: header ``sample_id,time,variable,value``. A missing cell is an
absent row (an empty ``value`` field is treated the same way). Floats are
written with 17 significant digits.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .model import TimeSeriesDataset

log = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"
LONG_COLUMNS = ["sample_id", "time", "variable", "value"]


class IngestionError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


class DegenerateVariableError(ValueError):
    pass


def read_long_records(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"sample_id": str, "variable": str, "value": str, "time": str},
                     keep_default_na=False, encoding="utf-8")
    missing = [c for c in LONG_COLUMNS if c not in df.columns]
    if missing:
        raise IngestionError(f"{path}: missing columns {missing}")
    df = df[LONG_COLUMNS]
    df = df[df["value"].str.strip() != ""].copy()
    for col in ("time", "value"):
        num = pd.to_numeric(df[col], errors="coerce")
        bad = num.isna() | ~np.isfinite(num.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            row = int(df.index[bad.to_numpy()][0]) + 2  # header is line 1
            raise IngestionError(f"{path}: non-numeric {col} {df.loc[df.index[bad.to_numpy()][0], col]!r} "
                                 f"on line {row}")
        # pandas' fast parser is not correctly rounded; str -> float is
        df[col] = df[col].str.strip().astype(float)
    return df


def records_to_dataset(df: pd.DataFrame, source: str = "records") -> TimeSeriesDataset:
    """Dense tensor on the union of observed time points; absent rows become missing."""
    dup = df.duplicated(["sample_id", "variable", "time"], keep="first")
    if dup.any():
        first = df.index[dup.to_numpy()][0]
        r = df.loc[first]
        raise IngestionError(f"{source}: duplicate (sample_id, variable, time) = "
                             f"({r['sample_id']}, {r['variable']}, {r['time']}) on line {int(first) + 2}")
    samples = sorted(df["sample_id"].unique())
    variables = sorted(df["variable"].unique())
    times = np.sort(df["time"].unique())
    if len(times) < 2:
        raise IngestionError(f"{source}: need at least two distinct time points")
    steps = np.diff(times)
    if np.all(times == np.round(times)) and steps.max() > steps.min():
        log.warning("%s: time points are not evenly spaced (a whole slice may be missing); "
                    "set time_bin_width to keep a regular grid", source)
    n = pd.Index(samples).get_indexer(df["sample_id"])
    i = pd.Index(variables).get_indexer(df["variable"])
    t = np.searchsorted(times, df["time"].to_numpy())
    values = np.full((len(samples), len(variables), len(times)), np.nan)
    values[n, i, t] = df["value"].to_numpy()
    return TimeSeriesDataset(values, ~np.isnan(values), tuple(variables), tuple(samples), times)


def load_long_csv(path) -> TimeSeriesDataset:
    return records_to_dataset(read_long_records(path), str(path))


def dataset_to_records(d: TimeSeriesDataset, observed_only: bool = True) -> pd.DataFrame:
    n, i, t = np.nonzero(d.mask if observed_only else np.ones_like(d.mask))
    return pd.DataFrame({
        "sample_id": np.asarray(d.sample_ids, dtype=object)[n],
        "time": d.times[t],
        "variable": np.asarray(d.variable_names, dtype=object)[i],
        "value": d.values[n, i, t],
    })


def write_long_csv(d: TimeSeriesDataset, path, observed_only: bool = True):
    dataset_to_records(d, observed_only).to_csv(path, index=False, float_format=FLOAT_FMT)


def bin_time(data, width: float, span_end: float | None = None) -> TimeSeriesDataset:
    """Average raw observations into bins ``[0, w), [w, 2w), ...``.

    A time equal to a bin edge opens the next bin, so a span ``[0, 48]`` with
    ``w = 6`` yields 9 bins (the closing endpoint gets its own). Bins with no
    observation are missing. ``data`` is a long-format frame or a dataset.
    """
    if not width > 0:
        raise ValueError("bin width must be positive")
    df = dataset_to_records(data) if isinstance(data, TimeSeriesDataset) else data
    end = float(df["time"].max()) if span_end is None else float(span_end)
    n_bins = int(np.floor(end / width)) + 1
    b = np.floor(df["time"].to_numpy(dtype=float) / width).astype(int)
    keep = (b >= 0) & (b < n_bins)
    binned = (df[keep].assign(bin=b[keep])
              .groupby(["sample_id", "variable", "bin"], sort=True)["value"].mean().reset_index())
    samples = sorted(df["sample_id"].unique())
    variables = sorted(df["variable"].unique())
    values = np.full((len(samples), len(variables), n_bins), np.nan)
    n = pd.Index(samples).get_indexer(binned["sample_id"])
    i = pd.Index(variables).get_indexer(binned["variable"])
    values[n, i, binned["bin"].to_numpy()] = binned["value"].to_numpy()
    return TimeSeriesDataset(values, ~np.isnan(values), tuple(variables), tuple(samples),
                             np.arange(n_bins) * float(width))


def load_groups(path) -> dict[str, str]:
    df = pd.read_csv(path, dtype=str)
    if not {"sample_id", "group"} <= set(df.columns):
        raise IngestionError(f"{path}: expected columns sample_id,group")
    return dict(zip(df["sample_id"], df["group"]))


def _group_labels(d: TimeSeriesDataset, groups):
    if not groups:
        return np.zeros(d.n_samples, dtype=int), ["all"]
    try:
        labels = [groups[s] for s in d.sample_ids]
    except KeyError as exc:
        raise ConfigurationError(f"sample {exc.args[0]!r} has no group label") from None
    names = sorted(set(labels))
    return np.array([names.index(g) for g in labels]), names


def missingness_rates(d: TimeSeriesDataset, groups=None) -> pd.DataFrame:
    """Fraction of missing cells per variable (rows) and group (columns)."""
    lab, names = _group_labels(d, groups)
    rates = np.array([[1.0 - d.mask[lab == g][:, i, :].mean() for g in range(len(names))]
                      for i in range(d.n_vars)])
    return pd.DataFrame(rates, index=list(d.variable_names), columns=names)


def filter_by_missingness(d: TimeSeriesDataset, threshold: float, groups=None):
    """Drop variables whose missing fraction exceeds ``threshold`` in any group.

    Returns ``(dataset, report)`` where ``report`` maps each dropped variable
    to its per-group rates.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    rates = missingness_rates(d, groups)
    return filter_by_rate_table(d, rates, threshold)


def filter_by_rate_table(d: TimeSeriesDataset, rates: pd.DataFrame, threshold: float):
    drop = (rates > threshold).any(axis=1)
    keep = [i for i, v in enumerate(d.variable_names) if not drop[v]]
    if not keep:
        raise ConfigurationError(f"every variable exceeds the missingness threshold {threshold}")
    report = {v: rates.loc[v].to_dict() for v in d.variable_names if drop[v]}
    out = TimeSeriesDataset(d.values[:, keep], d.mask[:, keep],
                            tuple(d.variable_names[i] for i in keep), d.sample_ids, d.times)
    return out, report


@dataclass
class StandardizationRecord:
    mode: str
    group_names: list
    sample_group: np.ndarray  # (N,) group index per sample
    mean: np.ndarray          # (G, k)
    sd: np.ndarray            # (G, k)

    def inverse(self, values: np.ndarray) -> np.ndarray:
        """Map standardized ``(N, k, T+1)`` values back to the original scale."""
        g = self.sample_group
        return values * self.sd[g][:, :, None] + self.mean[g][:, :, None]

    def to_json(self) -> dict:
        return {"mode": self.mode, "groups": list(self.group_names),
                "sample_group": self.sample_group.tolist(),
                "mean": self.mean.tolist(), "sd": self.sd.tolist()}


def standardize(d: TimeSeriesDataset, mode: str = "global", groups=None):
    """Z-score observed cells per group (``local``) or pooled (``global``).

    Returns ``(dataset, record)``; ``record.inverse`` undoes the transform.
    """
    if mode not in ("none", "local", "global"):
        raise ValueError(f"unknown standardization mode {mode!r}")
    k = d.n_vars
    if mode == "local":
        lab, names = _group_labels(d, groups)
    else:
        lab, names = np.zeros(d.n_samples, dtype=int), ["all"]
    mean = np.zeros((len(names), k))
    sd = np.ones((len(names), k))
    if mode != "none":
        obs = d.observed_values()
        for g in range(len(names)):
            for i in range(k):
                x = obs[lab == g][:, i, :][d.mask[lab == g][:, i, :]]
                if x.size < 2 or not x.std(ddof=1) > 0:
                    raise DegenerateVariableError(
                        f"variable {d.variable_names[i]!r} has zero variance in group {names[g]!r}")
                mean[g, i], sd[g, i] = x.mean(), x.std(ddof=1)
    rec = StandardizationRecord(mode, names, lab, mean, sd)
    values = (d.values - mean[lab][:, :, None]) / sd[lab][:, :, None]
    values[~d.mask] = np.nan
    return TimeSeriesDataset(values, d.mask, d.variable_names, d.sample_ids, d.times), rec


def write_matrix_csv(matrix, names, path):
    pd.DataFrame(np.asarray(matrix, dtype=float), index=list(names), columns=list(names)) \
        .to_csv(path, float_format=FLOAT_FMT, index_label="parent")


def read_matrix_csv(path):
    df = pd.read_csv(path, index_col=0, float_precision="round_trip")
    return df.to_numpy(dtype=float), list(df.columns)


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
