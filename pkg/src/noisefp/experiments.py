"""Experiment harnesses: from a dataset to an accuracy table on disk.

Every accuracy cell follows one protocol: featurize the relevant runs,
split 60/20/20 with a cell-specific seed, grid-search (kernel, C) on the
validation part, and report accuracy on the untouched test part.  Cell
seeds are derived from the experiment seed and the cell's content (the
step set and the groups being compared), so re-running a configuration
reproduces every report byte for byte, and cells that describe the same
computation (for example a clamped window column and the prefix column)
get identical values.

The six experiments:

* ``pairwise``: every machine pair, single(k) and prefix(k) per step k;
* ``multiclass``: all machines at once; single, trailing windows
  (s = 1..5) and prefix columns per step, plus a per-column mean row;
* ``temporal24h``: one machine against itself a simulated day later;
* ``window-temporal``: one machine, first time window against each later
  window;
* ``gap-sweep``: window-vs-window accuracy as the gap between the windows
  grows;
* ``robustness``: two machines, a 10x10 grid of train-window vs
  test-window accuracies.
"""

from __future__ import annotations

import hashlib
import json
import itertools
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .acquisition import Dataset, Run, load_dataset
from .features import FeatureSpec, LabeledSet, from_groups, scaling_params, standardize
from .svm import (
    DEFAULT_C_GRID,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    KERNEL_KINDS,
    KernelSpec,
    accuracy,
    predict_any,
    select_model,
    split_indices,
)
from .testbed import N_STEPS

EXPERIMENTS = ("pairwise", "multiclass", "temporal24h", "window-temporal",
               "gap-sweep", "robustness")

MULTICLASS_COLUMNS = ("single", "window s=1", "window s=2", "window s=3",
                      "window s=4", "window s=5", "prefix")

DEFAULT_GAPS_HOURS = tuple(float(h) for h in range(0, 26, 2))


@dataclass
class ExperimentConfig:
    """Everything an experiment run depends on (hashable to a config id)."""

    experiment: str
    dataset: str
    out_dir: str = "reports"
    machines: tuple[str, ...] | None = None
    seed: int = 0
    steps: tuple[int, ...] = tuple(range(1, N_STEPS + 1))
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    kernels: tuple[str, ...] = KERNEL_KINDS
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    standardize: bool = False
    multiclass_columns: tuple[str, ...] = MULTICLASS_COLUMNS
    window_runs: int = 200
    n_windows: int = 10
    gaps_hours: tuple[float, ...] = DEFAULT_GAPS_HOURS

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment: {self.experiment!r}")
        self.steps = tuple(int(k) for k in self.steps)
        for k in self.steps:
            if not 1 <= k <= N_STEPS:
                raise ValueError(f"invalid step: {k}")
        if not self.steps:
            raise ValueError("steps must be nonempty")
        for kind in self.kernels:
            if kind not in KERNEL_KINDS:
                raise ValueError(f"unknown kernel kind: {kind!r}")
        for col in self.multiclass_columns:
            if col not in MULTICLASS_COLUMNS:
                raise ValueError(f"unknown multiclass column: {col!r}")
        if self.window_runs < 5:
            raise ValueError(f"window_runs too small: {self.window_runs}")
        if self.n_windows < 2:
            raise ValueError(f"n_windows too small: {self.n_windows}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["machines"] = list(self.machines) if self.machines is not None else None
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(eq=False)
class AccuracyTable:
    """Row/column-labeled accuracy cells plus per-cell metadata."""

    name: str
    row_labels: list[str]
    col_labels: list[str]
    cells: np.ndarray
    meta: dict = field(default_factory=dict)

    def cell(self, row: str, col: str) -> float:
        return float(self.cells[self.row_labels.index(row), self.col_labels.index(col)])


def _cell_seed(experiment_seed: int, descriptor: tuple) -> int:
    blob = json.dumps([experiment_seed, list(descriptor)], sort_keys=False).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:6], "big")


def _kernel_specs(cfg: ExperimentConfig) -> list[KernelSpec]:
    return [KernelSpec(kind) for kind in cfg.kernels]


@dataclass(eq=False)
class CellFit:
    """A model selected on one cell, reusable against other test sets."""

    record: dict
    model: object
    scale: tuple[np.ndarray, np.ndarray] | None


def fit_cell(data: LabeledSet, cell_seed: int, cfg: ExperimentConfig) -> CellFit:
    """Run the split/select/test protocol on one featurized cell.

    The returned record (accuracy on the held-out test split plus the
    selected kernel and C) is what lands in report metadata; the fit also
    carries the model so other windows can be scored without reselecting.
    """
    tr_idx, va_idx, te_idx = split_indices(len(data), (0.6, 0.2, 0.2), cell_seed)
    assert not (set(tr_idx) & set(va_idx)) and not (set(tr_idx) & set(te_idx)) \
        and not (set(va_idx) & set(te_idx))
    train = LabeledSet(data.x[tr_idx], data.y[tr_idx])
    val = LabeledSet(data.x[va_idx], data.y[va_idx])
    test = LabeledSet(data.x[te_idx], data.y[te_idx])
    scale = None
    if cfg.standardize:
        scale = scaling_params(train.x)
        train, val, test = standardize(train, val, test)
    result = select_model(train, val, cfg.c_grid, _kernel_specs(cfg), cfg.tol, cfg.max_iter)
    acc = accuracy(predict_any(result.model, test.x), test.y)
    digest = hashlib.sha256(
        tr_idx.tobytes() + b"|" + va_idx.tobytes() + b"|" + te_idx.tobytes()
    ).hexdigest()[:12]
    record = {
        "accuracy": acc,
        "kernel": result.kernel.kind,
        "gamma": result.kernel.gamma,
        "c": result.c,
        "val_accuracy": result.val_accuracy,
        "converged": result.converged,
        "n_train": len(train), "n_val": len(val), "n_test": len(test),
        "split_digest": digest,
        "cell_seed": cell_seed,
    }
    return CellFit(record=record, model=result.model, scale=scale)


def score_cell(fit: CellFit, target: LabeledSet) -> dict:
    """Score an already-fit cell on a different test set."""
    x = target.x
    if fit.scale is not None:
        mean, std = fit.scale
        x = (x - mean) / std
    acc = accuracy(predict_any(fit.model, x), target.y)
    return dict(fit.record, accuracy=acc, n_test=len(target), heldout_test=False)


def evaluate_cell(data: LabeledSet, cell_seed: int, cfg: ExperimentConfig,
                  test_override: LabeledSet | None = None) -> dict:
    fit = fit_cell(data, cell_seed, cfg)
    if test_override is None:
        return fit.record
    return score_cell(fit, test_override)


def _machine_groups(ds: Dataset, machines: Sequence[str]) -> list[tuple[list[Run], int]]:
    return [(ds.runs_for(mid), idx) for idx, mid in enumerate(machines)]


def _resolve_machines(ds: Dataset, cfg: ExperimentConfig, minimum: int) -> list[str]:
    machines = list(cfg.machines) if cfg.machines else ds.machine_ids()
    known = set(ds.machine_ids())
    for mid in machines:
        if mid not in known:
            raise ValueError(f"missing machine: {mid!r}")
    if len(machines) < minimum:
        raise ValueError(f"{cfg.experiment} needs >= {minimum} machines, got {len(machines)}")
    return machines


def _feature_spec_for_column(column: str, k: int) -> FeatureSpec:
    if column == "single":
        return FeatureSpec.single(k)
    if column == "prefix":
        return FeatureSpec.prefix(k)
    s = int(column.split("=")[1])
    return FeatureSpec.window(k, s)


# ---------------------------------------------------------------------------
# Experiments.
# ---------------------------------------------------------------------------


def exp_pairwise(cfg: ExperimentConfig, ds: Dataset | None = None) -> AccuracyTable:
    """Binary machine-vs-machine accuracy per step, single and prefix features."""
    ds = ds if ds is not None else load_dataset(cfg.dataset)
    machines = _resolve_machines(ds, cfg, minimum=2)
    col_labels = ["single", "prefix"]
    row_labels = []
    rows = []
    cells_meta = {}
    cache: dict[tuple, dict] = {}
    for a, b in itertools.combinations(machines, 2):
        groups = [(ds.runs_for(a), -1), (ds.runs_for(b), +1)]
        for k in cfg.steps:
            row_label = f"{a} vs {b} k={k}"
            row_labels.append(row_label)
            row = []
            for col, spec in (("single", FeatureSpec.single(k)), ("prefix", FeatureSpec.prefix(k))):
                key = (a, b, spec.steps())
                if key not in cache:
                    data = from_groups(groups, spec)
                    seed = _cell_seed(cfg.seed, ("pair", a, b, spec.steps()))
                    cache[key] = evaluate_cell(data, seed, cfg)
                record = cache[key]
                row.append(record["accuracy"])
                cells_meta[f"{row_label}::{col}"] = record
            rows.append(row)
    return AccuracyTable(
        name="pairwise",
        row_labels=row_labels,
        col_labels=col_labels,
        cells=np.array(rows),
        meta={"machines": machines, "cells": cells_meta},
    )


def exp_multiclass(cfg: ExperimentConfig, ds: Dataset | None = None) -> AccuracyTable:
    """All-machines classification per step for each feature column.

    The final row holds per-column means over k; the prefix column's mean
    is left blank (its feature count grows with k, so the mean would
    average incomparable models).
    """
    ds = ds if ds is not None else load_dataset(cfg.dataset)
    machines = _resolve_machines(ds, cfg, minimum=3)
    groups = _machine_groups(ds, machines)
    columns = [c for c in MULTICLASS_COLUMNS if c in cfg.multiclass_columns]
    row_labels = [f"k={k}" for k in cfg.steps] + ["mean"]
    cells = np.full((len(cfg.steps) + 1, len(columns)), np.nan)
    cells_meta = {}
    cache: dict[tuple, dict] = {}
    for i, k in enumerate(cfg.steps):
        for j, col in enumerate(columns):
            spec = _feature_spec_for_column(col, k)
            key = (spec.steps(),)
            if key not in cache:
                data = from_groups(groups, spec)
                seed = _cell_seed(cfg.seed, ("multiclass", tuple(machines), spec.steps()))
                cache[key] = evaluate_cell(data, seed, cfg)
            record = cache[key]
            cells[i, j] = record["accuracy"]
            cells_meta[f"k={k}::{col}"] = record
    for j, col in enumerate(columns):
        if col != "prefix":
            cells[len(cfg.steps), j] = np.mean(cells[: len(cfg.steps), j])
    return AccuracyTable(
        name="multiclass",
        row_labels=row_labels,
        col_labels=columns,
        cells=cells,
        meta={"machines": machines, "cells": cells_meta},
    )


def _split_epochs(runs: list[Run]) -> tuple[list[Run], list[Run]]:
    """Partition one machine's runs into two epochs by their timestamps."""
    times = np.array([r.timestamp for r in runs])
    if len(runs) < 10 or times.max() - times.min() < 3600.0:
        raise ValueError("missing second epoch: dataset does not span two acquisition epochs")
    threshold = 0.5 * (times.min() + times.max())
    early = [r for r in runs if r.timestamp < threshold]
    late = [r for r in runs if r.timestamp >= threshold]
    if not early or not late:
        raise ValueError("missing second epoch: dataset does not span two acquisition epochs")
    return early, late


def exp_temporal24h(cfg: ExperimentConfig, ds: Dataset | None = None) -> AccuracyTable:
    """One machine against itself on a later acquisition day."""
    ds = ds if ds is not None else load_dataset(cfg.dataset)
    machines = _resolve_machines(ds, cfg, minimum=1)
    machine = machines[0]
    early, late = _split_epochs(ds.runs_for(machine))
    groups = [(early, -1), (late, +1)]
    col_labels = ["single", "prefix"]
    row_labels = []
    rows = []
    cells_meta = {}
    for k in cfg.steps:
        row_label = f"k={k}"
        row_labels.append(row_label)
        row = []
        for col, spec in (("single", FeatureSpec.single(k)), ("prefix", FeatureSpec.prefix(k))):
            data = from_groups(groups, spec)
            seed = _cell_seed(cfg.seed, ("temporal24h", machine, spec.steps()))
            record = evaluate_cell(data, seed, cfg)
            row.append(record["accuracy"])
            cells_meta[f"{row_label}::{col}"] = record
        rows.append(row)
    return AccuracyTable(
        name="temporal24h",
        row_labels=row_labels,
        col_labels=col_labels,
        cells=np.array(rows),
        meta={"machine": machine, "cells": cells_meta},
    )


def _windows(runs: list[Run], window_runs: int, n_windows: int,
             experiment: str) -> list[list[Run]]:
    needed = window_runs * n_windows
    if len(runs) < needed:
        raise ValueError(
            f"{experiment} needs {needed} runs ({n_windows} windows of {window_runs}), "
            f"got {len(runs)}"
        )
    ordered = sorted(runs, key=lambda r: r.timestamp)
    return [ordered[i * window_runs:(i + 1) * window_runs] for i in range(n_windows)]


def _window_cell_seed(cfg_seed: int, machine: str, ref: tuple[int, int],
                      target: tuple[int, int], steps: tuple[int, ...]) -> int:
    """Shared derivation for every window-vs-window comparison cell.

    Used by both the window-temporal and gap-sweep experiments so that a
    zero-gap sweep cell is the same computation (and value) as the
    corresponding adjacent-window cell.
    """
    return _cell_seed(cfg_seed, ("window-pair", machine, list(ref), list(target), list(steps)))


def exp_window_temporal(cfg: ExperimentConfig, ds: Dataset | None = None) -> AccuracyTable:
    """First window of a machine's history against every later window."""
    ds = ds if ds is not None else load_dataset(cfg.dataset)
    machine = _resolve_machines(ds, cfg, minimum=1)[0]
    windows = _windows(ds.runs_for(machine), cfg.window_runs, cfg.n_windows, "window-temporal")
    col_labels = [f"W{j}" for j in range(2, cfg.n_windows + 1)]
    row_labels = [f"single k={k}" for k in cfg.steps] + [f"prefix k={k}" for k in cfg.steps]
    cells = np.full((len(row_labels), len(col_labels)), np.nan)
    cells_meta = {}
    for j in range(2, cfg.n_windows + 1):
        target_window = windows[j - 1]
        groups = [(windows[0], -1), (target_window, +1)]
        ref_range = (0, cfg.window_runs)
        target_range = ((j - 1) * cfg.window_runs, j * cfg.window_runs)
        for mode_idx, mode in enumerate(("single", "prefix")):
            for i, k in enumerate(cfg.steps):
                spec = FeatureSpec.single(k) if mode == "single" else FeatureSpec.prefix(k)
                data = from_groups(groups, spec)
                seed = _window_cell_seed(cfg.seed, machine, ref_range, target_range, spec.steps())
                record = evaluate_cell(data, seed, cfg)
                row = mode_idx * len(cfg.steps) + i
                cells[row, j - 2] = record["accuracy"]
                cells_meta[f"{row_labels[row]}::W{j}"] = record
    return AccuracyTable(
        name="window_temporal",
        row_labels=row_labels,
        col_labels=col_labels,
        cells=cells,
        meta={"machine": machine, "window_runs": cfg.window_runs, "cells": cells_meta},
    )


def exp_gap_sweep(cfg: ExperimentConfig, ds: Dataset | None = None) -> AccuracyTable:
    """Accuracy of window-vs-window separation as the time gap grows.

    The reference window is the machine's first ``window_runs`` runs; each
    sweep point takes the first full window starting at least ``gap``
    hours after the reference window ends.  Gaps beyond the dataset are
    dropped with a warning.
    """
    ds = ds if ds is not None else load_dataset(cfg.dataset)
    machine = _resolve_machines(ds, cfg, minimum=1)[0]
    runs = sorted(ds.runs_for(machine), key=lambda r: r.timestamp)
    w = cfg.window_runs
    if len(runs) < 2 * w:
        raise ValueError(f"gap-sweep needs at least {2 * w} runs, got {len(runs)}")
    times = np.array([r.timestamp for r in runs])
    reference = runs[:w]
    ref_end_time = times[w]  # start of the first run after the reference window

    spec = FeatureSpec.prefix(max(cfg.steps))
    starts = np.diff(times)
    runs_per_6h = float(6.0 * 3600.0 / np.median(starts))

    row_labels = []
    values = []
    cells_meta = {}
    dropped = []
    for gap_h in cfg.gaps_hours:
        start_idx = int(np.searchsorted(times, ref_end_time + gap_h * 3600.0, side="left"))
        start_idx = max(start_idx, w)
        if start_idx + w > len(runs):
            dropped.append(gap_h)
            continue
        target = runs[start_idx:start_idx + w]
        groups = [(reference, -1), (target, +1)]
        data = from_groups(groups, spec)
        seed = _window_cell_seed(cfg.seed, machine, (0, w),
                                 (start_idx, start_idx + w), spec.steps())
        record = evaluate_cell(data, seed, cfg)
        record["gap_hours"] = gap_h
        record["target_start_run"] = start_idx
        row_labels.append(f"gap={gap_h:g}h")
        values.append([record["accuracy"]])
        cells_meta[f"gap={gap_h:g}h::accuracy"] = record
    if dropped:
        warnings.warn(f"gap-sweep dropped gaps beyond dataset span: {dropped}")
    if not values:
        raise ValueError("gap-sweep: no gap fits inside the dataset span")
    return AccuracyTable(
        name="gap_sweep",
        row_labels=row_labels,
        col_labels=["accuracy"],
        cells=np.array(values),
        meta={
            "machine": machine,
            "window_runs": w,
            "feature": spec.label(),
            "runs_per_6_hours": runs_per_6h,
            "dropped_gaps_hours": dropped,
            "cells": cells_meta,
        },
    )


def exp_robustness(cfg: ExperimentConfig, ds: Dataset | None = None) -> AccuracyTable:
    """Train-window x test-window grid for a two-machine classifier.

    Diagonal cells score the held-out test split of the training window;
    off-diagonal cells score the entire target window.
    """
    ds = ds if ds is not None else load_dataset(cfg.dataset)
    machines = _resolve_machines(ds, cfg, minimum=2)
    if len(machines) != 2:
        raise ValueError(f"robustness needs exactly 2 machines, got {len(machines)}")
    a, b = machines
    win_a = _windows(ds.runs_for(a), cfg.window_runs, cfg.n_windows, "robustness")
    win_b = _windows(ds.runs_for(b), cfg.window_runs, cfg.n_windows, "robustness")
    spec = FeatureSpec.prefix(max(cfg.steps))
    window_sets = [
        from_groups([(win_a[i], -1), (win_b[i], +1)], spec) for i in range(cfg.n_windows)
    ]
    row_labels = [f"train W{i + 1}" for i in range(cfg.n_windows)]
    col_labels = [f"test W{j + 1}" for j in range(cfg.n_windows)]
    cells = np.zeros((cfg.n_windows, cfg.n_windows))
    cells_meta = {}
    for i in range(cfg.n_windows):
        seed = _cell_seed(cfg.seed, ("robustness", a, b, i, spec.steps()))
        fit = fit_cell(window_sets[i], seed, cfg)
        for j in range(cfg.n_windows):
            record = fit.record if j == i else score_cell(fit, window_sets[j])
            cells[i, j] = record["accuracy"]
            cells_meta[f"train W{i + 1}::test W{j + 1}"] = record
    return AccuracyTable(
        name="robustness",
        row_labels=row_labels,
        col_labels=col_labels,
        cells=cells,
        meta={"machines": machines, "window_runs": cfg.window_runs,
              "feature": spec.label(), "cells": cells_meta},
    )


_RUNNERS = {
    "pairwise": exp_pairwise,
    "multiclass": exp_multiclass,
    "temporal24h": exp_temporal24h,
    "window-temporal": exp_window_temporal,
    "gap-sweep": exp_gap_sweep,
    "robustness": exp_robustness,
}


def run_experiment(cfg: ExperimentConfig, ds: Dataset | None = None) -> AccuracyTable:
    table = _RUNNERS[cfg.experiment](cfg, ds)
    table.meta["experiment"] = cfg.experiment
    table.meta["seed"] = cfg.seed
    table.meta["config"] = cfg.to_dict()
    table.meta["config_hash"] = cfg.config_hash()
    return table


# ---------------------------------------------------------------------------
# Reports.
# ---------------------------------------------------------------------------


def _format_cell(value: float) -> str:
    return "" if np.isnan(value) else f"{value:.4f}"


def emit_report(table: AccuracyTable, out_dir: str | Path,
                formats: Sequence[str] = ("csv", "markdown")) -> list[Path]:
    """Write the table as CSV and/or markdown plus a JSON metadata sidecar.

    Output is a pure function of the table: fixed four-decimal accuracy
    formatting, sorted metadata keys, no timestamps.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "csv":
            lines = ["," + ",".join(table.col_labels)]
            for label, row in zip(table.row_labels, table.cells):
                lines.append(label + "," + ",".join(_format_cell(v) for v in row))
            path = out_dir / f"{table.name}.csv"
            path.write_text("\n".join(lines) + "\n")
        elif fmt == "markdown":
            header = "| | " + " | ".join(table.col_labels) + " |"
            rule = "|---" * (len(table.col_labels) + 1) + "|"
            lines = [header, rule]
            for label, row in zip(table.row_labels, table.cells):
                rendered = [(_format_cell(v) or "n/a") for v in row]
                lines.append("| " + label + " | " + " | ".join(rendered) + " |")
            path = out_dir / f"{table.name}.md"
            path.write_text("\n".join(lines) + "\n")
        else:
            raise ValueError(f"unknown report format: {fmt!r}")
        written.append(path)
    sidecar = out_dir / f"{table.name}.meta.json"
    sidecar.write_text(json.dumps(table.meta, indent=2, sort_keys=True, default=float) + "\n")
    written.append(sidecar)
    return written
