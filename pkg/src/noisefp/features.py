"""Feature vectors for classification: slices of a run's step distributions.

A run's measurement record is nine length-4 outcome distributions, one
per step.  A feature spec picks which steps enter the classifier:

* ``single(k)``: step k alone (4 features);
* ``window(k, s)``: steps max(1, k-s)..k (a trailing window);
* ``prefix(k)``: steps 1..k (the whole record so far, 4k features).

Features are raw probabilities; standardization is available separately
as an ablation toggle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .acquisition import Dataset, Run
from .testbed import N_STEPS

FEATURE_MODES = ("single", "window", "prefix")


@dataclass(frozen=True)
class FeatureSpec:
    """Which steps of the record feed the classifier."""

    mode: str
    step: int
    width: int = 0

    def __post_init__(self):
        if self.mode not in FEATURE_MODES:
            raise ValueError(f"unknown feature mode: {self.mode!r}")
        if not 1 <= self.step <= N_STEPS:
            raise ValueError(f"invalid step: {self.step}")
        if self.mode == "window" and self.width < 1:
            raise ValueError(f"window width must be >= 1, got {self.width}")

    @staticmethod
    def single(k: int) -> "FeatureSpec":
        return FeatureSpec("single", k)

    @staticmethod
    def window(k: int, s: int) -> "FeatureSpec":
        return FeatureSpec("window", k, s)

    @staticmethod
    def prefix(k: int) -> "FeatureSpec":
        return FeatureSpec("prefix", k)

    def steps(self) -> tuple[int, ...]:
        """The 1-based steps entering the feature vector, ascending."""
        if self.mode == "single":
            return (self.step,)
        if self.mode == "prefix":
            return tuple(range(1, self.step + 1))
        lo = max(1, self.step - self.width)
        return tuple(range(lo, self.step + 1))

    @property
    def n_features(self) -> int:
        return 4 * len(self.steps())

    def label(self) -> str:
        if self.mode == "single":
            return f"single(k={self.step})"
        if self.mode == "prefix":
            return f"prefix(k={self.step})"
        return f"window(k={self.step},s={self.width})"


@dataclass(eq=False)
class LabeledSet:
    """A design matrix with integer labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y)
        if self.x.ndim != 2 or self.y.ndim != 1 or len(self.x) != len(self.y):
            raise ValueError(f"inconsistent shapes: x {self.x.shape}, y {self.y.shape}")

    def __len__(self) -> int:
        return len(self.y)


def run_features(run: Run, spec: FeatureSpec) -> np.ndarray:
    """(n_samples, n_features) block for one run."""
    steps = [k - 1 for k in spec.steps()]
    picked = run.distributions[:, steps, :]
    return picked.reshape(picked.shape[0], -1)


def from_groups(groups: Sequence[tuple[Sequence[Run], int]], spec: FeatureSpec) -> LabeledSet:
    """Stack features from (runs, label) groups into one LabeledSet."""
    blocks = []
    labels = []
    for runs, label in groups:
        for run in runs:
            block = run_features(run, spec)
            blocks.append(block)
            labels.extend([label] * len(block))
    if not blocks:
        raise ValueError("empty selection: no runs to featurize")
    return LabeledSet(np.concatenate(blocks, axis=0), np.array(labels, dtype=int))


def build_features(dataset: Dataset, spec: FeatureSpec,
                   machines: Sequence[str] | None = None,
                   labeler: Callable[[Run], int | None] | None = None) -> LabeledSet:
    """Featurize a dataset.

    By default each run is labeled with the index of its machine in
    ``machines`` (or in the dataset's own machine order).  A ``labeler``
    callback overrides this: it maps a run to an integer label, or None
    to drop the run (used for time-window labeling).
    """
    ids = list(machines) if machines is not None else dataset.machine_ids()
    if not ids:
        raise ValueError("empty selection: no machines requested")
    known = set(dataset.machine_ids())
    for mid in ids:
        if mid not in known:
            raise ValueError(f"missing machine: {mid!r}")

    if labeler is not None:
        wanted = set(ids)
        blocks = []
        labels = []
        for run in dataset.runs:
            if run.machine_id not in wanted:
                continue
            label = labeler(run)
            if label is None:
                continue
            block = run_features(run, spec)
            blocks.append(block)
            labels.extend([int(label)] * len(block))
        if not blocks:
            raise ValueError("empty selection: labeler dropped every run")
        return LabeledSet(np.concatenate(blocks, axis=0), np.array(labels, dtype=int))

    groups = [(dataset.runs_for(mid), idx) for idx, mid in enumerate(ids)]
    return from_groups(groups, spec)


def scaling_params(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and (floored) standard deviation of ``x``."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def standardize(train: LabeledSet, *others: LabeledSet) -> tuple[LabeledSet, ...]:
    """Zero-mean unit-variance rescaling fit on ``train`` only."""
    mean, std = scaling_params(train.x)
    out = [LabeledSet((s.x - mean) / std, s.y.copy()) for s in (train, *others)]
    return tuple(out)
