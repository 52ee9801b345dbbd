"""Data acquisition: schedules, run execution, dataset persistence.

Two acquisition protocols are emulated:

* ``fast``: twenty concurrent queue slots per machine.  Each run (task)
  executes all nine step circuits and reports eight independent
  1000-shot outcome distributions per step, so one run yields an
  8 x 9 x 4 block.  A full fast acquisition spans minutes of simulated
  time.
* ``slow``: strictly sequential, one 9 x 4 block per run, with at least
  120 seconds between consecutive run starts.  Thousands of slow runs
  span simulated days, which is what makes drift visible.

Every run draws its randomness from a stream keyed by
(seed, machine_id, run_id), so datasets are reproducible and independent
of scheduling or worker order.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .machines import MachineProfile, noise_model_for, params_at
from .simulator import apply_readout, evolve, measure_pair, sample_counts
from .testbed import N_STEPS, decompose_toffoli, step_circuit

PROTOCOLS = ("fast", "slow")
DEFAULT_SHOTS = 1000
FAST_SLOTS = 20
FAST_SUBSAMPLES = 8
SLOW_MIN_GAP = 120.0

_DATASET_FORMAT = "noisefp-dataset/1"

# Stream discriminators keeping schedule/run randomness independent.
_SCHED_STREAM = 0x5C4ED
_RUN_STREAM = 0x2BAD5EED


def _machine_key(machine_id: str) -> int:
    return int.from_bytes(hashlib.sha256(machine_id.encode()).digest()[:6], "big")


@dataclass(frozen=True)
class ScheduleConfig:
    """Wall-time model for the two protocols.

    ``anomalies`` adds extra delay to the gaps of a slow schedule: each
    entry is (first_run, last_run, extra_seconds) over 1-based run
    indices, emulating queue congestion episodes.
    """

    fast_wall_time: tuple[float, float] = (30.0, 90.0)
    slow_wall_time: tuple[float, float] = (60.0, 180.0)
    slow_min_gap: float = SLOW_MIN_GAP
    anomalies: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        for lo, hi in (self.fast_wall_time, self.slow_wall_time):
            if not 0.0 < lo <= hi:
                raise ValueError(f"invalid wall-time range: ({lo}, {hi})")
        if self.slow_min_gap < 0.0:
            raise ValueError("slow_min_gap must be nonnegative")
        for first, last, extra in self.anomalies:
            if first < 1 or last < first or extra < 0.0:
                raise ValueError(f"invalid anomaly segment: {(first, last, extra)}")


@dataclass(eq=False)
class Run:
    """One executed task: per-step empirical outcome distributions.

    ``distributions`` has shape (n_samples, 9, 4): one 9-step row of
    length-4 distributions per sub-sample (8 for fast runs, 1 for slow).
    """

    run_id: int
    machine_id: str
    timestamp: float
    distributions: np.ndarray
    shots: int = DEFAULT_SHOTS

    def __post_init__(self):
        d = np.asarray(self.distributions, dtype=float)
        if d.ndim != 3 or d.shape[1] != N_STEPS or d.shape[2] != 4:
            raise ValueError(f"distributions have shape {d.shape}, want (*, {N_STEPS}, 4)")
        self.distributions = d
        if self.shots < 1:
            raise ValueError(f"empty sample: shots={self.shots}")


@dataclass(eq=False)
class Dataset:
    """A generated collection of runs plus the profiles that made them."""

    protocol: str
    runs: list[Run]
    profiles: list[MachineProfile]
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol: {self.protocol!r}")

    def machine_ids(self) -> list[str]:
        return [p.machine_id for p in self.profiles]

    def runs_for(self, machine_id: str) -> list[Run]:
        picked = [r for r in self.runs if r.machine_id == machine_id]
        if not picked:
            raise ValueError(f"missing machine: {machine_id!r}")
        return sorted(picked, key=lambda r: r.run_id)


# ---------------------------------------------------------------------------
# Schedules.  Both return per-machine lists of (run_id, start_time).
# ---------------------------------------------------------------------------


def schedule_fast(n_runs: int, rng: np.random.Generator,
                  config: ScheduleConfig = ScheduleConfig()) -> list[tuple[int, float]]:
    """Start times for ``n_runs`` tasks over FAST_SLOTS concurrent slots."""
    if n_runs < 1:
        raise ValueError(f"need at least one run, got {n_runs}")
    lo, hi = config.fast_wall_time
    slots = [0.0] * FAST_SLOTS
    heapq.heapify(slots)
    out = []
    for run_id in range(n_runs):
        start = heapq.heappop(slots)
        out.append((run_id, start))
        heapq.heappush(slots, start + float(rng.uniform(lo, hi)))
    return out


def schedule_slow(n_runs: int, rng: np.random.Generator,
                  config: ScheduleConfig = ScheduleConfig()) -> list[tuple[int, float]]:
    """Sequential start times with gaps >= slow_min_gap + wall time."""
    if n_runs < 1:
        raise ValueError(f"need at least one run, got {n_runs}")
    lo, hi = config.slow_wall_time
    t = 0.0
    out = []
    for run_id in range(n_runs):
        out.append((run_id, t))
        gap = float(rng.uniform(lo, hi)) + config.slow_min_gap
        for first, last, extra in config.anomalies:
            if first <= run_id + 1 <= last:
                gap += extra
        t += gap
    return out


# ---------------------------------------------------------------------------
# Run execution.
# ---------------------------------------------------------------------------

_CUT_CACHE: dict[str, tuple[int, ...]] = {}


def _step_cuts(style: str) -> tuple[int, ...]:
    """Gate counts of the nine step prefixes after TOFFOLI rewriting."""
    if style not in _CUT_CACHE:
        _CUT_CACHE[style] = tuple(
            len(decompose_toffoli(step_circuit(k), style)) for k in range(1, N_STEPS + 1)
        )
    return _CUT_CACHE[style]


def exact_step_distributions(profile: MachineProfile) -> np.ndarray:
    """(9, 4) array of exact post-readout distributions for every step.

    ``profile`` is treated as instantaneous (drift already applied).  The
    nine step circuits are nested prefixes of one gate sequence, so a
    single pass over the longest circuit yields all nine distributions.
    """
    circuit = decompose_toffoli(
        step_circuit(N_STEPS, profile.gate_durations), profile.toffoli_style,
        profile.gate_durations,
    )
    cuts = _step_cuts(profile.toffoli_style)
    noise = noise_model_for(profile)
    out = np.zeros((N_STEPS, 4))
    step = 0
    for position, rho in enumerate(evolve(circuit.gates, noise), start=1):
        while step < N_STEPS and position == cuts[step]:
            out[step] = apply_readout(measure_pair(rho), profile.readout)
            step += 1
    return out


def execute_step(profile: MachineProfile, step: int, shots: int,
                 rng: np.random.Generator) -> np.ndarray:
    """One empirical distribution of step ``step`` on an instantaneous profile."""
    if not 1 <= step <= N_STEPS:
        raise ValueError(f"invalid step: {step}")
    exact = exact_step_distributions(profile)[step - 1]
    return sample_counts(exact, shots, rng)


def _run_stream(seed: int, machine_id: str, run_id: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFF, _machine_key(machine_id), run_id, _RUN_STREAM])


def _execute_run(profile: MachineProfile, run_id: int, t: float, seed: int,
                 shots: int, n_samples: int) -> Run:
    rng = _run_stream(seed, profile.machine_id, run_id)
    inst = params_at(profile, t, rng, calibration_seed=seed)
    exact = exact_step_distributions(inst)
    block = np.empty((n_samples, N_STEPS, 4))
    for s in range(n_samples):
        for k in range(N_STEPS):
            block[s, k] = sample_counts(exact[k], shots, rng)
    return Run(run_id, profile.machine_id, t, block, shots)


def generate_dataset(profiles: Sequence[MachineProfile], protocol: str,
                     n_runs_per_machine: int, seed: int, *,
                     shots: int = DEFAULT_SHOTS,
                     epochs: Sequence[float] = (0.0,),
                     schedule: ScheduleConfig = ScheduleConfig()) -> Dataset:
    """Generate a dataset for the given machine family.

    ``n_runs_per_machine`` tasks are scheduled per machine *per epoch*;
    each epoch restarts the schedule at the epoch's time offset (used to
    emulate re-running an acquisition a day later).  Fast runs carry
    FAST_SUBSAMPLES empirical distributions per step, slow runs one.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol: {protocol!r}")
    profiles = list(profiles)
    if not profiles:
        raise ValueError("empty machine list")
    ids = [p.machine_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate machine ids: {ids}")
    if n_runs_per_machine < 1:
        raise ValueError(f"need at least one run, got {n_runs_per_machine}")
    if not epochs:
        raise ValueError("need at least one epoch")
    if shots < 1:
        raise ValueError(f"empty sample: shots={shots}")

    n_samples = FAST_SUBSAMPLES if protocol == "fast" else 1
    scheduler = schedule_fast if protocol == "fast" else schedule_slow

    runs: list[Run] = []
    for profile in profiles:
        next_run_id = 0
        for epoch in epochs:
            sched_rng = np.random.default_rng(
                [seed & 0xFFFFFFFFFFFF, _machine_key(profile.machine_id),
                 int(round(epoch)) & 0xFFFFFFFFFFFF, _SCHED_STREAM]
            )
            for _, start in scheduler(n_runs_per_machine, sched_rng, schedule):
                runs.append(
                    _execute_run(profile, next_run_id, float(epoch) + start, seed,
                                 shots, n_samples)
                )
                next_run_id += 1

    meta = {
        "n_runs_per_machine": n_runs_per_machine,
        "epochs": [float(e) for e in epochs],
        "shots": shots,
        "samples_per_run": n_samples,
        "schedule": {
            "fast_wall_time": list(schedule.fast_wall_time),
            "slow_wall_time": list(schedule.slow_wall_time),
            "slow_min_gap": schedule.slow_min_gap,
            "anomalies": [list(a) for a in schedule.anomalies],
        },
    }
    return Dataset(protocol, runs, profiles, seed, meta)


# ---------------------------------------------------------------------------
# Persistence: a directory with manifest.json and runs.csv.
# ---------------------------------------------------------------------------

_CSV_HEADER = "run_id,machine_id,timestamp_s,step,shots,p00,p01,p10,p11"


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    """Write ``dataset`` under directory ``path`` (created if needed).

    Probabilities are stored with six decimal digits, which is exact for
    empirical distributions over <= 10^6 shots; timestamps use full float
    precision so a round trip is bit-identical.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": _DATASET_FORMAT,
        "protocol": dataset.protocol,
        "seed": dataset.seed,
        "machines": [p.to_dict() for p in dataset.profiles],
        "n_runs": len(dataset.runs),
        "meta": dataset.meta,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    lines = [_CSV_HEADER]
    for run in dataset.runs:
        for sample in run.distributions:
            for k in range(N_STEPS):
                probs = ",".join(f"{p:.6f}" for p in sample[k])
                lines.append(
                    f"{run.run_id},{run.machine_id},{run.timestamp!r},{k + 1},{run.shots},{probs}"
                )
    (path / "runs.csv").write_text("\n".join(lines) + "\n")
    return path


def load_dataset(path: str | Path) -> Dataset:
    """Inverse of :func:`save_dataset`; fails loudly on malformed input."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    runs_path = path / "runs.csv"
    if not manifest_path.is_file() or not runs_path.is_file():
        raise ValueError(f"corrupt dataset: {path} is missing manifest.json or runs.csv")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt dataset: {manifest_path}: {exc}") from exc
    if manifest.get("format") != _DATASET_FORMAT:
        raise ValueError(f"corrupt dataset: unknown format {manifest.get('format')!r}")
    profiles = [MachineProfile.from_dict(d) for d in manifest["machines"]]
    protocol = manifest["protocol"]
    expected_samples = manifest["meta"]["samples_per_run"]

    lines = runs_path.read_text().splitlines()
    if not lines or lines[0] != _CSV_HEADER:
        raise ValueError(f"corrupt dataset: {runs_path}:1: bad header")

    runs: list[Run] = []
    pending_key: tuple[int, str] | None = None
    pending_rows: list[tuple[float, int, int, np.ndarray]] = []

    def flush(lineno: int):
        nonlocal pending_key, pending_rows
        if pending_key is None:
            return
        run_id, machine_id = pending_key
        if len(pending_rows) != expected_samples * N_STEPS:
            raise ValueError(
                f"corrupt dataset: {runs_path}:{lineno}: run {run_id} of {machine_id} "
                f"has {len(pending_rows)} rows, want {expected_samples * N_STEPS}"
            )
        timestamp = pending_rows[0][0]
        shots = pending_rows[0][1]
        block = np.empty((expected_samples, N_STEPS, 4))
        for idx, (ts, sh, step, dist) in enumerate(pending_rows):
            sample, step_idx = divmod(idx, N_STEPS)
            if step != step_idx + 1 or ts != timestamp or sh != shots:
                raise ValueError(
                    f"corrupt dataset: {runs_path}:{lineno}: inconsistent rows in run "
                    f"{run_id} of {machine_id}"
                )
            block[sample, step_idx] = dist
        runs.append(Run(run_id, machine_id, timestamp, block, shots))
        pending_key = None
        pending_rows = []

    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise ValueError(f"corrupt dataset: {runs_path}:{lineno}: want 9 fields, got {len(parts)}")
        try:
            run_id = int(parts[0])
            machine_id = parts[1]
            timestamp = float(parts[2])
            step = int(parts[3])
            shots = int(parts[4])
            dist = np.array([float(v) for v in parts[5:]], dtype=float)
        except ValueError as exc:
            raise ValueError(f"corrupt dataset: {runs_path}:{lineno}: {exc}") from exc
        if not 1 <= step <= N_STEPS:
            raise ValueError(f"corrupt dataset: {runs_path}:{lineno}: invalid step {step}")
        if np.any(dist < 0.0) or abs(dist.sum() - 1.0) > 1e-6:
            raise ValueError(f"corrupt dataset: {runs_path}:{lineno}: invalid probability row")
        key = (run_id, machine_id)
        if key != pending_key:
            flush(lineno)
            pending_key = key
        pending_rows.append((timestamp, shots, step, dist))
    flush(len(lines) + 1)

    known = {p.machine_id for p in profiles}
    for run in runs:
        if run.machine_id not in known:
            raise ValueError(f"corrupt dataset: run references unknown machine {run.machine_id!r}")

    ds = Dataset(protocol, runs, profiles, manifest["seed"], manifest.get("meta", {}))
    return ds
