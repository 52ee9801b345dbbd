"""Synthetic machine profiles: static noise figures plus slow drift.

A profile bundles everything that makes one simulated device *itself*:
per-qubit relaxation times, per-gate-class depolarizing rates, gate
durations, a readout confusion matrix, how it implements the TOFFOLI, and
a drift law describing how all of it wanders over time.

Drift multiplies every error rate and every relaxation *rate* (1/T) by

    f(t) = 1 + relative_amplitude * sin(2 pi t / period)
             + calibration offset + per-call jitter

where the calibration offset is a piecewise-constant Gaussian resampled at
each multiple of ``calibration_period``, and the jitter is a fresh
Gaussian per call.  Calibration offsets are keyed by the profile's
*physical* parameters rather than its name, so two registrations of the
same profile under different names share one drift trajectory and remain
statistically indistinguishable.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .simulator import (
    N_QUBITS,
    NoiseModel,
    confusion_from_flips,
    validate_confusion,
)
from .testbed import DEFAULT_DURATIONS, TOFFOLI_STYLES

# Drift factors are clamped away from zero so scaled rates stay physical.
_MIN_DRIFT_FACTOR = 0.05

_GATE_KINDS = tuple(DEFAULT_DURATIONS)


@dataclass(frozen=True)
class DriftSpec:
    """Parameters of the slow drift law (see module docstring).

    ``relative_amplitude`` is the sinusoid's amplitude in [0, 0.5];
    ``period`` its period in seconds; ``jitter_std`` the per-call Gaussian
    noise; ``calibration_jump_std`` the scale of the piecewise-constant
    recalibration offsets.
    """

    relative_amplitude: float = 0.0
    period: float = 24.0 * 3600.0
    jitter_std: float = 0.0
    calibration_jump_std: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.relative_amplitude <= 0.5:
            raise ValueError(f"relative_amplitude outside [0, 0.5]: {self.relative_amplitude}")
        if not self.period > 0.0:
            raise ValueError(f"drift period must be positive: {self.period}")
        if self.jitter_std < 0.0 or self.calibration_jump_std < 0.0:
            raise ValueError("drift noise scales must be nonnegative")

    @staticmethod
    def none() -> "DriftSpec":
        return DriftSpec(0.0, 24.0 * 3600.0, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class MachineProfile:
    """One synthetic device.  All times in seconds, rates in [0, 1]."""

    machine_id: str
    base_t1: tuple[float, float, float, float]
    base_t2: tuple[float, float, float, float]
    err_1q: float
    err_2q: float
    err_3q: float
    gate_durations: Mapping[str, float]
    readout: np.ndarray
    drift: DriftSpec = field(default_factory=DriftSpec.none)
    calibration_period: float = 1800.0
    toffoli_style: str = "none"

    def __post_init__(self):
        if not self.machine_id:
            raise ValueError("machine_id must be nonempty")
        t1 = tuple(float(v) for v in self.base_t1)
        t2 = tuple(float(v) for v in self.base_t2)
        if len(t1) != N_QUBITS or len(t2) != N_QUBITS:
            raise ValueError("base_t1/base_t2 must list one value per qubit")
        for a, b in zip(t1, t2):
            if not a > 0.0 or not b > 0.0:
                raise ValueError("relaxation times must be positive")
            if b > 2.0 * a * (1.0 + 1e-12):
                raise ValueError(f"unphysical T2: {b} > 2*T1 = {2.0 * a}")
        object.__setattr__(self, "base_t1", t1)
        object.__setattr__(self, "base_t2", t2)
        for name in ("err_1q", "err_2q", "err_3q"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"invalid probability: {name}={p}")
        durations = dict(self.gate_durations)
        for kind in _GATE_KINDS:
            if kind not in durations:
                raise ValueError(f"gate_durations missing kind {kind!r}")
            if durations[kind] < 0.0:
                raise ValueError(f"negative duration for {kind}")
        object.__setattr__(self, "gate_durations", durations)
        readout = validate_confusion(self.readout)
        readout.setflags(write=False)
        object.__setattr__(self, "readout", readout)
        if not self.calibration_period > 0.0:
            raise ValueError(f"calibration_period must be positive: {self.calibration_period}")
        if self.toffoli_style not in TOFFOLI_STYLES:
            raise ValueError(f"unknown decomposition style: {self.toffoli_style!r}")

    def to_dict(self) -> dict:
        return {
            "machine_id": self.machine_id,
            "base_t1": list(self.base_t1),
            "base_t2": list(self.base_t2),
            "err_1q": self.err_1q,
            "err_2q": self.err_2q,
            "err_3q": self.err_3q,
            "gate_durations": dict(sorted(self.gate_durations.items())),
            "readout": [list(row) for row in self.readout],
            "drift": {
                "relative_amplitude": self.drift.relative_amplitude,
                "period": self.drift.period,
                "jitter_std": self.drift.jitter_std,
                "calibration_jump_std": self.drift.calibration_jump_std,
            },
            "calibration_period": self.calibration_period,
            "toffoli_style": self.toffoli_style,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "MachineProfile":
        return MachineProfile(
            machine_id=d["machine_id"],
            base_t1=tuple(d["base_t1"]),
            base_t2=tuple(d["base_t2"]),
            err_1q=d["err_1q"],
            err_2q=d["err_2q"],
            err_3q=d["err_3q"],
            gate_durations=dict(d["gate_durations"]),
            readout=np.array(d["readout"], dtype=float),
            drift=DriftSpec(**d["drift"]),
            calibration_period=d["calibration_period"],
            toffoli_style=d["toffoli_style"],
        )


def physical_fingerprint(profile: MachineProfile) -> int:
    """Stable 64-bit hash of a profile's physics (name excluded)."""
    payload = profile.to_dict()
    del payload["machine_id"]
    blob = json.dumps(payload, sort_keys=True).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def _calibration_offset(profile: MachineProfile, t: float, calibration_seed: int) -> float:
    jump_std = profile.drift.calibration_jump_std
    if jump_std == 0.0:
        return 0.0
    epoch = int(math.floor(t / profile.calibration_period))
    stream = np.random.default_rng(
        [calibration_seed & 0xFFFFFFFFFFFF, physical_fingerprint(profile), epoch & 0xFFFFFFFFFFFF]
    )
    return float(stream.normal(0.0, jump_std))


def scale_confusion(m: np.ndarray, factor: float) -> np.ndarray:
    """Scale the off-diagonal (misread) mass of a confusion matrix.

    Off-diagonal entries are multiplied by ``factor`` and clipped so each
    row stays a distribution; the diagonal absorbs the remainder.
    """
    m = np.asarray(m, dtype=float)
    off = m - np.diag(np.diag(m))
    off = np.clip(off * factor, 0.0, None)
    row_off = off.sum(axis=1)
    # Keep at least a trace of correct readout per row.
    excess = np.clip(row_off - 0.999, 0.0, None)
    with np.errstate(invalid="ignore", divide="ignore"):
        shrink = np.where(row_off > 0.999, (row_off - excess) / np.where(row_off == 0, 1.0, row_off), 1.0)
    off = off * shrink[:, None]
    return off + np.diag(1.0 - off.sum(axis=1))


def params_at(profile: MachineProfile, t: float, rng: np.random.Generator,
              calibration_seed: int = 0) -> MachineProfile:
    """Instantaneous profile at simulated time ``t``.

    Deterministic given (profile, t, rng state, calibration_seed): the
    sinusoid and calibration offsets are pure functions of ``t``; only the
    per-call jitter consumes ``rng``.  Scaled rates are clamped to [0, 1]
    and T2 is re-clamped under 2*T1.
    """
    drift = profile.drift
    factor = 1.0 + drift.relative_amplitude * math.sin(2.0 * math.pi * t / drift.period)
    factor += _calibration_offset(profile, t, calibration_seed)
    if drift.jitter_std > 0.0:
        factor += float(rng.normal(0.0, drift.jitter_std))
    factor = max(factor, _MIN_DRIFT_FACTOR)

    t1 = tuple(v / factor for v in profile.base_t1)
    t2 = tuple(min(b / factor, 2.0 * a) for a, b in zip(t1, profile.base_t2))
    return replace(
        profile,
        base_t1=t1,
        base_t2=t2,
        err_1q=min(profile.err_1q * factor, 1.0),
        err_2q=min(profile.err_2q * factor, 1.0),
        err_3q=min(profile.err_3q * factor, 1.0),
        readout=scale_confusion(profile.readout, factor),
    )


def noise_model_for(profile: MachineProfile) -> NoiseModel:
    """Gate-level noise parameters of an (instantaneous) profile."""
    return NoiseModel(
        t1=profile.base_t1,
        t2=profile.base_t2,
        err_1q=profile.err_1q,
        err_2q=profile.err_2q,
        err_3q=profile.err_3q,
    )


# ---------------------------------------------------------------------------
# Built-in profile family.
#
# Nine devices spanning roughly 3x-10x in every error figure.  Adjacent
# devices on any one axis are pushed apart on the others (readout quality,
# relaxation budget, TOFFOLI implementation), so every pair differs in at
# least two independent noise surfaces.
# ---------------------------------------------------------------------------


def _durations(one_q_ns: float, cnot_ns: float, toffoli_ns: float) -> dict[str, float]:
    return {
        "H": one_q_ns * 1e-9,
        "X": one_q_ns * 1e-9,
        "T": one_q_ns * 1e-9,
        "TDG": one_q_ns * 1e-9,
        "CNOT": cnot_ns * 1e-9,
        "TOFFOLI": toffoli_ns * 1e-9,
    }


def _us(*values: float) -> tuple[float, ...]:
    return tuple(v * 1e-6 for v in values)


def default_profiles() -> dict[str, MachineProfile]:
    """The built-in family, keyed by machine id (insertion order stable)."""
    profiles = [
        MachineProfile(
            machine_id="athens",
            base_t1=_us(120.0, 110.0, 130.0, 115.0),
            base_t2=_us(150.0, 140.0, 160.0, 145.0),
            err_1q=0.0006, err_2q=0.006, err_3q=0.016,
            gate_durations=_durations(32.0, 280.0, 850.0),
            readout=confusion_from_flips(0.008, 0.014),
            drift=DriftSpec(0.03, 48.0 * 3600.0, 0.010, 0.004),
            toffoli_style="none",
        ),
        MachineProfile(
            machine_id="santiago",
            base_t1=_us(150.0, 145.0, 155.0, 148.0),
            base_t2=_us(180.0, 175.0, 185.0, 178.0),
            err_1q=0.0008, err_2q=0.008, err_3q=0.02,
            gate_durations=_durations(30.0, 260.0, 780.0),
            readout=confusion_from_flips(0.070, 0.040),
            drift=DriftSpec(0.04, 44.0 * 3600.0, 0.010, 0.005),
            toffoli_style="standard-6-cnot",
        ),
        MachineProfile(
            machine_id="bogota",
            base_t1=_us(30.0, 28.0, 32.0, 29.0),
            base_t2=_us(38.0, 35.0, 40.0, 37.0),
            err_1q=0.0013, err_2q=0.013, err_3q=0.035,
            gate_durations=_durations(35.0, 330.0, 990.0),
            readout=confusion_from_flips(0.040, 0.020),
            drift=DriftSpec(0.04, 36.0 * 3600.0, 0.012, 0.005),
            toffoli_style="none",
        ),
        MachineProfile(
            machine_id="lima",
            base_t1=_us(70.0, 74.0, 68.0, 72.0),
            base_t2=_us(85.0, 90.0, 82.0, 88.0),
            err_1q=0.0015, err_2q=0.015, err_3q=0.042,
            gate_durations=_durations(40.0, 400.0, 1200.0),
            readout=confusion_from_flips(0.082, 0.102),
            drift=DriftSpec(0.035, 40.0 * 3600.0, 0.008, 0.006),
            toffoli_style="standard-6-cnot",
        ),
        MachineProfile(
            machine_id="rome",
            base_t1=_us(55.0, 52.0, 58.0, 54.0),
            base_t2=_us(70.0, 65.0, 75.0, 68.0),
            err_1q=0.002, err_2q=0.02, err_3q=0.055,
            gate_durations=_durations(33.0, 300.0, 900.0),
            readout=confusion_from_flips(0.015, 0.012),
            drift=DriftSpec(0.05, 52.0 * 3600.0, 0.015, 0.006),
            toffoli_style="standard-6-cnot",
        ),
        MachineProfile(
            machine_id="casablanca",
            base_t1=_us(12.0, 11.5, 12.5, 11.8),
            base_t2=_us(15.0, 14.5, 16.0, 15.0),
            err_1q=0.0024, err_2q=0.024, err_3q=0.065,
            gate_durations=_durations(36.0, 340.0, 1020.0),
            readout=confusion_from_flips(0.016, 0.008),
            drift=DriftSpec(0.04, 32.0 * 3600.0, 0.008, 0.006),
            toffoli_style="none",
        ),
        MachineProfile(
            machine_id="quito",
            base_t1=_us(100.0, 95.0, 105.0, 98.0),
            base_t2=_us(120.0, 110.0, 125.0, 115.0),
            err_1q=0.003, err_2q=0.030, err_3q=0.13,
            gate_durations=_durations(30.0, 290.0, 870.0),
            readout=confusion_from_flips(0.018, 0.092),
            drift=DriftSpec(0.04, 66.0 * 3600.0, 0.008, 0.0),
            toffoli_style="none",
        ),
        MachineProfile(
            machine_id="belem",
            base_t1=_us(40.0, 43.0, 38.0, 41.0),
            base_t2=_us(50.0, 54.0, 48.0, 52.0),
            err_1q=0.0065, err_2q=0.065, err_3q=0.16,
            gate_durations=_durations(38.0, 370.0, 1110.0),
            readout=confusion_from_flips(0.065, 0.008),
            drift=DriftSpec(0.20, 66.0 * 3600.0, 0.008, 0.0),
            toffoli_style="standard-6-cnot",
        ),
        MachineProfile(
            machine_id="yorktown",
            base_t1=_us(35.0, 33.0, 37.0, 34.0),
            base_t2=_us(44.0, 42.0, 46.0, 43.0),
            err_1q=0.0055, err_2q=0.055, err_3q=0.14,
            gate_durations=_durations(45.0, 430.0, 1290.0),
            readout=confusion_from_flips(0.140, 0.165),
            drift=DriftSpec(0.04, 28.0 * 3600.0, 0.010, 0.008),
            toffoli_style="none",
        ),
    ]
    return {p.machine_id: p for p in profiles}


# The seven machines used by concurrent "fast" acquisitions by default.
FAST_MACHINES = ("athens", "bogota", "casablanca", "lima", "quito", "santiago", "yorktown")
# The sequential "slow" pair.
SLOW_MACHINES = ("belem", "quito")


def clone_profile(profile: MachineProfile, new_id: str) -> MachineProfile:
    """Same physics under a new name; shares the drift trajectory."""
    return replace(profile, machine_id=new_id)
