"""The fixed 4-qubit testbed circuit and its nine measurement steps.

One repetition block prepares entanglement between the lower pair
(q0, q1) and the readout pair (q2, q3):

    H q0; H q1; CNOT q0->q2; CNOT q1->q3; X q0; X q1; TOFFOLI (q0, q1)->q2

The full testbed chains three blocks without resets.  Nine measurement
steps cut the chain after each entangling gate (the two CNOTs and the
TOFFOLI of every block); each step is a standalone circuit ending in a
measurement of (q3, q2), so no run needs mid-circuit measurement.

Noiselessly, the full chain leaves the register in
(|0110> + |0111> + |1001> + |1100>)/2, whose readout-pair distribution is
(0, 1/2, 1/4, 1/4).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .simulator import Gate, measure_pair, run_gates

N_STEPS = 9
N_REPETITIONS = 3

# Gates per repetition block, and the prefix length (in gates) of each step.
BLOCK_LEN = 7
STEP_GATE_COUNTS = (3, 4, 7, 10, 11, 14, 17, 18, 21)

TOFFOLI_STYLES = ("none", "standard-6-cnot")

# Noiseless (q3, q2) outcome distributions at each step.  All values are
# exact dyadic rationals; regression checks compare fresh simulation
# against these frozen constants.
REFERENCE_STEP_DISTRIBUTIONS = (
    (0.5, 0.5, 0.0, 0.0),
    (0.25, 0.25, 0.25, 0.25),
    (0.0, 0.5, 0.25, 0.25),
    (0.0, 0.5, 0.25, 0.25),
    (0.125, 0.375, 0.125, 0.375),
    (0.375, 0.125, 0.125, 0.375),
    (0.375, 0.125, 0.375, 0.125),
    (0.625, 0.125, 0.125, 0.125),
    (0.375, 0.375, 0.125, 0.125),
)

DEFAULT_DURATIONS: Mapping[str, float] = {
    "H": 35e-9,
    "X": 35e-9,
    "T": 35e-9,
    "TDG": 35e-9,
    "CNOT": 300e-9,
    "TOFFOLI": 900e-9,
}


@dataclass(frozen=True)
class Circuit:
    """An ordered gate sequence on the 4-qubit register."""

    gates: tuple[Gate, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))

    def __len__(self) -> int:
        return len(self.gates)


def _block_gates(durations: Mapping[str, float]) -> list[Gate]:
    d = durations
    return [
        Gate("H", (0,), d["H"]),
        Gate("H", (1,), d["H"]),
        Gate("CNOT", (0, 2), d["CNOT"]),
        Gate("CNOT", (1, 3), d["CNOT"]),
        Gate("X", (0,), d["X"]),
        Gate("X", (1,), d["X"]),
        Gate("TOFFOLI", (0, 1, 2), d["TOFFOLI"]),
    ]


def repetition_block(durations: Mapping[str, float] | None = None) -> Circuit:
    """One 7-gate repetition block with the given per-kind durations."""
    return Circuit(tuple(_block_gates(dict(durations or DEFAULT_DURATIONS))))


def full_circuit(durations: Mapping[str, float] | None = None) -> Circuit:
    """Three chained repetition blocks (21 gates, no resets between them)."""
    block = _block_gates(dict(durations or DEFAULT_DURATIONS))
    return Circuit(tuple(block * N_REPETITIONS))


def step_circuit(step: int, durations: Mapping[str, float] | None = None) -> Circuit:
    """The standalone circuit measured at step ``step`` (1-based, 1..9).

    Step 3r+1 ends after the block's CNOT q0->q2, step 3r+2 after
    CNOT q1->q3, and step 3r+3 after the TOFFOLI (the block's X gates
    belong to the 3r+3 prefix).  Every step circuit is a prefix of the
    next.
    """
    if not isinstance(step, int) or isinstance(step, bool):
        raise ValueError(f"invalid step: {step!r}")
    if not 1 <= step <= N_STEPS:
        raise ValueError(f"invalid step: {step} (want 1..{N_STEPS})")
    return Circuit(full_circuit(durations).gates[: STEP_GATE_COUNTS[step - 1]])


def _toffoli_expansion(gate: Gate, durations: Mapping[str, float]) -> list[Gate]:
    """Textbook 6-CNOT expansion of a TOFFOLI into {H, T, TDG, CNOT}."""
    a, b, t = gate.qubits
    d = durations
    seq = [
        ("H", (t,)),
        ("CNOT", (b, t)),
        ("TDG", (t,)),
        ("CNOT", (a, t)),
        ("T", (t,)),
        ("CNOT", (b, t)),
        ("TDG", (t,)),
        ("CNOT", (a, t)),
        ("T", (b,)),
        ("T", (t,)),
        ("H", (t,)),
        ("CNOT", (a, b)),
        ("T", (a,)),
        ("TDG", (b,)),
        ("CNOT", (a, b)),
    ]
    return [Gate(kind, qubits, d[kind]) for kind, qubits in seq]


def decompose_toffoli(circuit: Circuit, style: str,
                      durations: Mapping[str, float] | None = None) -> Circuit:
    """Rewrite TOFFOLI gates per ``style``; other gates pass through.

    ``"none"`` keeps the native three-qubit gate.  ``"standard-6-cnot"``
    substitutes the 15-gate textbook network (6 CNOTs plus T/TDG/H), which
    is noiselessly equivalent but exposes a different noise surface.
    """
    if style not in TOFFOLI_STYLES:
        raise ValueError(f"unknown decomposition style: {style!r}")
    if style == "none":
        return circuit
    d = dict(durations or DEFAULT_DURATIONS)
    gates: list[Gate] = []
    for gate in circuit.gates:
        if gate.kind == "TOFFOLI":
            gates.extend(_toffoli_expansion(gate, d))
        else:
            gates.append(gate)
    return Circuit(tuple(gates))


_IDEAL_CACHE: dict[int, np.ndarray] = {}


def ideal_distribution(step: int) -> np.ndarray:
    """Noiseless readout-pair distribution of ``step_circuit(step)``."""
    if step not in _IDEAL_CACHE:
        rho = run_gates(step_circuit(step).gates)
        dist = measure_pair(rho)
        dist.setflags(write=False)
        _IDEAL_CACHE[step] = dist
    return _IDEAL_CACHE[step]


# ---------------------------------------------------------------------------
# Plain-text circuit format: one gate per line, "KIND q... #duration_ns".
# ---------------------------------------------------------------------------


def format_circuit(circuit: Circuit) -> str:
    lines = []
    for gate in circuit.gates:
        qubits = " ".join(str(q) for q in gate.qubits)
        ns = gate.duration * 1e9
        lines.append(f"{gate.kind} {qubits} #{ns:g}")
    return "\n".join(lines) + "\n"


def parse_circuit(text: str) -> Circuit:
    """Inverse of :func:`format_circuit`; raises with the offending line."""
    gates = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2 or not parts[-1].startswith("#"):
            raise ValueError(f"line {lineno}: malformed gate line: {raw!r}")
        kind = parts[0]
        try:
            qubits = tuple(int(tok) for tok in parts[1:-1])
            ns = float(parts[-1][1:])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: malformed gate line: {raw!r}") from exc
        try:
            # Divide rather than scale by 1e-9: the correctly rounded
            # quotient reproduces literals like 300e-9 bit-exactly.
            gates.append(Gate(kind, qubits, ns / 1e9))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return Circuit(tuple(gates))
