"""Exact density-matrix simulation of a noisy 4-qubit register.

The register is fixed at four qubits.  Basis states are written
|q3 q2 q1 q0> with q0 the least significant bit, so the basis index of a
computational state is b = 8*q3 + 4*q2 + 2*q1 + q0.  At this size exact
16x16 density-matrix evolution is cheap, deterministic, and free of
trajectory-sampling noise, which keeps every downstream statistic a pure
function of the noise parameters and the sampling seed.

Noise enters through Kraus channels: uniform depolarizing noise on the
qubits touched by a gate, and combined amplitude-damping plus pure
dephasing (thermal relaxation at zero temperature) on every qubit for the
duration of each gate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

N_QUBITS = 4
DIM = 2**N_QUBITS

# Validation tolerances for simulator invariants.
TRACE_TOL = 1e-10
HERMITICITY_TOL = 1e-12
PSD_TOL = 1e-10
CPTP_TOL = 1e-10

GATE_ARITY = {
    "H": 1,
    "X": 1,
    "T": 1,
    "TDG": 1,
    "CNOT": 2,
    "TOFFOLI": 3,
}

_H2 = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)
_X2 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_Y2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_Z2 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
_I2 = np.eye(2, dtype=complex)
_T2 = np.diag([1.0, np.exp(1.0j * math.pi / 4.0)]).astype(complex)
_TDG2 = _T2.conj()

_PAULI = {"I": _I2, "X": _X2, "Y": _Y2, "Z": _Z2}


@dataclass(frozen=True)
class Gate:
    """One gate application: a kind, target qubits, and a wall duration.

    ``qubits`` is ordered; for CNOT it is (control, target) and for
    TOFFOLI (control, control, target).  ``duration`` is in seconds and
    only matters when the gate is simulated with relaxation noise.
    """

    kind: str
    qubits: tuple[int, ...]
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_ARITY:
            raise ValueError(f"unknown gate kind: {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        if len(qubits) != GATE_ARITY[self.kind]:
            raise ValueError(
                f"{self.kind} takes {GATE_ARITY[self.kind]} qubits, got {len(qubits)}"
            )
        for q in qubits:
            if not 0 <= q < N_QUBITS:
                raise ValueError(f"qubit out of range: {q}")
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"duplicate qubits in gate: {qubits}")
        if not (self.duration >= 0.0):
            raise ValueError(f"negative gate duration: {self.duration}")


def initial_state() -> np.ndarray:
    """Density matrix of |0000><0000|."""
    rho = np.zeros((DIM, DIM), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def _lift_single(op: np.ndarray, qubit: int) -> np.ndarray:
    """Embed a 2x2 operator acting on one qubit into the 16x16 register."""
    factors = [_I2] * N_QUBITS
    factors[N_QUBITS - 1 - qubit] = op  # kron order is q3 (x) q2 (x) q1 (x) q0
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def _lift_many(ops: Sequence[np.ndarray], qubits: Sequence[int]) -> np.ndarray:
    """Embed per-qubit 2x2 operators (aligned with ``qubits``) into 16x16."""
    factors = [_I2] * N_QUBITS
    for op, q in zip(ops, qubits):
        factors[N_QUBITS - 1 - q] = op
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def _permutation_unitary(bit_map) -> np.ndarray:
    u = np.zeros((DIM, DIM), dtype=complex)
    for b in range(DIM):
        u[bit_map(b), b] = 1.0
    return u


_UNITARY_CACHE: dict[tuple[str, tuple[int, ...]], np.ndarray] = {}


def gate_unitary(gate: Gate) -> np.ndarray:
    """The 16x16 unitary implementing ``gate`` (cached, read-only)."""
    key = (gate.kind, gate.qubits)
    u = _UNITARY_CACHE.get(key)
    if u is not None:
        return u
    if gate.kind == "H":
        u = _lift_single(_H2, gate.qubits[0])
    elif gate.kind == "X":
        u = _lift_single(_X2, gate.qubits[0])
    elif gate.kind == "T":
        u = _lift_single(_T2, gate.qubits[0])
    elif gate.kind == "TDG":
        u = _lift_single(_TDG2, gate.qubits[0])
    elif gate.kind == "CNOT":
        c, t = gate.qubits
        u = _permutation_unitary(lambda b: b ^ (1 << t) if (b >> c) & 1 else b)
    elif gate.kind == "TOFFOLI":
        c1, c2, t = gate.qubits
        u = _permutation_unitary(
            lambda b: b ^ (1 << t) if ((b >> c1) & 1) and ((b >> c2) & 1) else b
        )
    else:  # pragma: no cover - Gate validates kinds
        raise ValueError(f"unknown gate kind: {gate.kind!r}")
    u.setflags(write=False)
    _UNITARY_CACHE[key] = u
    return u


def apply_gate(rho: np.ndarray, gate: Gate) -> np.ndarray:
    """Conjugate the state by the gate unitary: U rho U^dagger."""
    u = gate_unitary(gate)
    return u @ rho @ u.conj().T


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """A completely positive trace-preserving map given by Kraus operators.

    Construction verifies the CPTP condition sum_i K_i^dagger K_i = I to
    within ``CPTP_TOL``, so a successfully built channel is always safe to
    apply.
    """

    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.operators) == 0:
            raise ValueError("non-CPTP channel: no Kraus operators")
        ops = []
        for op in self.operators:
            op = np.asarray(op, dtype=complex)
            if op.shape != (DIM, DIM):
                raise ValueError(f"Kraus operator has shape {op.shape}, want {(DIM, DIM)}")
            ops.append(op)
        stacked = np.stack(ops)
        total = np.einsum("aji,ajk->ik", stacked.conj(), stacked)
        if not np.allclose(total, np.eye(DIM), atol=CPTP_TOL):
            raise ValueError("non-CPTP channel: Kraus operators do not resolve identity")
        object.__setattr__(self, "operators", tuple(ops))
        object.__setattr__(self, "_stack", stacked)

    @property
    def stack(self) -> np.ndarray:
        return self._stack  # type: ignore[attr-defined]


def apply_channel(rho: np.ndarray, channel: KrausChannel) -> np.ndarray:
    """Apply sum_i K_i rho K_i^dagger."""
    k = channel.stack
    tmp = np.matmul(k, rho)
    return np.einsum("aij,akj->ik", tmp, k.conj())


def depolarizing_channel(p: float, qubits: Sequence[int]) -> KrausChannel:
    """Uniform depolarizing channel at probability ``p`` on 1-3 qubits.

    With probability p the state of the targeted qubits is hit by one of
    the 4^k - 1 nonidentity Pauli strings, each equally likely.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"invalid probability: {p}")
    qubits = tuple(int(q) for q in qubits)
    if not 1 <= len(qubits) <= 3:
        raise ValueError(f"depolarizing channel supports 1-3 qubits, got {len(qubits)}")
    for q in qubits:
        if not 0 <= q < N_QUBITS:
            raise ValueError(f"qubit out of range: {q}")
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"duplicate qubits: {qubits}")
    eye = np.eye(DIM, dtype=complex)
    if p == 0.0:
        return KrausChannel((eye,))
    k = len(qubits)
    n_paulis = 4**k - 1
    ops = [math.sqrt(1.0 - p) * eye]
    coeff = math.sqrt(p / n_paulis)
    for labels in itertools.product("IXYZ", repeat=k):
        if all(c == "I" for c in labels):
            continue
        ops.append(coeff * _lift_many([_PAULI[c] for c in labels], qubits))
    return KrausChannel(tuple(ops))


def relaxation_rates(t1: float, t2: float, duration: float) -> tuple[float, float]:
    """(gamma, lam): amplitude-damping and pure-dephasing probabilities.

    gamma = 1 - exp(-duration/t1); lam = 1 - exp(-duration*(1/t2 - 1/(2 t1))).
    Requires t2 <= 2*t1, the physical bound for a qubit at zero temperature.
    """
    if not t1 > 0.0:
        raise ValueError(f"invalid T1: {t1}")
    if not t2 > 0.0:
        raise ValueError(f"invalid T2: {t2}")
    if t2 > 2.0 * t1 * (1.0 + 1e-12):
        raise ValueError(f"unphysical T2: {t2} > 2*T1 = {2.0 * t1}")
    if duration < 0.0:
        raise ValueError(f"negative duration: {duration}")
    gamma = 1.0 - math.exp(-duration / t1)
    dephase_rate = max(1.0 / t2 - 1.0 / (2.0 * t1), 0.0)
    lam = 1.0 - math.exp(-duration * dephase_rate)
    return gamma, lam


def _relaxation_kraus_2x2(gamma: float, lam: float) -> list[np.ndarray]:
    """Kraus operators (on one qubit) of dephasing composed after damping."""
    ops = [np.array([[1.0, 0.0], [0.0, math.sqrt((1.0 - gamma) * (1.0 - lam))]], dtype=complex)]
    if gamma > 0.0:
        ops.append(np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]], dtype=complex))
    if lam > 0.0:
        ops.append(np.array([[0.0, 0.0], [0.0, math.sqrt(lam * (1.0 - gamma))]], dtype=complex))
    return ops


def damping_channel(t1: float, t2: float, duration: float, qubit: int) -> KrausChannel:
    """Thermal relaxation of one qubit over ``duration`` seconds."""
    if not 0 <= qubit < N_QUBITS:
        raise ValueError(f"qubit out of range: {qubit}")
    gamma, lam = relaxation_rates(t1, t2, duration)
    ops = tuple(_lift_single(op, qubit) for op in _relaxation_kraus_2x2(gamma, lam))
    return KrausChannel(ops)


# ---------------------------------------------------------------------------
# Fast in-place channel application used by the gate-level noise model.
# These avoid building 16x16 Kraus stacks per gate; unit tests pin them to
# the explicit KrausChannel constructions above.
# ---------------------------------------------------------------------------


def _apply_single_qubit_kraus(rho: np.ndarray, kraus2: Sequence[np.ndarray], qubit: int) -> np.ndarray:
    """Apply a single-qubit Kraus map to ``qubit`` of the 4-qubit state."""
    k = np.stack(kraus2)
    axes = [2] * (2 * N_QUBITS)
    r8 = rho.reshape(axes)
    row_ax = N_QUBITS - 1 - qubit
    col_ax = 2 * N_QUBITS - 1 - qubit
    r = np.moveaxis(r8, (row_ax, col_ax), (0, N_QUBITS))
    r = r.reshape(2, DIM // 2, 2, DIM // 2)
    out = np.einsum("mik,kalb,mjl->iajb", k, r, k.conj())
    out = out.reshape([2] * (2 * N_QUBITS))
    out = np.moveaxis(out, (0, N_QUBITS), (row_ax, col_ax))
    return np.ascontiguousarray(out.reshape(DIM, DIM))


def _apply_depolarizing(rho: np.ndarray, p: float, qubits: Sequence[int]) -> np.ndarray:
    """Depolarize ``qubits`` at probability ``p`` without explicit Kraus sums.

    The uniform Pauli mixture over a subset S equals replacing the marginal
    on S with the maximally mixed state, so the channel reduces to
    (1 - p') rho + p'' (I_S/2^k (x) Tr_S rho).
    """
    if p == 0.0:
        return rho
    k = len(qubits)
    n_paulis = 4**k - 1
    c_full = p * (4**k) / n_paulis
    c_id = 1.0 - p - p / n_paulis
    axes = [2] * (2 * N_QUBITS)
    r8 = rho.reshape(axes)
    row_axes = [N_QUBITS - 1 - q for q in qubits]
    col_axes = [2 * N_QUBITS - 1 - q for q in qubits]
    r = np.moveaxis(r8, row_axes + col_axes, list(range(k)) + list(range(N_QUBITS, N_QUBITS + k)))
    dim_s = 2**k
    dim_r = DIM // dim_s
    r = r.reshape(dim_s, dim_r, dim_s, dim_r)
    traced = np.einsum("iaib->ab", r)
    mixed = np.einsum("ij,ab->iajb", np.eye(dim_s, dtype=complex) / dim_s, traced)
    out = c_id * r + c_full * mixed
    out = out.reshape([2] * (2 * N_QUBITS))
    out = np.moveaxis(out, list(range(k)) + list(range(N_QUBITS, N_QUBITS + k)), row_axes + col_axes)
    return np.ascontiguousarray(out.reshape(DIM, DIM))


@dataclass(frozen=True)
class NoiseModel:
    """Instantaneous gate-level noise parameters for the register.

    ``t1``/``t2`` are per-qubit relaxation times in seconds; ``err_1q``,
    ``err_2q`` and ``err_3q`` are depolarizing probabilities applied after
    every gate of the matching width.
    """

    t1: tuple[float, float, float, float]
    t2: tuple[float, float, float, float]
    err_1q: float = 0.0
    err_2q: float = 0.0
    err_3q: float = 0.0

    def __post_init__(self):
        t1 = tuple(float(v) for v in self.t1)
        t2 = tuple(float(v) for v in self.t2)
        if len(t1) != N_QUBITS or len(t2) != N_QUBITS:
            raise ValueError("t1/t2 must list one value per qubit")
        object.__setattr__(self, "t1", t1)
        object.__setattr__(self, "t2", t2)
        for a, b in zip(t1, t2):
            relaxation_rates(a, b, 0.0)  # validates positivity and t2 <= 2 t1
        for name in ("err_1q", "err_2q", "err_3q"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"invalid probability: {name}={p}")

    def depolarizing_rate(self, n_qubits: int) -> float:
        return (self.err_1q, self.err_2q, self.err_3q)[n_qubits - 1]


def apply_gate_noise(rho: np.ndarray, gate: Gate, noise: NoiseModel) -> np.ndarray:
    """Post-gate noise: depolarize the gate's qubits, then relax all qubits."""
    p = noise.depolarizing_rate(len(gate.qubits))
    if p > 0.0:
        rho = _apply_depolarizing(rho, p, gate.qubits)
    if gate.duration > 0.0:
        for q in range(N_QUBITS):
            gamma, lam = relaxation_rates(noise.t1[q], noise.t2[q], gate.duration)
            if gamma > 1e-300 or lam > 1e-300:
                rho = _apply_single_qubit_kraus(rho, _relaxation_kraus_2x2(gamma, lam), q)
    return rho


def evolve(gates: Iterable[Gate], noise: NoiseModel | None = None,
           initial: np.ndarray | None = None) -> Iterator[np.ndarray]:
    """Yield the state after each gate (and its noise), in circuit order."""
    rho = initial_state() if initial is None else np.array(initial, dtype=complex)
    for gate in gates:
        rho = apply_gate(rho, gate)
        if noise is not None:
            rho = apply_gate_noise(rho, gate, noise)
        yield rho


def run_gates(gates: Iterable[Gate], noise: NoiseModel | None = None,
              initial: np.ndarray | None = None) -> np.ndarray:
    """Final state after the whole gate sequence."""
    rho = initial_state() if initial is None else np.array(initial, dtype=complex)
    for rho in evolve(gates, noise, rho):
        pass
    return rho


# ---------------------------------------------------------------------------
# Measurement of the readout pair (q3, q2).
# ---------------------------------------------------------------------------


def measure_pair(rho: np.ndarray) -> np.ndarray:
    """Born probabilities of outcomes (q3 q2) in (00, 01, 10, 11) order.

    Marginalizes the diagonal over q1 and q0; the state is untouched.
    """
    diag = np.real(np.diagonal(rho))
    probs = diag.reshape(4, 4).sum(axis=1)  # basis index >> 2 is the (q3, q2) pair
    return probs


def check_density_matrix(rho: np.ndarray, *, trace_tol: float = TRACE_TOL,
                         herm_tol: float = HERMITICITY_TOL, psd_tol: float = PSD_TOL) -> None:
    """Raise if ``rho`` is not Hermitian, PSD, and trace one."""
    if rho.shape != (DIM, DIM):
        raise ValueError(f"state has shape {rho.shape}, want {(DIM, DIM)}")
    if abs(np.trace(rho).real - 1.0) > trace_tol or abs(np.trace(rho).imag) > trace_tol:
        raise ValueError(f"trace deviates from one: {np.trace(rho)}")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("state is not Hermitian")
    eigs = np.linalg.eigvalsh(rho)
    if eigs.min() < -psd_tol:
        raise ValueError(f"state has negative eigenvalue: {eigs.min()}")


# ---------------------------------------------------------------------------
# Readout confusion and shot sampling.
# ---------------------------------------------------------------------------


def validate_confusion(m: np.ndarray) -> np.ndarray:
    """Check a 4x4 row-stochastic confusion matrix and return it as float."""
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise ValueError(f"confusion matrix has shape {m.shape}, want (4, 4)")
    if np.any(m < -1e-12) or np.any(m > 1.0 + 1e-12):
        raise ValueError("confusion matrix entries outside [0, 1]")
    if np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-9:
        raise ValueError("confusion matrix rows must sum to 1")
    return m


def identity_confusion() -> np.ndarray:
    return np.eye(4)


def confusion_from_flips(flip_hi: float, flip_lo: float) -> np.ndarray:
    """Confusion matrix from independent symmetric flips of q3 and q2."""
    for f in (flip_hi, flip_lo):
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"invalid probability: {f}")
    m_hi = np.array([[1.0 - flip_hi, flip_hi], [flip_hi, 1.0 - flip_hi]])
    m_lo = np.array([[1.0 - flip_lo, flip_lo], [flip_lo, 1.0 - flip_lo]])
    return np.kron(m_hi, m_lo)


def apply_readout(dist: np.ndarray, confusion: np.ndarray) -> np.ndarray:
    """Mix a length-4 outcome distribution through the confusion matrix.

    Row i of the matrix is the distribution of observed outcomes given true
    outcome i, so the observed distribution is dist @ confusion.
    """
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (4,):
        raise ValueError(f"distribution has shape {dist.shape}, want (4,)")
    if np.any(dist < -1e-9) or abs(dist.sum() - 1.0) > 1e-6:
        raise ValueError(f"invalid probability vector: {dist}")
    m = validate_confusion(confusion)
    return dist @ m


def sample_counts(dist: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical outcome distribution from ``shots`` multinomial draws."""
    if shots < 1:
        raise ValueError(f"empty sample: shots={shots}")
    p = np.clip(np.asarray(dist, dtype=float), 0.0, None)
    total = p.sum()
    if total <= 0.0:
        raise ValueError(f"invalid probability vector: {dist}")
    p = p / total
    counts = rng.multinomial(shots, p)
    return counts / float(shots)
