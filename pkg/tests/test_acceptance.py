"""End-to-end acceptance gate.

Nine checks, one per shipped guarantee, each printing a single PASS line
(visible with ``pytest -s`` or in the captured output).  Budgets are wall
clock on a laptop-class machine; every check asserts its own budget.

Expensive datasets are generated once at module scope and shared between
checks that use the same corpus.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

import oracles
from noisefp import simulator as sim
from noisefp import svm, testbed
from noisefp.acquisition import generate_dataset, load_dataset, save_dataset
from noisefp.experiments import (ExperimentConfig, emit_report, exp_gap_sweep,
                                 exp_multiclass, exp_pairwise, exp_robustness,
                                 exp_temporal24h, exp_window_temporal,
                                 run_experiment)
from noisefp.features import LabeledSet
from noisefp.machines import (FAST_MACHINES, SLOW_MACHINES, DriftSpec,
                              clone_profile, default_profiles)
from noisefp.simulator import Gate


def _passline(name: str, detail: str, t0: float, budget_s: float) -> None:
    elapsed = time.time() - t0
    print(f"{name}: PASS ({detail}; {elapsed:.1f}s / {budget_s:.0f}s budget)")
    assert elapsed < budget_s, f"{name} exceeded its {budget_s:.0f}s budget: {elapsed:.1f}s"


@pytest.fixture(scope="module")
def profiles():
    return default_profiles()


@pytest.fixture(scope="module")
def corpus_dataset(profiles):
    """Slow-style corpus: the 7 fast-protocol machines plus a clone null."""
    family = [profiles[m] for m in FAST_MACHINES]
    family.append(clone_profile(profiles["athens"], "athens-b"))
    return generate_dataset(family, "slow", 400, seed=42)


def test_circuit_reconstruction():
    t0 = time.time()
    rho = None
    for rho in sim.evolve(testbed.repetition_block().gates):
        pass
    probs = np.real(np.diag(rho))
    support = (0b0110, 0b0111, 0b1001, 0b1100)
    for b in range(16):
        if b in support:
            assert abs(probs[b] - 0.25) <= 1e-12, f"state {b:04b}: {probs[b]!r}"
        else:
            # Only permutation gates touch the zero amplitudes, so the
            # off-support mass is exactly zero, not merely small.
            assert probs[b] == 0.0, f"state {b:04b} leaked {probs[b]!r}"
    pair = sim.measure_pair(rho)
    assert np.abs(pair - np.array([0.0, 0.5, 0.25, 0.25])).max() <= 1e-12
    _passline("circuit reconstruction",
              "support {0110,0111,1001,1100} at 0.25, pair (0,.5,.25,.25)", t0, 1.0)


def _random_gate(rng: np.random.Generator) -> Gate:
    kind = rng.choice(["H", "X", "T", "TDG", "CNOT", "TOFFOLI"])
    qubits = tuple(int(q) for q in rng.permutation(4)[: {"CNOT": 2, "TOFFOLI": 3}.get(kind, 1)])
    return Gate(kind, qubits)


def test_simulator_oracle():
    t0 = time.time()
    want = oracles.oracle_step_distributions()
    for k in range(1, 10):
        got = testbed.ideal_distribution(k)
        assert np.abs(got - want[k - 1]).max() <= 1e-12, f"step {k}"

    rng = np.random.default_rng(2024)
    for trial in range(1000):
        rho = sim.initial_state()
        for _ in range(int(rng.integers(1, 6))):
            gate = _random_gate(rng)
            rho = sim.apply_gate(rho, gate)
            if rng.random() < 0.5:
                p = float(rng.uniform(0.0, 0.3))
                rho = sim.apply_channel(rho, sim.depolarizing_channel(p, gate.qubits))
            else:
                t1 = float(rng.uniform(20e-6, 200e-6))
                rho = sim.apply_channel(
                    rho, sim.damping_channel(t1, 1.5 * t1, 300e-9, int(gate.qubits[0])))
        assert abs(np.trace(rho).real - 1.0) < 1e-10, f"trial {trial}: trace"
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-12, f"trial {trial}: hermiticity"
    _passline("simulator oracle",
              "9 ideal distributions at 1e-12, 1000 random sequences CPTP", t0, 30.0)


def test_svm_oracle():
    t0 = time.time()
    rng = np.random.default_rng(0)
    kernels = [svm.KernelSpec("linear"), svm.KernelSpec("rbf", gamma=0.7),
               svm.KernelSpec("poly2", gamma=1.0, coef0=1.0)]
    worst_gap = 0.0
    worst_kkt = 0.0
    for trial in range(50):
        n = 3 + trial % 6  # 3..8 points
        x = rng.normal(size=(n, 2))
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        y[0], y[1] = -1.0, 1.0  # both classes present
        c = (0.5, 1.0, 2.0)[trial % 3]
        spec = kernels[trial % 3]
        data = LabeledSet(x, y)
        model = svm.train_binary(data, c, spec, tol=1e-3, max_iter=100_000)
        kmat = svm.gram(spec, x, x)
        grid = oracles.grid_max_dual(kmat, y, c)
        exact = oracles.active_set_max_dual(kmat, y, c)
        worst_gap = max(worst_gap, abs(model.dual_objective - grid),
                        abs(model.dual_objective - exact))
        assert model.dual_objective == pytest.approx(grid, abs=1e-3), f"trial {trial} (grid)"
        assert model.dual_objective == pytest.approx(exact, abs=1e-3), f"trial {trial} (enum)"
        kkt = svm.kkt_violations(model, data).max()
        worst_kkt = max(worst_kkt, kkt)
        assert kkt <= 1e-3 + 1e-9, f"trial {trial}: KKT violation {kkt}"

    xor = LabeledSet(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]),
                     np.array([-1.0, 1.0, 1.0, -1.0]))
    poly = svm.train_binary(xor, 10.0, svm.KernelSpec("poly2", gamma=1.0))
    assert svm.accuracy(svm.predict(poly, xor.x), xor.y) == 1.0
    lin = svm.train_binary(xor, 10.0, svm.KernelSpec("linear"))
    assert svm.accuracy(svm.predict(lin, xor.x), xor.y) <= 0.75
    _passline("svm oracle",
              f"50 duals within 1e-3 of two oracles (worst {worst_gap:.1e}), "
              f"KKT <= 1e-3 (worst {worst_kkt:.1e}), XOR split poly2/linear", t0, 60.0)


def test_accuracy_conformance():
    t0 = time.time()
    got = np.array([1.0, -1.0, 1.0, 1.0])
    want = np.array([1.0, -1.0, -1.0, 1.0])
    assert svm.accuracy(got, want) == 0.75  # the 3-of-4 hand case, exact
    assert svm.accuracy(want, want) == 1.0
    assert svm.accuracy(-want, want) == 0.0
    rng = np.random.default_rng(5)
    for _ in range(25):
        n = int(rng.integers(1, 40))
        a = rng.integers(0, 3, size=n).astype(float)
        b = rng.integers(0, 3, size=n).astype(float)
        assert svm.accuracy(a, b) == float(np.mean(a == b))
    _passline("accuracy conformance", "0.75 hand case and 25 random draws, exact", t0, 5.0)


def test_pairwise_separation(corpus_dataset):
    t0 = time.time()
    cfg = ExperimentConfig(experiment="pairwise", dataset="<in-memory>",
                           seed=0, steps=(3,))
    table = exp_pairwise(cfg, corpus_dataset)
    null_label = "athens vs athens-b k=3"
    worst_label, worst = None, 1.0
    for label, row in zip(table.row_labels, table.cells):
        acc = row[table.col_labels.index("prefix")]
        if label == null_label:
            assert 0.4 <= acc <= 0.6, f"null pair out of band: {acc}"
            continue
        if worst_label is None or acc < worst:
            worst_label, worst = label, acc
        assert acc >= 0.99, f"{label}: prefix accuracy {acc}"
    null_acc = table.cell(null_label, "prefix")
    _passline("pairwise separation",
              f"27 pairs >= 0.99 (worst {worst_label} = {worst:.4f}), "
              f"null = {null_acc:.4f}", t0, 900.0)


def test_prefix_monotonicity(corpus_dataset):
    t0 = time.time()
    cfg = ExperimentConfig(experiment="multiclass", dataset="<in-memory>",
                           seed=0, machines=tuple(FAST_MACHINES),
                           multiclass_columns=("prefix",))
    table = exp_multiclass(cfg, corpus_dataset)
    col = table.col_labels.index("prefix")
    values = [float(table.cells[i, col]) for i in range(9)]
    worst_dip = max(values[i] - values[i + 1] for i in range(8))
    assert worst_dip <= 0.005, f"prefix column dipped {worst_dip:.4f}: {values}"
    _passline("prefix monotonicity",
              f"k=1..9 column {['%.3f' % v for v in values]}, worst dip {worst_dip:.4f}",
              t0, 900.0)


def test_temporal_drift(profiles):
    t0 = time.time()
    belem = profiles["belem"]

    # (a) same machine, acquisition days straddling the drift trough->peak.
    day_pair = (194400.0, 280800.0)  # t = 54 h and 78 h
    ds_split = generate_dataset([belem], "fast", 50, seed=7, epochs=day_pair)
    cfg_split = ExperimentConfig(experiment="temporal24h", dataset="<in-memory>",
                                 seed=0, steps=(3,))
    acc_drift = exp_temporal24h(cfg_split, ds_split).cell("k=3", "prefix")
    assert acc_drift >= 0.95, f"24h split accuracy {acc_drift}"
    static = replace(belem, machine_id="belem-static", drift=DriftSpec.none())
    ds_null = generate_dataset([static], "fast", 50, seed=7, epochs=day_pair)
    acc_null = exp_temporal24h(cfg_split, ds_null).cell("k=3", "prefix")
    assert 0.4 <= acc_null <= 0.6, f"zero-drift control {acc_null}"

    # (b) first window of a long slow acquisition against every later one.
    ds_windows = generate_dataset([belem], "slow", 2000, seed=21)
    cfg_win = ExperimentConfig(experiment="window-temporal", dataset="<in-memory>",
                               seed=0, steps=(9,))
    table_win = exp_window_temporal(cfg_win, ds_windows)
    row = [table_win.cell("prefix k=9", c) for c in table_win.col_labels]
    near, far = row[0], row[3:]
    assert near < max(far), f"W1-vs-W2 {near} not below far windows {far}"
    assert any(v >= 1.0 for v in far), f"no far window reached 1.0: {far}"

    # (c) gap sweep from a trough-anchored acquisition start.
    ds_gaps = generate_dataset([belem], "slow", 800, seed=23, epochs=(178200.0,))
    cfg_gap = ExperimentConfig(experiment="gap-sweep", dataset="<in-memory>", seed=0)
    table_gap = exp_gap_sweep(cfg_gap, ds_gaps)
    hits = [label for label, value in zip(table_gap.row_labels, table_gap.cells[:, 0])
            if value >= 1.0 and float(label.split("=")[1].rstrip("h")) <= 12.0]
    assert hits, "no gap <= 12h reached accuracy 1.0"
    _passline("temporal drift",
              f"24h split {acc_drift:.4f} (null {acc_null:.4f}); "
              f"W1-vs-W2 {near:.3f} < far max {max(far):.3f} with 1.0 attained; "
              f"gap sweep 1.0 at {hits[0]}", t0, 1200.0)


def test_window_robustness(profiles):
    t0 = time.time()
    family = [profiles[m] for m in SLOW_MACHINES]
    ds = generate_dataset(family, "slow", 2000, seed=13)
    cfg = ExperimentConfig(experiment="robustness", dataset="<in-memory>", seed=0)
    table = exp_robustness(cfg, ds)
    cells = table.cells
    diag = np.diag(cells)
    assert np.all(diag >= 1.0), f"diagonal below 1.0: {diag}"
    r = cells[0]
    assert r[0] >= r[1] >= r[2], f"row 1 near-diagonal not decaying: {r[:3]}"
    far = [cells[i, j] for i in range(10) for j in range(10) if abs(i - j) >= 3]
    assert max(far) >= 0.99, f"no far off-diagonal cell >= 0.99 (max {max(far)})"
    _passline("window robustness",
              f"diagonal all 1.0, row-1 head {['%.3f' % v for v in r[:3]]}, "
              f"best far cell {max(far):.4f}", t0, 900.0)


def test_reproducibility(profiles, tmp_path):
    t0 = time.time()
    family = [profiles[m] for m in ("athens", "rome", "yorktown")]

    # Dataset save -> load -> save round-trips exactly.
    ds = generate_dataset(family, "fast", 6, seed=11)
    dir_a = tmp_path / "ds_a"
    dir_b = tmp_path / "ds_b"
    save_dataset(ds, dir_a)
    loaded = load_dataset(dir_a)
    assert loaded.protocol == ds.protocol and len(loaded.runs) == len(ds.runs)
    for run_a, run_b in zip(ds.runs, loaded.runs):
        assert run_a.machine_id == run_b.machine_id
        assert run_a.timestamp == run_b.timestamp
        assert np.array_equal(run_a.distributions, run_b.distributions)
    save_dataset(loaded, dir_b)
    for name in ("manifest.json", "runs.csv"):
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes(), name

    # Same seeds -> byte-identical report files.
    outputs = []
    for attempt in ("first", "second"):
        cfg = ExperimentConfig(experiment="pairwise", dataset="<in-memory>",
                               seed=3, steps=(1, 2, 3))
        table = run_experiment(cfg, generate_dataset(family, "fast", 6, seed=11))
        out_dir = tmp_path / attempt
        outputs.append(sorted(emit_report(table, out_dir)))
    blobs_first = [p.read_bytes() for p in outputs[0]]
    blobs_second = [p.read_bytes() for p in outputs[1]]
    assert [p.name for p in outputs[0]] == [p.name for p in outputs[1]]
    assert blobs_first == blobs_second, "reports differ between identical runs"
    _passline("reproducibility",
              f"dataset round-trip exact, {len(outputs[0])} report files byte-identical",
              t0, 120.0)
