"""Command-line front end.

Subcommands:

* ``generate`` — simulate a dataset for a set of machine profiles and
  write it to a directory;
* ``run`` — execute one experiment on a stored dataset and emit report
  files;
* ``profiles`` — list the built-in machine profiles;
* ``verify`` — re-run the testbed reconstruction check and the simulator
  property suite (random gate/channel sequences must preserve density-
  matrix invariants).

Exit codes: 0 on success, 1 on bad input (unknown machine, malformed
config, corrupt dataset), 2 on unexpected internal failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import acquisition, experiments, machines
from .machines import MachineProfile, clone_profile, default_profiles

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INTERNAL = 2


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    raw = Path(path).read_text()
    cfg = yaml.safe_load(raw)
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ValueError(f"config must be a mapping, got {type(cfg).__name__}")
    return cfg


def _resolve_profiles(names: list[str] | None) -> list[MachineProfile]:
    """Map machine arguments to profiles; ``base:alias`` clones a profile.

    Cloning registers the same physical parameters under a fresh id, which
    is how a null pair (two labels, one device) is constructed.
    """
    stock = default_profiles()
    if not names:
        return list(stock.values())
    out = []
    for name in names:
        base, _, alias = name.partition(":")
        if base not in stock:
            raise ValueError(f"unknown machine: {base!r} (see `noisefp profiles`)")
        profile = stock[base]
        out.append(clone_profile(profile, alias) if alias else profile)
    ids = [p.machine_id for p in out]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate machine ids after aliasing: {ids}")
    return out


def _cmd_generate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    profiles = _resolve_profiles(args.machines or cfg.get("machines"))
    protocol = args.protocol or cfg.get("protocol", "fast")
    n_runs = args.runs if args.runs is not None else int(cfg.get("runs", 40))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    shots = args.shots if args.shots is not None else int(cfg.get("shots", acquisition.DEFAULT_SHOTS))
    epochs = cfg.get("epochs", [0.0])
    if args.epochs:
        epochs = [float(x) for x in args.epochs.split(",")]
    sched_cfg = cfg.get("schedule", {})
    schedule = acquisition.ScheduleConfig(
        fast_wall_time=tuple(sched_cfg.get("fast_wall_time", (30.0, 90.0))),
        slow_wall_time=tuple(sched_cfg.get("slow_wall_time", (60.0, 180.0))),
        slow_min_gap=float(sched_cfg.get("slow_min_gap", acquisition.SLOW_MIN_GAP)),
        anomalies=tuple(tuple(a) for a in sched_cfg.get("anomalies", ())),
    )
    ds = acquisition.generate_dataset(
        profiles, protocol, n_runs, seed,
        shots=shots, epochs=tuple(float(e) for e in epochs), schedule=schedule,
    )
    acquisition.save_dataset(ds, args.out)
    n_runs_total = sum(len(ds.runs_for(m)) for m in ds.machine_ids())
    print(f"wrote {n_runs_total} runs for {len(ds.machine_ids())} machines to {args.out}")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    cfg_dict = _load_config(args.config)
    kwargs = {}
    for key in ("seed", "steps", "c_grid", "kernels", "tol", "max_iter", "standardize",
                "multiclass_columns", "window_runs", "n_windows", "gaps_hours"):
        if key in cfg_dict:
            value = cfg_dict[key]
            kwargs[key] = tuple(value) if isinstance(value, list) else value
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.steps:
        kwargs["steps"] = tuple(int(k) for k in args.steps.split(","))
    machines_arg = args.machines or cfg_dict.get("machines")
    cfg = experiments.ExperimentConfig(
        experiment=args.experiment,
        dataset=args.dataset,
        out_dir=args.out,
        machines=tuple(machines_arg) if machines_arg else None,
        **kwargs,
    )
    table = experiments.run_experiment(cfg)
    paths = experiments.emit_report(table, cfg.out_dir)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_profiles(args: argparse.Namespace) -> int:
    stock = default_profiles()
    if args.json:
        print(json.dumps({mid: p.to_dict() for mid, p in stock.items()}, indent=2, sort_keys=True))
        return EXIT_OK
    header = f"{'machine':<12} {'err_2q':>7} {'T1 (us)':>8} {'readout':>8} {'toffoli':>16} drift"
    print(header)
    print("-" * len(header))
    for mid, p in stock.items():
        t1_mean = np.mean(p.base_t1) * 1e6
        ro = 1.0 - float(np.mean(np.diag(p.readout)))
        drift = (f"A={p.drift.relative_amplitude:g} P={p.drift.period / 3600.0:g}h"
                 if p.drift.relative_amplitude or p.drift.calibration_jump_std else "none")
        print(f"{mid:<12} {p.err_2q:>7.3f} {t1_mean:>8.1f} {ro:>8.3f} {p.toffoli_style:>16} {drift}")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    from . import simulator, testbed

    failures = 0

    # Reconstruction check: the repetition block and every step-truncated
    # circuit must reproduce the frozen noiseless distributions exactly.
    rho = simulator.run_gates(testbed.repetition_block().gates)
    block_dist = simulator.measure_pair(rho)
    probs = np.real(np.diag(rho))
    expected_support = {0b0110: 0.25, 0b0111: 0.25, 0b1001: 0.25, 0b1100: 0.25}
    support_ok = all(
        abs(probs[b] - expected_support.get(b, 0.0)) < 1e-12 for b in range(16)
    )
    block_ok = support_ok and np.allclose(
        block_dist, testbed.REFERENCE_STEP_DISTRIBUTIONS[2], atol=1e-12, rtol=0.0)
    print(f"repetition block reconstruction: {'ok' if block_ok else 'FAIL'}")
    failures += 0 if block_ok else 1
    for k in range(1, testbed.N_STEPS + 1):
        got = testbed.ideal_distribution(k)
        want = testbed.REFERENCE_STEP_DISTRIBUTIONS[k - 1]
        ok = np.allclose(got, want, atol=1e-12, rtol=0.0)
        print(f"step {k} distribution: {'ok' if ok else 'FAIL'} "
              f"({', '.join(f'{v:.6f}' for v in got)})")
        failures += 0 if ok else 1

    # Property suite: random gate/channel sequences must keep the state a
    # valid density matrix (trace 1, Hermitian, PSD).
    rng = np.random.default_rng(args.seed)
    kinds = list(simulator.GATE_ARITY)
    worst_trace = 0.0
    worst_herm = 0.0
    prop_ok = True
    for _ in range(args.trials):
        rho = simulator.initial_state()
        for _ in range(rng.integers(1, 8)):
            kind = kinds[rng.integers(len(kinds))]
            arity = simulator.GATE_ARITY[kind]
            qubits = tuple(rng.choice(4, size=arity, replace=False).tolist())
            rho = simulator.apply_gate(rho, simulator.Gate(kind, qubits))
            if rng.random() < 0.5:
                p = float(rng.uniform(0.0, 0.2))
                rho = apply_channel_any(rho, p, qubits, rng)
        worst_trace = max(worst_trace, abs(np.trace(rho).real - 1.0))
        worst_herm = max(worst_herm, float(np.max(np.abs(rho - rho.conj().T))))
        try:
            simulator.check_density_matrix(rho)
        except ValueError:
            prop_ok = False
    print(f"random-sequence property suite ({args.trials} trials): "
          f"{'ok' if prop_ok else 'FAIL'} "
          f"(max trace error {worst_trace:.2e}, max Hermiticity error {worst_herm:.2e})")
    failures += 0 if prop_ok else 1
    if failures:
        print(f"{failures} check(s) failed", file=sys.stderr)
    return EXIT_OK if failures == 0 else EXIT_USAGE


def apply_channel_any(rho: np.ndarray, p: float, qubits: tuple[int, ...],
                      rng: np.random.Generator):
    """Apply a randomly chosen noise channel for the verify property suite."""
    from . import simulator

    if rng.random() < 0.5:
        return simulator.apply_channel(rho, simulator.depolarizing_channel(p, qubits))
    t1 = float(rng.uniform(20e-6, 200e-6))
    t2 = float(rng.uniform(0.5, 2.0)) * t1
    return simulator.apply_channel(
        rho, simulator.damping_channel(t1, t2, 300e-9, int(qubits[0])))


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the contract reserves 2 for bugs."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="noisefp",
        description="Simulated noisy-device fingerprinting lab.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="simulate and store a dataset")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--machines", nargs="*", default=None,
                     help="profile names; use base:alias to clone a profile under a new id")
    gen.add_argument("--protocol", choices=acquisition.PROTOCOLS, default=None)
    gen.add_argument("--runs", type=int, default=None, help="runs per machine per epoch")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--shots", type=int, default=None)
    gen.add_argument("--epochs", default=None,
                     help="comma-separated epoch start times in seconds, e.g. 0,86400")
    gen.add_argument("--config", default=None, help="YAML file with generate settings")
    gen.set_defaults(func=_cmd_generate)

    run = sub.add_parser("run", help="run an experiment on a stored dataset")
    run.add_argument("experiment", choices=experiments.EXPERIMENTS)
    run.add_argument("--dataset", required=True, help="dataset directory")
    run.add_argument("--out", default="reports", help="report output directory")
    run.add_argument("--machines", nargs="*", default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--steps", default=None, help="comma-separated steps, e.g. 1,3,9")
    run.add_argument("--config", default=None, help="YAML file with experiment settings")
    run.set_defaults(func=_cmd_run)

    prof = sub.add_parser("profiles", help="list built-in machine profiles")
    prof.add_argument("--json", action="store_true", help="dump full parameter sets as JSON")
    prof.set_defaults(func=_cmd_profiles)

    ver = sub.add_parser(
        "verify",
        help="re-check the testbed reconstruction and simulator invariants")
    ver.add_argument("--trials", type=int, default=200,
                     help="random gate/channel sequences to property-check")
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=_cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
