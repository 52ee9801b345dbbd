import json
import subprocess
import sys

import pytest
import yaml

from noisefp import acquisition, cli


def run_cli(args, capsys):
    """Invoke the CLI in-process; normalize SystemExit to a return code."""
    try:
        code = cli.main(args)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds") / "fast3"
    code = cli.main([
        "generate", "--out", str(out),
        "--machines", "athens", "rome", "yorktown",
        "--protocol", "fast", "--runs", "6", "--seed", "11",
    ])
    assert code == cli.EXIT_OK
    return out


class TestGenerate:
    def test_writes_dataset(self, tmp_path, capsys):
        out = tmp_path / "ds"
        code, stdout, _ = run_cli([
            "generate", "--out", str(out), "--machines", "athens", "rome",
            "--protocol", "fast", "--runs", "4", "--seed", "5",
        ], capsys)
        assert code == cli.EXIT_OK
        assert "wrote 8 runs for 2 machines" in stdout
        ds = acquisition.load_dataset(str(out))
        assert ds.machine_ids() == ["athens", "rome"]

    def test_alias_clones_profile(self, tmp_path, capsys):
        out = tmp_path / "ds"
        code, stdout, _ = run_cli([
            "generate", "--out", str(out), "--machines", "athens", "athens:twin",
            "--protocol", "fast", "--runs", "4", "--seed", "5",
        ], capsys)
        assert code == cli.EXIT_OK
        ds = acquisition.load_dataset(str(out))
        assert ds.machine_ids() == ["athens", "twin"]

    def test_unknown_machine_exits_1(self, tmp_path, capsys):
        code, _, err = run_cli([
            "generate", "--out", str(tmp_path / "ds"), "--machines", "atlantis",
        ], capsys)
        assert code == cli.EXIT_USAGE
        assert "unknown machine" in err
        assert "noisefp profiles" in err

    def test_duplicate_ids_exit_1(self, tmp_path, capsys):
        code, _, err = run_cli([
            "generate", "--out", str(tmp_path / "ds"),
            "--machines", "athens", "athens",
        ], capsys)
        assert code == cli.EXIT_USAGE
        assert "duplicate machine ids" in err

    def test_epochs_flag(self, tmp_path, capsys):
        out = tmp_path / "ds"
        code, _, _ = run_cli([
            "generate", "--out", str(out), "--machines", "athens",
            "--protocol", "fast", "--runs", "3", "--seed", "5",
            "--epochs", "0,86400",
        ], capsys)
        assert code == cli.EXIT_OK
        ds = acquisition.load_dataset(str(out))
        assert len(ds.runs_for("athens")) == 6  # runs per machine per epoch

    def test_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "gen.yaml"
        cfg.write_text(yaml.safe_dump({
            "machines": ["bogota", "lima"],
            "protocol": "fast",
            "runs": 3,
            "seed": 9,
        }))
        out = tmp_path / "ds"
        code, stdout, _ = run_cli([
            "generate", "--out", str(out), "--config", str(cfg),
        ], capsys)
        assert code == cli.EXIT_OK
        ds = acquisition.load_dataset(str(out))
        assert ds.machine_ids() == ["bogota", "lima"]

    def test_flags_override_config(self, tmp_path, capsys):
        cfg = tmp_path / "gen.yaml"
        cfg.write_text(yaml.safe_dump({"machines": ["bogota"], "runs": 3}))
        out = tmp_path / "ds"
        code, _, _ = run_cli([
            "generate", "--out", str(out), "--config", str(cfg),
            "--machines", "athens", "--runs", "2", "--seed", "1",
        ], capsys)
        assert code == cli.EXIT_OK
        ds = acquisition.load_dataset(str(out))
        assert ds.machine_ids() == ["athens"]
        assert len(ds.runs_for("athens")) == 2

    def test_bad_yaml_mapping_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "gen.yaml"
        cfg.write_text("- just\n- a\n- list\n")
        code, _, err = run_cli([
            "generate", "--out", str(tmp_path / "ds"), "--config", str(cfg),
        ], capsys)
        assert code == cli.EXIT_USAGE
        assert "config must be a mapping" in err


class TestRun:
    def test_pairwise_pipeline(self, small_dataset, tmp_path, capsys):
        out = tmp_path / "reports"
        code, stdout, _ = run_cli([
            "run", "pairwise", "--dataset", str(small_dataset),
            "--out", str(out), "--steps", "3", "--seed", "2",
        ], capsys)
        assert code == cli.EXIT_OK
        written = [line.split("wrote ", 1)[1] for line in stdout.splitlines()
                   if line.startswith("wrote ")]
        assert len(written) == 3
        suffixes = {p.rsplit(".", 1)[-1] for p in written}
        assert suffixes == {"csv", "md", "json"}
        csv_path = next(p for p in written if p.endswith(".csv"))
        header = open(csv_path).readline().strip()
        assert header == ",single,prefix"

    def test_machines_subset(self, small_dataset, tmp_path, capsys):
        out = tmp_path / "reports"
        code, stdout, _ = run_cli([
            "run", "pairwise", "--dataset", str(small_dataset),
            "--out", str(out), "--steps", "3",
            "--machines", "athens", "rome",
        ], capsys)
        assert code == cli.EXIT_OK
        meta_path = next(line.split("wrote ", 1)[1] for line in stdout.splitlines()
                         if line.endswith("meta.json"))
        meta = json.loads(open(meta_path).read())
        assert meta["machines"] == ["athens", "rome"]

    def test_config_file_settings(self, small_dataset, tmp_path, capsys):
        cfg = tmp_path / "run.yaml"
        cfg.write_text(yaml.safe_dump({
            "steps": [3],
            "kernels": ["linear", "rbf"],
            "c_grid": [1.0, 10.0],
            "seed": 7,
        }))
        out = tmp_path / "reports"
        code, stdout, _ = run_cli([
            "run", "pairwise", "--dataset", str(small_dataset),
            "--out", str(out), "--config", str(cfg),
        ], capsys)
        assert code == cli.EXIT_OK
        meta_path = next(line.split("wrote ", 1)[1] for line in stdout.splitlines()
                         if line.endswith("meta.json"))
        meta = json.loads(open(meta_path).read())
        assert meta["config"]["kernels"] == ["linear", "rbf"]
        assert meta["config"]["c_grid"] == [1.0, 10.0]
        assert meta["config"]["seed"] == 7
        kernels_used = {cell["kernel"] for cell in meta["cells"].values()}
        assert kernels_used <= {"linear", "rbf"}

    def test_missing_dataset_exits_1(self, tmp_path, capsys):
        code, _, err = run_cli([
            "run", "pairwise", "--dataset", str(tmp_path / "nope"),
        ], capsys)
        assert code == cli.EXIT_USAGE
        assert "error:" in err

    def test_unknown_experiment_is_usage_error(self, small_dataset, capsys):
        code, _, err = run_cli([
            "run", "teleport", "--dataset", str(small_dataset),
        ], capsys)
        assert code == cli.EXIT_USAGE
        assert "invalid choice" in err

    def test_missing_machine_exits_1(self, small_dataset, tmp_path, capsys):
        code, _, err = run_cli([
            "run", "pairwise", "--dataset", str(small_dataset),
            "--out", str(tmp_path / "r"), "--machines", "athens", "casablanca",
        ], capsys)
        assert code == cli.EXIT_USAGE
        assert "missing machine" in err


class TestProfiles:
    def test_table(self, capsys):
        code, out, _ = run_cli(["profiles"], capsys)
        assert code == cli.EXIT_OK
        lines = out.strip().splitlines()
        assert lines[0].startswith("machine")
        assert len(lines) == 2 + 9  # header, rule, nine profiles
        assert any(line.startswith("athens") for line in lines)

    def test_json(self, capsys):
        code, out, _ = run_cli(["profiles", "--json"], capsys)
        assert code == cli.EXIT_OK
        data = json.loads(out)
        assert len(data) == 9
        assert {"err_1q", "err_2q", "base_t1", "readout"} <= set(data["athens"])


class TestVerify:
    def test_passes(self, capsys):
        code, out, _ = run_cli(["verify", "--trials", "10"], capsys)
        assert code == cli.EXIT_OK
        assert "repetition block reconstruction: ok" in out
        for k in range(1, 10):
            assert f"step {k} distribution: ok" in out
        assert "property suite (10 trials): ok" in out
        assert "FAIL" not in out


class TestUsage:
    def test_no_subcommand_exits_1(self, capsys):
        code, _, err = run_cli([], capsys)
        assert code == cli.EXIT_USAGE

    def test_generate_requires_out(self, capsys):
        code, _, err = run_cli(["generate"], capsys)
        assert code == cli.EXIT_USAGE
        assert "--out" in err

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "noisefp.cli", "profiles"],
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0
        assert "athens" in proc.stdout
