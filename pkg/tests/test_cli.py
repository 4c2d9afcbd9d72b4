import csv
import json
import math
import os

import pytest

from popbandit import cli


SPACE = {
    "continuous": [{"name": "x", "lower": 0.0, "upper": math.pi / 2.0}],
    "categorical": [{"name": "h", "choices": ["sin", "cos"]}],
}

FAST_ACQ = {"n_candidates": 50, "n_refine_steps": 3}


def write_config(tmp_path, **overrides):
    cfg = {
        "space": SPACE,
        "objective": "sincos",
        "strategy": "random",
        "seeds": [0, 1],
        "B": 2,
        "T_rounds": 3,
        "acquisition": FAST_ACQ,
        "output": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv("POPBANDIT_THREADS", "1")


class TestRunCommand:
    def test_writes_per_seed_and_summary(self, tmp_path):
        cfg = write_config(tmp_path)
        assert cli.main(["run", cfg]) == cli.EXIT_OK
        out = tmp_path / "out"
        assert (out / "run_random_seed0.csv").exists()
        assert (out / "run_random_seed1.csv").exists()
        rows = read_csv(out / "run_random_seed0.csv")
        assert rows[0] == ["round", "agent", "strategy", "seed", "h", "x_0",
                           "f", "regret", "cum_regret"]
        assert len(rows) == 1 + 3 * 2  # header + T_rounds * B
        summary = read_csv(out / "summary_random.csv")
        assert summary[0] == ["round", "cum_regret_mean", "cum_regret_sem"]
        assert len(summary) == 4

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path, strategy="pb2-mult", T_rounds=2)
        out = tmp_path / "out" / "run_pb2-mult_seed0.csv"
        assert cli.main(["run", cfg]) == cli.EXIT_OK
        first = out.read_bytes()
        assert cli.main(["run", cfg]) == cli.EXIT_OK
        assert out.read_bytes() == first

    def test_seed_override(self, tmp_path):
        cfg = write_config(tmp_path)
        assert cli.main(["run", cfg, "--seed", "7"]) == cli.EXIT_OK
        out = tmp_path / "out"
        assert (out / "run_random_seed7.csv").exists()
        assert not (out / "run_random_seed0.csv").exists()

    def test_missing_field_is_config_error(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"space": SPACE, "objective": "sincos"}))
        assert cli.main(["run", str(path)]) == cli.EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_unknown_strategy_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path, strategy="nonsense")
        assert cli.main(["run", cfg]) == cli.EXIT_CONFIG

    def test_invalid_json_is_config_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert cli.main(["run", str(path)]) == cli.EXIT_CONFIG

    def test_missing_file_is_config_error(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG

    def test_runtime_error_exit_code(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path)

        def boom(*_a, **_k):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(cli, "_run_seeds", boom)
        assert cli.main(["run", cfg]) == cli.EXIT_RUNTIME

    def test_failed_run_leaves_no_partial_csv(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path)

        def boom(*_a, **_k):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(cli, "_run_seeds", boom)
        cli.main(["run", cfg])
        out = tmp_path / "out"
        assert not out.exists() or not any(out.iterdir())


class TestCompareCommand:
    def test_wide_csv_and_ordering_output(self, tmp_path, capsys):
        cfg = write_config(tmp_path, strategies=["random", "pbt"], T_rounds=4)
        assert cli.main(["compare", cfg]) == cli.EXIT_OK
        rows = read_csv(tmp_path / "out" / "compare.csv")
        assert rows[0] == ["round", "random", "pbt"]
        assert len(rows) == 5
        stdout = capsys.readouterr().out
        assert "best first" in stdout

    def test_empty_strategies_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path, strategies=[])
        assert cli.main(["compare", cfg]) == cli.EXIT_CONFIG


class TestGradcheck:
    def test_passes_and_exit_zero(self, capsys):
        assert cli.cmd_gradcheck(seed=0, n_instances=5) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "gradcheck: pass" in out

    def test_detects_broken_gradient(self, monkeypatch, capsys):
        real = cli.gp.grad_log_marginal

        def flipped(model):
            return -real(model)

        monkeypatch.setattr(cli.gp, "grad_log_marginal", flipped)
        assert cli.cmd_gradcheck(seed=0, n_instances=3) == cli.EXIT_FAIL
        assert "FAIL" in capsys.readouterr().out


class TestBanditSim:
    def test_runs_and_reports(self, tmp_path, capsys):
        out = str(tmp_path / "sim.csv")
        rc = cli.main(["bandit-sim", "--C", "2", "--B", "1", "--T", "80",
                       "--seeds", "0", "1", "2", "--out", out])
        assert rc == cli.EXIT_OK
        stdout = capsys.readouterr().out
        assert "sublinear-proxy" in stdout
        rows = read_csv(out)
        assert rows[0] == ["round", "per_round_regret", "cum_regret",
                           "inclusion_0", "inclusion_1"]
        assert len(rows) == 81

    def test_bad_flags_are_config_error(self):
        assert cli.main(["bandit-sim", "--C", "1"]) == cli.EXIT_CONFIG
        assert cli.main(["bandit-sim", "--B", "5", "--C", "2"]) == cli.EXIT_CONFIG

    def test_tracking_frequency_reported_with_swap(self, capsys):
        rc = cli.main(["bandit-sim", "--T", "60", "--V", "1",
                       "--seeds", "0", "1"])
        assert rc == cli.EXIT_OK
        assert "tracking-frequency" in capsys.readouterr().out
