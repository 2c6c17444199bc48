import json

import pandas as pd
import pytest

from app.cli import EXIT_DIVERGED, EXIT_INPUT, EXIT_OK, main
from src.utils.datasets import SynthSpec, generate, write_csv
from src.utils.serialization import read_json, read_matrix_binary, read_params_binary

KERNEL_ARGS = ["kernel", "--act", "relu,tanh,swish", "--skips", "10", "--n", "8", "--d", "4"]


def run(out, *argv) -> int:
    return main(["--output-dir", str(out), *argv])


class TestKernelCommand:

    def test_writes_outputs(self, tmp_path):
        assert run(tmp_path, *KERNEL_ARGS) == EXIT_OK
        K, depth = read_matrix_binary(str(tmp_path / "kernel.bin"))
        assert K.shape == (8, 8) and depth == 4

        summary = read_json(str(tmp_path / "kernel.json"))
        assert summary["n"] == 8 and summary["d"] == 4
        assert 0.0 < summary["lambda_min"] <= summary["trace_over_d"] <= summary["frobenius"]

        manifest = read_json(str(tmp_path / "manifest.json"))
        assert manifest["subcommand"] == "kernel"
        assert manifest["arguments"]["act"] == "relu,tanh,swish"

    def test_rerun_is_byte_identical(self, tmp_path):
        assert run(tmp_path / "a", *KERNEL_ARGS) == EXIT_OK
        assert run(tmp_path / "b", *KERNEL_ARGS) == EXIT_OK
        for name in ("kernel.bin", "kernel.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_activation_count_mismatch(self, tmp_path):
        assert run(tmp_path, "kernel", "--act", "relu", "--depth", "4", "--n", "4", "--d", "2") == EXIT_INPUT

    def test_bad_skip_string(self, tmp_path):
        assert run(tmp_path, "kernel", "--act", "relu,relu", "--skips", "2", "--n", "4", "--d", "2") == EXIT_INPUT

    def test_replay_from_manifest(self, tmp_path):
        assert run(tmp_path / "first", "--seed", "3", *KERNEL_ARGS) == EXIT_OK
        manifest = tmp_path / "first" / "manifest.json"
        assert main(["--from-manifest", str(manifest), "--output-dir", str(tmp_path / "replay")]) == EXIT_OK
        assert (tmp_path / "first" / "kernel.bin").read_bytes() == (tmp_path / "replay" / "kernel.bin").read_bytes()

    @pytest.mark.parametrize("flag, value", [("--seed", "1"), ("--quad-order", "64"), ("--threads", "2"),
                                             ("--eta", "0.2")])
    def test_common_flags_after_subcommand(self, tmp_path, flag, value):
        argv = ["kernel", "--act", "relu,relu", "--skips", "0", "--n", "8", "--d", "4", flag, value]
        assert main(argv + ["--output-dir", str(tmp_path)]) == EXIT_OK
        manifest = read_json(str(tmp_path / "manifest.json"))
        assert str(manifest["arguments"][flag.lstrip("-").replace("-", "_")]) == value

    def test_global_flags_survive_subcommand_defaults(self, tmp_path):
        assert run(tmp_path, "--seed", "5", "kernel", "--act", "relu,relu", "--n", "8", "--d", "4") == EXIT_OK
        assert read_json(str(tmp_path / "manifest.json"))["arguments"]["seed"] == 5

    def test_seed_position_does_not_matter(self, tmp_path):
        assert run(tmp_path / "a", "--seed", "1", *KERNEL_ARGS) == EXIT_OK
        assert run(tmp_path / "b", *KERNEL_ARGS, "--seed", "1") == EXIT_OK
        assert (tmp_path / "a" / "kernel.bin").read_bytes() == (tmp_path / "b" / "kernel.bin").read_bytes()


class TestExperimentCommands:

    def test_sweep_rows(self, tmp_path):
        code = run(tmp_path, "sweep", "--kinds", "relu,sigmoid", "--skip-configs", "none,all",
                   "--min-depth", "3", "--max-depth", "4", "--n", "8", "--d", "4")
        assert code == EXIT_OK
        frame = pd.read_csv(tmp_path / "sweep.csv")
        assert len(frame) == 2 * 2 * 2
        assert set(frame["depth"]) == {3, 4}

    def test_sweep_depth_out_of_range(self, tmp_path):
        assert run(tmp_path, "sweep", "--kinds", "relu", "--min-depth", "2", "--max-depth", "4") == EXIT_INPUT

    def test_convergence_tables(self, tmp_path):
        code = run(tmp_path, "convergence", "--kind", "tanh", "--widths", "8,16", "--seeds", "2", "--n", "4", "--d", "2")
        assert code == EXIT_OK
        assert len(pd.read_csv(tmp_path / "convergence.csv")) == 4
        summary = pd.read_csv(tmp_path / "convergence_summary.csv")
        assert list(summary["width"]) == [8, 16]
        assert read_json(str(tmp_path / "manifest.json"))["convention"] == "kernel_matched"


class TestBoundsCommand:

    def test_relu_upper(self, tmp_path):
        assert run(tmp_path, "bounds", "--act", "relu,relu", "--n", "10", "--d", "1") == EXIT_OK
        report = read_json(str(tmp_path / "bounds.json"))
        assert report["upper_thm1"] == pytest.approx(30.0)
        assert report["prop4_vacuous"] is True

    def test_with_kernel(self, tmp_path):
        code = run(tmp_path, "bounds", "--act", "tanh,tanh", "--skips", "1", "--n", "12", "--d", "4", "--with-kernel")
        assert code == EXIT_OK
        report = read_json(str(tmp_path / "bounds.json"))
        assert report["gen_bound"] > 0.0

    def test_data_file_sets_n_and_d(self, tmp_path):
        path = tmp_path / "points.csv"
        write_csv(generate(SynthSpec(12, 3, seed=0)), str(path))
        code = run(tmp_path / "out", "bounds", "--act", "relu,relu", "--data", str(path), "--n", "500", "--d", "7")
        assert code == EXIT_OK
        report = read_json(str(tmp_path / "out" / "bounds.json"))
        assert report["n"] == 12 and report["d"] == 3
        assert report["upper_thm1"] == pytest.approx(12.0)


class TestSearchCommand:

    def test_smoke(self, tmp_path):
        code = run(tmp_path, "search", "--depth", "3", "--width", "8", "-M", "10", "-k", "3", "--budget", "1",
                   "--mode", "trace_diag_analytic", "--gamma", "0.5", "--n-train", "60", "--n-val", "30", "--d", "8",
                   "--db", str(tmp_path / "runs.db"))
        assert code == EXIT_OK
        frame = pd.read_csv(tmp_path / "candidates.csv")
        assert len(frame) == 10
        assert frame["score"].is_monotonic_decreasing
        best = read_json(str(tmp_path / "best.json"))
        assert best["n_train"] == 60 and best["n_val"] == 30
        assert best["run_id"] is not None
        assert (tmp_path / "runs.db").exists()

    def test_invalid_top_k(self, tmp_path):
        code = run(tmp_path, "search", "--depth", "3", "--width", "8", "-M", "2", "-k", "5",
                   "--n-train", "20", "--n-val", "10", "--d", "4")
        assert code == EXIT_INPUT


class TestTrainCommand:

    def test_kappa_step_size(self, tmp_path):
        code = run(tmp_path, "train", "--act", "relu,relu", "--width", "16", "--n", "32", "--d", "4",
                   "--kappa", "0.5", "--epochs", "1")
        assert code == EXIT_OK
        summary = json.loads((tmp_path / "train.json").read_text())
        assert summary["gamma"] > 0.0 and summary["kappa"] == 0.5
        assert summary["gen_bound"] > 0.0
        assert len(read_params_binary(str(tmp_path / "params.bin"))) == 3
        assert len(pd.read_csv(tmp_path / "loss.csv")) == 32

    def test_divergence_exit_code(self, tmp_path):
        code = run(tmp_path, "train", "--act", "relu,relu", "--width", "16", "--n", "32", "--d", "4",
                   "--gamma", "1e9", "--epochs", "1")
        assert code == EXIT_DIVERGED

    def test_requires_step(self, tmp_path):
        assert run(tmp_path, "train", "--n", "8", "--d", "2", "--epochs", "1") == EXIT_INPUT
