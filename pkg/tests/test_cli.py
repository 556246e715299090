"""
Unit tests for the command-line interface.

These tests verify:
1. gen-data, train, eval match, eval keypoints, gradcheck and visualize exit with 0 on success
2. Every command writes its outputs and the config echo where documented
3. Usage errors exit with 1, runtime failures with 2 and failed checks with 3
"""

import json

import pytest

from geostable.cli import EXIT_CHECK_FAILED, EXIT_FAILURE, EXIT_OK, EXIT_USAGE, build_parser, main
from geostable.evaluation import MetricReport
from geostable.synthdata import INDEX_FILE
from geostable.trainer import FINAL_CHECKPOINT, METRICS_LOG
from tests.conftest import TINY_OVERRIDES

FEWSHOT_OVERRIDES = {
    "fewshot.rounds": 1,
    "fewshot.min_steps": 2,
    "fewshot.head_width": 4,
    "fewshot.heldout_per_family": 1,
    "fewshot.seeds": (0,),
}


def _sets(overrides):
    args = []
    for key, value in overrides.items():
        text = ",".join(str(v) for v in value) if isinstance(value, tuple) else str(value)
        args += ["--set", f"{key}={text}"]
    return args


TINY_SETS = _sets(TINY_OVERRIDES)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    assert main(["-q", "gen-data", "--out", str(out), "--count", "8", *TINY_SETS]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def checkpoint(data_dir, tmp_path_factory):
    run = tmp_path_factory.mktemp("cli") / "run"
    args = ["-q", "train", "--data", str(data_dir), "--out", str(run), "--steps", "2", *TINY_SETS]
    assert main(args) == EXIT_OK
    return run / FINAL_CHECKPOINT


class TestGenData:
    """Tests for dataset generation."""

    def test_writes_dataset_and_echo(self, data_dir):
        """The directory holds the index and the config echo."""
        assert (data_dir / INDEX_FILE).exists()
        assert "scene.canvas = 32" in (data_dir / "config.txt").read_text()

    def test_nonempty_directory_needs_force(self, data_dir, capsys):
        """Refuses to overwrite without --force."""
        code = main(["-q", "gen-data", "--out", str(data_dir), "--count", "8", *TINY_SETS])

        assert code == EXIT_USAGE
        assert "--force" in capsys.readouterr().err

    def test_force_overwrites(self, tmp_path):
        """--force writes into a nonempty directory."""
        (tmp_path / "junk.txt").write_text("x")

        code = main(
            ["-q", "gen-data", "--out", str(tmp_path), "--count", "4", "--force", *TINY_SETS]
        )

        assert code == EXIT_OK
        assert (tmp_path / INDEX_FILE).exists()


class TestTrain:
    """Tests for the train command."""

    def test_writes_run_directory(self, checkpoint):
        """Checkpoint, metrics log and config echo are written."""
        run = checkpoint.parent

        assert checkpoint.exists()
        assert len((run / METRICS_LOG).read_text().splitlines()) == 2
        assert "loss.variant = probabilistic" in (run / "config.txt").read_text()

    def test_resume_continues(self, data_dir, checkpoint, tmp_path):
        """--resume picks up the saved step count."""
        code = main([
            "-q", "train", "--data", str(data_dir), "--out", str(tmp_path),
            "--resume", str(checkpoint), "--steps", "3",
        ])

        assert code == EXIT_OK
        assert len((tmp_path / METRICS_LOG).read_text().splitlines()) == 1

    def test_missing_dataset_fails(self, tmp_path):
        """A directory without a dataset is a runtime failure."""
        code = main(["-q", "train", "--data", str(tmp_path / "none"), "--out", str(tmp_path)])

        assert code == EXIT_FAILURE

    def test_unknown_loss_variant_is_usage(self, data_dir, tmp_path):
        """argparse choices reject unknown variants."""
        code = main([
            "-q", "train", "--data", str(data_dir), "--out", str(tmp_path),
            "--loss-variant", "hinge",
        ])

        assert code == EXIT_USAGE


class TestEval:
    """Tests for the eval commands."""

    def test_match_writes_report(self, data_dir, checkpoint, tmp_path):
        """The match report is valid and carries the confidence readout."""
        code = main([
            "-q", "eval", "match", "--checkpoint", str(checkpoint), "--data", str(data_dir),
            "--out", str(tmp_path), *TINY_SETS,
        ])

        assert code == EXIT_OK
        report = MetricReport.read(tmp_path / "match_checkpoint_final_data.json")
        report.validate()
        assert set(report.extra["confidence_contrast"]) == {"foreground", "background", "ratio"}
        assert report.extra["config"]["eval.pairs"] == 2
        assert (tmp_path / "match_checkpoint_final_data_pck.png").exists()

    def test_match_without_confidence(self, data_dir, checkpoint, tmp_path):
        """--no-confidence writes a separately named report."""
        code = main([
            "-q", "eval", "match", "--checkpoint", str(checkpoint), "--data", str(data_dir),
            "--out", str(tmp_path), "--no-confidence", *TINY_SETS,
        ])

        assert code == EXIT_OK
        report = MetricReport.read(tmp_path / "match_checkpoint_final_data_noconf.json")
        assert report.extra["use_confidence"] is False

    def test_keypoints_compares_random(self, data_dir, checkpoint, tmp_path):
        """Both extractors appear in the few-shot report."""
        code = main([
            "-q", "eval", "keypoints", "--checkpoint", str(checkpoint), "--data", str(data_dir),
            "--out", str(tmp_path), "--compare-random", *TINY_SETS, *_sets(FEWSHOT_OVERRIDES),
        ])

        assert code == EXIT_OK
        report = MetricReport.read(tmp_path / "keypoints_checkpoint_final_data.json")
        assert set(report.extra["fewshot"]) == {"checkpoint_final", "random"}
        assert (tmp_path / "keypoints_checkpoint_final_data_auc.png").exists()

    def test_stride_mismatch_fails(self, checkpoint, tmp_path):
        """A canvas that is not a multiple of the stride is refused."""
        data = tmp_path / "odd"
        gen = ["-q", "gen-data", "--out", str(data), "--count", "4", "--set", "scene.canvas=30"]
        assert main(gen) == EXIT_OK

        code = main([
            "-q", "eval", "match", "--checkpoint", str(checkpoint), "--data", str(data),
            "--out", str(tmp_path / "reports"),
        ])

        assert code == EXIT_FAILURE

    def test_missing_checkpoint_fails(self, data_dir, tmp_path):
        """An absent checkpoint is a runtime failure."""
        code = main([
            "-q", "eval", "match", "--checkpoint", str(tmp_path / "none.pt"),
            "--data", str(data_dir), "--out", str(tmp_path),
        ])

        assert code == EXIT_FAILURE

    def test_protocol_is_required(self):
        """eval without a protocol is a usage error."""
        assert main(["eval"]) == EXIT_USAGE


class TestGradcheck:
    """Tests for the gradcheck command."""

    def test_passes_and_writes_json(self, tmp_path, capsys):
        """All checks pass and are written as a JSON list."""
        out = tmp_path / "checks.json"

        code = main(
            ["-q", "gradcheck", "--sigma-grid", "0.5,1", "--batches", "1", "--out", str(out)]
        )

        assert code == EXIT_OK
        results = json.loads(out.read_text())
        assert results and all(r["passed"] for r in results)
        assert "0 failed" in capsys.readouterr().out

    def test_corrupted_loss_fails_checks(self):
        """A shifted normalizer makes the command exit with 3."""
        code = main(
            ["-q", "gradcheck", "--sigma-grid", "1", "--batches", "1", "--corrupt-loss", "0.01"]
        )

        assert code == EXIT_CHECK_FAILED

    def test_nonpositive_sigma_is_usage(self):
        """Sigma values must be positive."""
        assert main(["-q", "gradcheck", "--sigma-grid", "0,1"]) == EXIT_USAGE
        assert main(["-q", "gradcheck", "--sigma-grid", "a,b"]) == EXIT_USAGE

    def test_defaults_to_twenty_batches(self):
        """Without --batches every variant is checked on 20 random batches."""
        args = build_parser().parse_args(["gradcheck"])

        assert args.batches == 20

    def test_nonpositive_batches_is_usage(self):
        """At least one batch is needed."""
        assert main(["-q", "gradcheck", "--batches", "0"]) == EXIT_USAGE


class TestVisualize:
    """Tests for the visualize command."""

    def test_renders_dataset_scenes(self, data_dir, checkpoint, tmp_path):
        """Each scene gets a confidence map and the requested channel count."""
        code = main([
            "-q", "visualize", "--checkpoint", str(checkpoint), "--images", str(data_dir),
            "--out", str(tmp_path), "--channels", "2",
        ])

        assert code == EXIT_OK
        assert len(list(tmp_path.glob("*_confidence.png"))) == 8
        assert len(list(tmp_path.glob("*_channel*.png"))) == 16

    def test_loss_surface(self, tmp_path):
        """--loss-surface alone needs no checkpoint."""
        assert main(["-q", "visualize", "--out", str(tmp_path), "--loss-surface"]) == EXIT_OK
        assert (tmp_path / "loss_surface_pos.png").exists()
        assert (tmp_path / "loss_surface_neg.png").exists()

    def test_out_of_range_channel_is_usage(self, data_dir, checkpoint, tmp_path):
        """Channel ids beyond the descriptor size are rejected."""
        code = main([
            "-q", "visualize", "--checkpoint", str(checkpoint), "--images", str(data_dir),
            "--out", str(tmp_path), "--channel-ids", "99",
        ])

        assert code == EXIT_USAGE

    def test_nothing_to_do_is_usage(self, tmp_path):
        """visualize needs images or the loss surface."""
        assert main(["-q", "visualize", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_images_need_checkpoint(self, data_dir, tmp_path):
        """--images without --checkpoint is a usage error."""
        code = main(["-q", "visualize", "--images", str(data_dir), "--out", str(tmp_path)])

        assert code == EXIT_USAGE


class TestUsage:
    """Tests for argument and override errors."""

    def test_no_command(self):
        """A command is required."""
        assert main([]) == EXIT_USAGE

    def test_unknown_command(self):
        """Unknown commands are usage errors."""
        assert main(["fly"]) == EXIT_USAGE

    def test_malformed_set(self, tmp_path):
        """--set needs key=value."""
        assert main(["-q", "gen-data", "--out", str(tmp_path), "--set", "scene.canvas"]) == 1

    def test_unknown_config_key(self, tmp_path, capsys):
        """Unknown override keys are reported as usage errors."""
        code = main(["-q", "gen-data", "--out", str(tmp_path), "--set", "scene.size=3"])

        assert code == EXIT_USAGE
        assert "scene.size" in capsys.readouterr().err
