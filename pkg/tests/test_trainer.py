"""
Unit tests for the trainer module.

These tests verify:
1. The momentum AdaGrad update rule and the weight-decay exemption of the confidence bias
2. Training steps keep descriptors unit norm and sigma above its bound
3. Degenerate pairs are skipped and counted
4. Fixed-seed runs are bit-identical and checkpoint resume continues exactly
5. Early stopping on the smoothed loss, checkpoints, metrics log, epoch summary and config echo
6. Parallel pair generation delivers pairs and surfaces any worker failure
"""

import math

import numpy as np
import pandas as pd
import pytest
import torch

from geostable.config import PhotometricConfig, RunConfig, SceneConfig, TrainingConfig, WarpConfig
from geostable.exceptions import CheckpointError, GeostableError
from geostable.geometry import identity, pair_from_warps, translation
from geostable.model.net import CONFIDENCE_BIAS
from geostable.synthdata import generate_dataset
from geostable.trainer import (
    EPOCH_SUMMARY,
    FINAL_CHECKPOINT,
    METRICS_LOG,
    MetricsLog,
    MomentumAdagrad,
    PairProducer,
    StepMetrics,
    TrainingPair,
    TrainSettings,
    build_optimizer,
    initial_state,
    load_net,
    load_state,
    parameter_groups,
    save_state,
    train,
    train_on_pairs,
    train_step,
)


def _assert_invariants(state, images, epsilon):
    with torch.no_grad():
        batch = torch.as_tensor(np.stack(images).transpose(0, 3, 1, 2), dtype=torch.float32)
        out = state.net(batch)
    norms = out.descriptors.norm(dim=1)
    assert torch.allclose(norms, torch.ones_like(norms), atol=1e-5)
    assert bool((out.sigma >= epsilon).all())


def _same_parameters(a, b):
    return all(torch.equal(pa, pb) for pa, pb in zip(a.parameters(), b.parameters()))


class TestOptimizer:
    """Tests for the momentum AdaGrad optimizer and parameter groups."""

    def test_update_rule(self):
        """Two steps follow acc += g^2, v = m v + g / sqrt(acc), p -= lr v."""
        p = torch.nn.Parameter(torch.tensor([1.0], dtype=torch.float64))
        opt = MomentumAdagrad([p], lr=0.1, momentum=0.5, eps=0.0)

        p.grad = torch.tensor([2.0], dtype=torch.float64)
        opt.step()
        assert float(p) == pytest.approx(1.0 - 0.1 * 1.0)

        p.grad = torch.tensor([2.0], dtype=torch.float64)
        opt.step()
        velocity = 0.5 * 1.0 + 2.0 / math.sqrt(8.0)
        assert float(p) == pytest.approx(0.9 - 0.1 * velocity)

    def test_weight_decay_skips_exempt_group(self):
        """With zero gradients only the decayed group moves."""
        decayed = torch.nn.Parameter(torch.tensor([1.0]))
        exempt = torch.nn.Parameter(torch.tensor([1.0]))
        opt = MomentumAdagrad(
            [{"params": [decayed], "weight_decay": 0.1}, {"params": [exempt], "weight_decay": 0.0}],
            lr=0.01,
        )
        decayed.grad = torch.zeros(1)
        exempt.grad = torch.zeros(1)

        opt.step()

        assert float(decayed) < 1.0
        assert float(exempt) == 1.0

    def test_confidence_bias_is_exempt(self, tiny_net):
        """parameter_groups puts exactly the confidence bias in the no-decay group."""
        groups = parameter_groups(tiny_net, 5e-4)
        named = dict(tiny_net.named_parameters())

        assert groups[0]["weight_decay"] == 5e-4
        assert groups[1]["weight_decay"] == 0.0
        assert len(groups[1]["params"]) == 1
        assert groups[1]["params"][0] is named[CONFIDENCE_BIAS]

    def test_invalid_hyperparameters(self):
        """Nonpositive rates and momentum outside [0, 1) are rejected."""
        p = torch.nn.Parameter(torch.zeros(1))
        with pytest.raises(ValueError):
            MomentumAdagrad([p], lr=0.0)
        with pytest.raises(ValueError):
            MomentumAdagrad([p], momentum=1.0)

    @pytest.mark.parametrize(
        "kind,cls",
        [("adagrad_momentum", MomentumAdagrad), ("adagrad", torch.optim.Adagrad),
         ("sgd", torch.optim.SGD)],
    )
    def test_build_optimizer_kinds(self, tiny_net, kind, cls):
        """Each configured kind builds the matching optimizer."""
        assert isinstance(build_optimizer(tiny_net, TrainingConfig(optimizer=kind)), cls)


class TestTrainStep:
    """Tests for single training steps."""

    def test_invariants_hold_after_every_step(self, tiny_config, small_scenes):
        """Unit norms and the sigma bound hold after each update."""
        settings = TrainSettings.from_run_config(tiny_config)
        state = initial_state(settings)
        images = small_scenes.images[:2]

        for i in range(5):
            metrics = train_step(state, images[i % 2], settings)
            assert metrics.step == i + 1
            assert not metrics.skipped
            assert math.isfinite(metrics.loss)
            _assert_invariants(state, images, settings.backbone.epsilon)

    def test_step_changes_parameters(self, tiny_config, small_scenes):
        """A non-degenerate step updates the network."""
        settings = TrainSettings.from_run_config(tiny_config)
        state = initial_state(settings)
        before = [p.detach().clone() for p in state.net.parameters()]

        train_step(state, small_scenes[0].image, settings)

        assert any(not torch.equal(b, p) for b, p in zip(before, state.net.parameters()))
        assert state.ema_loss is not None

    def test_degenerate_pair_is_skipped(self, tiny_config):
        """A pair whose second view misses every anchor is skipped without an update."""
        settings = TrainSettings.from_run_config(tiny_config)
        state = initial_state(settings)
        before = [p.detach().clone() for p in state.net.parameters()]
        image = np.random.default_rng(0).random((32, 32, 3))
        pair = TrainingPair(image, image, pair_from_warps(identity(), translation(1000.0, 0.0)))

        metrics = train_on_pairs(state, [pair], settings)

        assert metrics.skipped and math.isnan(metrics.loss)
        assert state.step == 1 and state.skipped == 1
        assert all(torch.equal(b, p) for b, p in zip(before, state.net.parameters()))

    @pytest.mark.parametrize("variant", ["plain", "contrastive"])
    def test_other_variants_train(self, tiny_config, small_scenes, variant):
        """The ablation objectives drive the same step."""
        cfg = tiny_config.with_overrides({"loss.variant": variant})
        settings = TrainSettings.from_run_config(cfg)
        state = initial_state(settings)

        metrics = train_step(state, small_scenes[1].image, settings)

        assert math.isfinite(metrics.loss)


class TestTrainLoop:
    """Tests for the epoch loop, checkpoints and logs."""

    def test_outputs_are_written(self, tiny_config, small_scenes, tmp_path):
        """A run writes the config echo, a metrics line per step and the final checkpoint."""
        cfg = tiny_config.with_overrides({"train.checkpoint_every": 2, "train.max_steps": 4})

        result = train(small_scenes, cfg, tmp_path)

        assert (tmp_path / "config.txt").read_text() == cfg.to_text()
        assert result.checkpoint == tmp_path / FINAL_CHECKPOINT
        assert (tmp_path / "checkpoint_000002.pt").exists()
        assert (tmp_path / "checkpoint_000004.pt").exists()
        log = MetricsLog.read(tmp_path / METRICS_LOG)
        assert list(log["step"]) == [1, 2, 3, 4]
        assert bool(log["deterministic"].all())

    def test_epoch_summary(self, tiny_config, small_scenes, tmp_path):
        """Ten single-image steps over eight scenes span two epochs in the summary."""
        cfg = tiny_config.with_overrides({"train.max_steps": 10, "train.patience": 10_000})

        train(small_scenes, cfg, tmp_path)

        log = MetricsLog.read(tmp_path / METRICS_LOG)
        assert list(log["epoch"]) == [0] * 8 + [1] * 2
        summary = pd.read_csv(tmp_path / EPOCH_SUMMARY)
        assert list(summary["epoch"]) == [0, 1]
        assert summary["steps"].sum() == (~log["skipped"].astype(bool)).sum()

    def test_no_periodic_checkpoints_when_disabled(self, tiny_config, small_scenes, tmp_path):
        """checkpoint_every = 0 writes only the final checkpoint."""
        train(small_scenes, tiny_config, tmp_path)

        assert sorted(p.name for p in tmp_path.glob("*.pt")) == [FINAL_CHECKPOINT]

    def test_empty_dataset_is_rejected(self, tiny_config):
        """Training needs images."""
        with pytest.raises(ValueError, match="nonempty"):
            train([], tiny_config)

    def test_fixed_seed_runs_are_bit_identical(self, tiny_config, small_scenes):
        """Two single-worker runs with one seed end with identical weights."""
        a = train(small_scenes, tiny_config).state
        b = train(small_scenes, tiny_config).state

        assert _same_parameters(a.net, b.net)
        assert a.ema_loss == b.ema_loss

    def test_resume_continues_exactly(self, tiny_config, small_scenes, tmp_path):
        """Stopping at step 2 and resuming to step 4 equals one run to step 4."""
        straight = train(small_scenes, tiny_config.with_overrides({"train.max_steps": 4})).state

        first = train(small_scenes, tiny_config.with_overrides({"train.max_steps": 2}), tmp_path)
        state, cfg = load_state(first.checkpoint)
        resumed = train(small_scenes, cfg.with_overrides({"train.max_steps": 4}), state=state).state

        assert resumed.step == 4
        assert _same_parameters(straight.net, resumed.net)
        assert straight.ema_loss == resumed.ema_loss

    def test_early_stop_on_flat_loss(self, tiny_config, small_scenes):
        """A loss that never improves stops after patience epochs."""

        def flat_step(state, images, settings):
            state.step += 1
            state.update_loss(1.0, settings.training.loss_smoothing)
            return StepMetrics(state.step, 1.0, 0.5, 0.5, 1.0, len(images))

        cfg = tiny_config.with_overrides({"train.max_steps": 100, "train.patience": 2})
        scenes = small_scenes.images[:3]

        result = train(scenes, cfg, step_fn=flat_step)

        assert result.stopped_early
        assert result.state.step == 6
        assert result.state.bad_epochs == 2

    def test_max_steps_zero_saves_initial_state(self, tiny_config, small_scenes, tmp_path):
        """No steps are taken but the final checkpoint is still written."""
        result = train(small_scenes, tiny_config.with_overrides({"train.max_steps": 0}), tmp_path)

        assert result.state.step == 0
        assert result.checkpoint.exists()

    def test_parallel_workers_train(self, tiny_config, small_scenes):
        """Several pair workers feed the loop."""
        cfg = tiny_config.with_overrides({"train.num_workers": 2, "train.max_steps": 3})

        result = train(small_scenes, cfg)

        assert result.state.step == 3


class TestCheckpoints:
    """Tests for saving and loading training state."""

    def test_round_trip_is_bit_exact(self, tiny_config, small_scenes, tmp_path):
        """Parameters, optimizer accumulators, counters and RNG survive a save/load."""
        settings = TrainSettings.from_run_config(tiny_config)
        state = initial_state(settings)
        for scene in small_scenes.scenes[:2]:
            train_step(state, scene.image, settings)
        path = save_state(tmp_path / "ckpt.pt", state, tiny_config)

        loaded, cfg = load_state(path)

        assert cfg == tiny_config
        assert _same_parameters(state.net, loaded.net)
        for key, value in state.optimizer.state_dict()["state"].items():
            for name, tensor in value.items():
                assert torch.equal(tensor, loaded.optimizer.state_dict()["state"][key][name])
        assert loaded.step == state.step and loaded.ema_loss == state.ema_loss
        assert loaded.rng.bit_generator.state == state.rng.bit_generator.state

    def test_load_net_is_in_eval_mode(self, tiny_config, tmp_path):
        """load_net returns the network ready for evaluation."""
        state = initial_state(TrainSettings.from_run_config(tiny_config))
        path = save_state(tmp_path / "ckpt.pt", state, tiny_config)

        net, _ = load_net(path)

        assert not net.training
        assert net.stride == 4

    def test_missing_checkpoint_raises(self, tmp_path):
        """Loading a missing file is a checkpoint error."""
        with pytest.raises(CheckpointError, match="not found"):
            load_state(tmp_path / "nope.pt")

    def test_config_mismatch_raises(self, tiny_config, tmp_path):
        """Parameters that do not fit the stored architecture are rejected."""
        state = initial_state(TrainSettings.from_run_config(tiny_config))
        wider = tiny_config.with_overrides({"model.descriptor_dim": 16})
        path = save_state(tmp_path / "ckpt.pt", state, wider)

        with pytest.raises(CheckpointError, match="does not match"):
            load_state(path)


class TestPairProducer:
    """Tests for the threaded pair generator."""

    def test_delivers_one_pair_per_task(self, small_scenes):
        """Every submitted index comes back as a rendered pair."""
        producer = PairProducer(
            small_scenes.images, WarpConfig(), PhotometricConfig(), 32,
            num_workers=2, queue_size=2, seed=0,
        )
        with producer:
            producer.submit([0, 1, 2, 3])
            pairs = [producer.get() for _ in range(4)]

        assert all(p.x_a.shape == (32, 32, 3) and p.x_b.shape == (32, 32, 3) for p in pairs)

    def test_worker_errors_are_reraised(self):
        """An invalid image surfaces as an error in the consumer."""
        producer = PairProducer(
            [np.full((8, 8, 3), 2.0)], WarpConfig(), PhotometricConfig(), 8,
            num_workers=1, queue_size=1, seed=0,
        )
        with producer:
            producer.submit([0])
            with pytest.raises(ValueError):
                producer.get()

    def test_any_worker_failure_reaches_the_consumer(self, small_scenes):
        """A failing task raises in the consumer and the worker keeps serving later tasks."""
        producer = PairProducer(
            small_scenes.images[:1], WarpConfig(), PhotometricConfig(), 32,
            num_workers=1, queue_size=1, seed=0,
        )
        with producer:
            producer.submit([5, 0])
            with pytest.raises(IndexError):
                producer.get()
            pair = producer.get()

        assert pair.x_a.shape == (32, 32, 3)

    def test_get_without_live_workers_raises(self, small_scenes):
        """Waiting on a producer whose workers are gone raises instead of blocking."""
        producer = PairProducer(
            small_scenes.images, WarpConfig(), PhotometricConfig(), 32,
            num_workers=1, queue_size=1, seed=0,
        )
        producer.start()
        producer.close()

        with pytest.raises(GeostableError):
            producer.get()

    def test_needs_a_worker(self, small_scenes):
        """num_workers must be at least one."""
        with pytest.raises(ValueError):
            PairProducer(small_scenes.images, WarpConfig(), PhotometricConfig(), 32, 0, 1, 0)


class TestMetricsLog:
    """Tests for the metrics log."""

    def test_missing_log_reads_empty(self, tmp_path):
        """An absent log is an empty frame with the metric columns."""
        frame = MetricsLog.read(tmp_path / "none.ndjson")

        assert frame.empty
        assert "loss" in frame.columns

    def test_append_and_read(self, tmp_path):
        """Records come back in order with wall time and determinism flag."""
        log = MetricsLog(tmp_path / "m.ndjson", deterministic=False)
        log.append(StepMetrics(1, 0.5, 0.7, 0.1, 1.2, 1), 0.01)
        log.append(StepMetrics(2, 0.4, 0.8, 0.1, 1.1, 1), 0.02)

        frame = MetricsLog.read(log.path)

        assert list(frame["step"]) == [1, 2]
        assert list(frame["loss"]) == [0.5, 0.4]
        assert not frame["deterministic"].any()

    def test_epoch_means_skip_skipped_steps(self, tmp_path):
        """Skipped steps count toward neither the means nor the step totals."""
        log = MetricsLog(tmp_path / "m.ndjson")
        log.append(StepMetrics(1, 0.6, 0.7, 0.1, 1.0, 1), 0.01, epoch=0)
        log.append(StepMetrics(2, 0.4, 0.9, 0.3, 2.0, 1), 0.02, epoch=0)
        nan = float("nan")
        log.append(StepMetrics(3, nan, nan, nan, nan, 0, skipped=True), 0.03, epoch=1)
        log.append(StepMetrics(4, 0.2, 0.8, 0.2, 1.0, 1), 0.04, epoch=1)

        means = MetricsLog.epoch_means(MetricsLog.read(log.path))

        assert list(means["epoch"]) == [0, 1]
        assert list(means["steps"]) == [2, 1]
        np.testing.assert_allclose(means["loss"], [0.5, 0.2])
        np.testing.assert_allclose(means["mean_sigma"], [1.5, 1.0])

    def test_epoch_means_of_empty_log(self, tmp_path):
        """An empty log summarises to an empty frame."""
        means = MetricsLog.epoch_means(MetricsLog.read(tmp_path / "none.ndjson"))

        assert means.empty
        assert "steps" in means.columns


@pytest.mark.slow
class TestLearningProgress:
    """Training moves positive and negative scores apart."""

    def test_scores_separate_over_200_steps(self):
        """After 200 steps on 20 scenes positives score higher and negatives lower."""
        scenes = generate_dataset(20, seed=1, config=SceneConfig(canvas=64))
        cfg = RunConfig({
            "data.image_size": 64, "scene.canvas": 64, "train.max_steps": 200,
            "train.checkpoint_every": 0, "pairs.n_points": 200,
        })
        settings = TrainSettings.from_run_config(cfg)
        state = initial_state(settings)

        first = [train_step(state, scenes[i].image, settings) for i in range(5)]
        result = train(scenes, cfg.with_overrides({"train.max_steps": 195}), state=state)
        last = [train_step(result.state, scenes[i].image, settings) for i in range(5)]

        def mean(metrics, field):
            return float(np.mean([getattr(m, field) for m in metrics]))

        assert mean(last, "mean_pos_score") > mean(first, "mean_pos_score")
        assert mean(last, "mean_neg_score") < mean(first, "mean_neg_score")
