"""
Command-line interface.

Usage::

    geostable gen-data --out data/train --count 200 --seed 0
    geostable train --data data/train --out runs/prob --loss-variant probabilistic
    geostable eval match --checkpoint runs/prob/checkpoint_final.pt --data data/test --out reports
    geostable eval keypoints --checkpoint runs/prob/checkpoint_final.pt --data data/test \\
        --out reports --compare-random
    geostable gradcheck --sigma-grid 0.05,1,50
    geostable visualize --checkpoint runs/prob/checkpoint_final.pt --images data/test --out viz

Every command accepts ``--config FILE`` and repeated ``--set key=value``
overrides. Exit status: 0 success, 1 usage error, 2 runtime failure, 3 failed
checks.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Sequence

import numpy as np
from PIL import Image

from geostable.config import (
    LOSS_VARIANTS,
    BackboneConfig,
    EvalConfig,
    FewShotConfig,
    PhotometricConfig,
    RunConfig,
    SceneConfig,
    WarpConfig,
)
from geostable.evaluation.features import FeatureExtractor
from geostable.evaluation.fewshot import FewShotResult, few_shot_keypoint_eval
from geostable.evaluation.matching import confidence_contrast, evaluate_matching
from geostable.evaluation.pck import alpha_grid
from geostable.evaluation.report import MetricReport
from geostable.exceptions import ConfigError, GeostableError, UsageError, VersionMismatchError
from geostable.geometry.imaging import ImageArray, from_uint8
from geostable.model.net import describe
from geostable.probloss.gradcheck import DEFAULT_SIGMA_GRID, run_all
from geostable.synthdata.scenes import SceneDataset, generate_dataset
from geostable.synthdata.storage import INDEX_FILE, read_dataset, write_dataset
from geostable.trainer.loop import train
from geostable.trainer.state import load_net, load_state
from geostable.utils.visualization import plot_curves, plot_loss_surface, render_fields

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2
EXIT_CHECK_FAILED = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def configure_logging(verbosity: int = 0) -> None:
    """Configure the root logger; ``verbosity`` -1, 0, 1 maps to WARNING, INFO, DEBUG."""
    level = logging.DEBUG if verbosity > 0 else logging.WARNING if verbosity < 0 else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _parse_sets(items: Optional[Sequence[str]]) -> Dict[str, str]:
    overrides: Dict[str, str] = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _parse_floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"Expected comma-separated numbers, got {text!r}") from e


def _parse_ints(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"Expected comma-separated integers, got {text!r}") from e


def _run_config(args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None) -> RunConfig:
    overrides: Dict[str, Any] = _parse_sets(args.set)
    overrides.update(extra or {})
    return RunConfig.from_sources(args.config, overrides)


def _check_stride(dataset: SceneDataset, stride: int, origin: Path) -> None:
    if len(dataset) and dataset[0].image.shape[0] % stride:
        raise VersionMismatchError(
            f"Dataset '{origin}' canvas {dataset[0].image.shape[0]} is not a multiple of "
            f"the checkpoint stride {stride}"
        )


def cmd_gen_data(args: argparse.Namespace) -> int:
    extra: Dict[str, Any] = {}
    if args.count is not None:
        extra["scene.count"] = args.count
    cfg = _run_config(args, extra)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise UsageError(f"Output directory '{out}' is not empty; pass --force to overwrite")
    dataset = generate_dataset(cfg["scene.count"], args.seed, SceneConfig.from_run_config(cfg))
    index = write_dataset(out, dataset)
    cfg.write_echo(out)
    print(f"Wrote {len(dataset)} scenes to {index}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    extra: Dict[str, Any] = {}
    if args.loss_variant is not None:
        extra["loss.variant"] = args.loss_variant
    if args.steps is not None:
        extra["train.max_steps"] = args.steps
    if args.seed is not None:
        extra["train.seed"] = args.seed

    state = None
    if args.resume:
        state, saved = load_state(Path(args.resume))
        overrides: Dict[str, Any] = _parse_sets(args.set)
        overrides.update(extra)
        cfg = saved.with_overrides(overrides)
        logger.info("Resuming from %s at step %d", args.resume, state.step)
    else:
        cfg = _run_config(args, extra)

    dataset = read_dataset(Path(args.data))
    result = train(dataset, cfg, Path(args.out), state=state)
    status = "stopped early" if result.stopped_early else "finished"
    print(f"Training {status} at step {result.state.step}; checkpoint {result.checkpoint}")
    return EXIT_OK


def _extractor(args: argparse.Namespace, use_confidence: bool) -> FeatureExtractor:
    extractor = FeatureExtractor.from_checkpoint(Path(args.checkpoint), use_confidence)
    if not use_confidence:
        extractor.name = f"{extractor.name}_noconf"
    return extractor


def _report_name(kind: str, checkpoint: Path, data: Path, suffix: str = "") -> str:
    return f"{kind}_{Path(checkpoint).stem}_{Path(data).name}{suffix}"


def cmd_eval_match(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    eval_config = EvalConfig.from_run_config(cfg)
    use_confidence = eval_config.use_confidence and not args.no_confidence
    extractor = _extractor(args, use_confidence)
    dataset = read_dataset(Path(args.data))
    _check_stride(dataset, extractor.stride, Path(args.data))

    name = _report_name("match", args.checkpoint, args.data, "" if use_confidence else "_noconf")
    report = evaluate_matching(
        extractor,
        dataset,
        eval_config,
        WarpConfig.from_run_config(cfg),
        PhotometricConfig.from_run_config(cfg),
        name=name,
    )
    report.extra["confidence_contrast"] = confidence_contrast(extractor, dataset).to_dict()
    report.extra["config"] = cfg.to_dict()

    out = Path(args.out)
    cfg.write_echo(out)
    path = report.write(out)
    report.plot(out)
    print(f"PCK@{report.pck_alpha:g} = {report.pck_at:.4f}; report {path}")
    return EXIT_OK


def cmd_eval_keypoints(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    fewshot = FewShotConfig.from_run_config(cfg)
    eval_config = EvalConfig.from_run_config(cfg)
    use_confidence = eval_config.use_confidence and not args.no_confidence
    dataset = read_dataset(Path(args.data))
    annotations, heldout = dataset.split(fewshot.heldout_per_family, per_family=True)

    extractors = [_extractor(args, use_confidence)]
    _check_stride(dataset, extractors[0].stride, Path(args.data))
    if args.compare_random:
        _, saved = load_net(Path(args.checkpoint))
        extractors.append(FeatureExtractor.random_init(
            BackboneConfig.from_run_config(saved), use_confidence
        ))

    alphas = alpha_grid(eval_config.alpha_max, eval_config.alpha_steps)
    results: List[FewShotResult] = [
        few_shot_keypoint_eval(extractor, annotations, heldout, fewshot, alphas)
        for extractor in extractors
    ]

    name = _report_name("keypoints", args.checkpoint, args.data)
    report = MetricReport(
        name=name,
        pck_alpha=eval_config.pck_alpha,
        extra={
            "fewshot": {r.extractor: r.to_dict() for r in results},
            "config": cfg.to_dict(),
        },
    )
    out = Path(args.out)
    cfg.write_echo(out)
    path = report.write(out)
    plot_curves(
        out / f"{name}_auc.png",
        {r.extractor: (r.budgets(), r.aucs()) for r in results},
        xlabel="annotated scenes per family",
        ylabel="PCK-AUC",
        title=name,
    )
    for r in results:
        print(f"{r.extractor}: " + ", ".join(f"{b}:{a:.4f}" for b, a in zip(r.budgets(), r.aucs())))
    print(f"Report {path}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    sigmas = _parse_floats(args.sigma_grid) if args.sigma_grid else list(DEFAULT_SIGMA_GRID)
    if not sigmas or min(sigmas) <= 0:
        raise UsageError("--sigma-grid needs positive values")
    if args.batches < 1:
        raise UsageError("--batches must be at least 1")
    results = run_all(sigmas, batches=args.batches, seed=args.seed, log_offset=args.corrupt_loss)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: error {r.error:.3e} (tolerance {r.tolerance:.1e})")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps([r.to_dict() for r in results], indent=2) + "\n")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed} passed, {failed} failed")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _load_images(paths: Sequence[str]) -> List[tuple[str, ImageArray]]:
    images: List[tuple[str, ImageArray]] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir() and (path / INDEX_FILE).exists():
            images.extend((scene.scene_id, scene.image) for scene in read_dataset(path))
            continue
        try:
            with Image.open(path) as img:
                images.append((path.stem, from_uint8(np.asarray(img.convert("RGB")))))
        except OSError as e:
            raise GeostableError(f"Cannot read image '{path}': {e}") from e
    return images


def cmd_visualize(args: argparse.Namespace) -> int:
    out = Path(args.out)
    written: List[Path] = []
    if args.loss_surface:
        written.append(plot_loss_surface(out / "loss_surface_pos.png", label=1))
        written.append(plot_loss_surface(out / "loss_surface_neg.png", label=-1))

    if args.images:
        if not args.checkpoint:
            raise UsageError("visualize --images needs --checkpoint")
        net, saved = load_net(Path(args.checkpoint))
        channels = _parse_ints(args.channel_ids) if args.channel_ids else None
        if channels is not None:
            bad = [c for c in channels if not 0 <= c < net.descriptor_dim]
            if bad:
                raise UsageError(
                    f"Channels {bad} out of range for {net.descriptor_dim}-dimensional descriptors"
                )
        count = args.channels if args.channels is not None else saved["viz.channels"]
        for stem, image in _load_images(args.images):
            if image.shape[0] % net.stride or image.shape[1] % net.stride:
                raise UsageError(f"Image '{stem}' size is not a multiple of stride {net.stride}")
            field, confidence = describe(net, image)
            written.extend(render_fields(out, stem, field, confidence, channels, count))
    elif not args.loss_surface:
        raise UsageError("visualize needs --images with --checkpoint, or --loss-surface")

    print(f"Wrote {len(written)} images to {out}")
    return EXIT_OK


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="config file with 'key = value' lines")
    parser.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geostable", description=__doc__.split("\n\n")[0].strip())
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="generate a synthetic scene dataset")
    _common(gen)
    gen.add_argument("--out", required=True, help="dataset directory")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--count", type=int, help="number of scenes (default: scene.count)")
    gen.add_argument("--force", action="store_true", help="write into a nonempty directory")
    gen.set_defaults(handler=cmd_gen_data)

    tr = commands.add_parser("train", help="train the descriptor network")
    _common(tr)
    tr.add_argument("--data", required=True, help="dataset directory")
    tr.add_argument("--out", required=True, help="run directory")
    tr.add_argument("--loss-variant", choices=LOSS_VARIANTS)
    tr.add_argument("--steps", type=int, help="maximum number of steps")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--resume", help="checkpoint to continue from")
    tr.set_defaults(handler=cmd_train)

    ev = commands.add_parser("eval", help="evaluate a checkpoint")
    protocols = ev.add_subparsers(dest="protocol", required=True)
    match = protocols.add_parser("match", help="keypoint transfer and region matching")
    keypoints = protocols.add_parser("keypoints", help="few-shot keypoint detection")
    for sub in (match, keypoints):
        _common(sub)
        sub.add_argument("--checkpoint", required=True)
        sub.add_argument("--data", required=True, help="dataset directory")
        sub.add_argument("--out", required=True, help="report directory")
        sub.add_argument("--no-confidence", action="store_true", help="do not scale by 1/sigma")
    keypoints.add_argument("--compare-random", action="store_true", help="also run random features")
    match.set_defaults(handler=cmd_eval_match)
    keypoints.set_defaults(handler=cmd_eval_keypoints)

    gc = commands.add_parser("gradcheck", help="verify the objective and its gradients")
    _common(gc)
    gc.add_argument("--sigma-grid", help="comma-separated sigma values")
    gc.add_argument("--batches", type=int, default=20, help="random batches per variant")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--out", help="write results as JSON")
    gc.add_argument("--corrupt-loss", type=float, default=0.0, help=argparse.SUPPRESS)
    gc.set_defaults(handler=cmd_gradcheck)

    viz = commands.add_parser("visualize", help="render confidence maps and channel responses")
    _common(viz)
    viz.add_argument("--checkpoint")
    viz.add_argument("--images", nargs="+", help="PNG files or dataset directories")
    viz.add_argument("--out", required=True)
    viz.add_argument("--channels", type=int, help="number of top-variance channels")
    viz.add_argument("--channel-ids", help="comma-separated channel indices")
    viz.add_argument(
        "--loss-surface", action="store_true", help="plot the loss over score and sigma"
    )
    viz.set_defaults(handler=cmd_visualize)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    configure_logging(1 if args.verbose else -1 if args.quiet else 0)

    try:
        return int(args.handler(args))
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (GeostableError, ValueError, OSError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
