"""Command-line entrypoint: ``transforseg <command> [options]``.

Exit codes: 0 ok, 1 failed verification or unexpected error, 2 configuration
error, 3 I/O or file-format error, 4 training aborted on a non-finite value,
5 checkpoint and dataset do not match.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

from dotenv import load_dotenv

from transforseg.core.errors import (
    CheckpointError,
    CompatibilityError,
    ConfigError,
    ManifestError,
    NonFiniteError,
    TrainingAbortedError,
    TransForSegError,
)
from transforseg.core.report import render_summary, robustness_table, write_json
from transforseg.core.train import compare_ablation, evaluate, evaluate_suite, train, train_seeds
from transforseg.core.verify import run_checks
from transforseg.data import corruptions
from transforseg.data.dataset import DatasetManifest
from transforseg.data.pgm import read_pgm, write_pgm
from transforseg.data.synth import generate_dataset
from transforseg.models.checkpoint import load_checkpoint
from transforseg.models.vit import ModelConfig, model_ledger
from transforseg.utils.config import ConfigManager, RunConfig
from transforseg.utils.logger import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_ABORTED = 4
EXIT_MISMATCH = 5


def _emit(data: Any) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def _abs(path: str | None) -> str | None:
    return os.path.abspath(path) if path else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transforseg",
        description="Stereo catheter segmentation and tip-force regression with a multitask ViT.",
    )
    parser.add_argument("--config", help="TOML or JSON run configuration")
    parser.add_argument("--log-level", help="override logging.level (DEBUG, INFO, ...)")
    parser.add_argument("--seed", type=int, help="seed for generation and training")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic stereo dataset")
    gen.add_argument("--out", help="dataset directory (default: train.dataset)")
    gen.add_argument("--count", type=int, default=2000)
    gen.add_argument("--background", choices=("plain", "clutter"))

    tr = sub.add_parser("train", help="train a model and keep the best checkpoint")
    tr.add_argument("--dataset")
    tr.add_argument("--out", help="checkpoint directory")
    tr.add_argument("--variant", choices=("tiny", "small", "base", "desk"))
    tr.add_argument("--no-seg-heads", action="store_true", help="train TransForcer (regression only)")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch-size", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--seeds", type=int, default=1, help="independent runs; reports mean ± std")
    tr.add_argument("--compare-ablation", action="store_true",
                    help="train TransForSeg and TransForcer on matched seeds")

    ev = sub.add_parser("eval", help="evaluate a checkpoint, optionally under corruption")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--dataset")
    ev.add_argument("--split", choices=("train", "val", "test"))
    ev.add_argument("--corrupt", help="kind[:key=value,...], a JSON spec, or 'all'")
    ev.add_argument("--out", help="report path (or directory for --corrupt all)")

    co = sub.add_parser("corrupt", help="corrupt a single PGM image")
    co.add_argument("--input", required=True)
    co.add_argument("--output", required=True)
    co.add_argument("--spec", required=True, help="kind[:key=value,...] or a JSON spec")

    sub.add_parser("verify", help="run the fast invariant checks")

    pa = sub.add_parser("params", help="print the parameter ledger")
    pa.add_argument("--variant", choices=("tiny", "small", "base", "desk"), default="desk")
    pa.add_argument("--no-seg-heads", action="store_true")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides.update({"run.seed": args.seed, "scene.seed": args.seed, "train.seed": args.seed})
    if args.command == "generate":
        overrides["train.dataset"] = _abs(args.out)
        overrides["scene.background_mode"] = args.background
    elif args.command == "train":
        overrides.update({
            "train.dataset": _abs(args.dataset),
            "train.checkpoint_dir": _abs(args.out),
            "train.epochs": args.epochs,
            "train.batch_size": args.batch_size,
            "train.learning_rate": args.lr,
            "model.variant": args.variant,
        })
        if args.no_seg_heads:
            overrides["model.with_segmentation_heads"] = False
    elif args.command == "eval":
        overrides["train.dataset"] = _abs(args.dataset)
        overrides["eval.split"] = args.split
    return overrides


def cmd_generate(args: argparse.Namespace, run: RunConfig) -> int:
    manifest = generate_dataset(args.count, run.scene, run.train.dataset, workers=run.threads)
    _emit({"manifest": str(manifest.root / "manifest.csv"), "splits": manifest.split_counts()})
    return EXIT_OK


def cmd_train(args: argparse.Namespace, run: RunConfig) -> int:
    cfg = run.train
    seeds = [cfg.seed + i for i in range(max(args.seeds, 1))]
    if args.compare_ablation:
        result = compare_ablation(cfg, seeds)
        _emit({"ablation": str(Path(cfg.checkpoint_dir) / "ablation.json"), **result.to_dict()})
        return EXIT_OK
    if len(seeds) > 1:
        results, summary = train_seeds(cfg, seeds)
        print(render_summary(summary), file=sys.stderr)
        _emit({
            "checkpoints": [str(r.checkpoint_path) for r in results],
            "summary": str(Path(cfg.checkpoint_dir) / "summary.json"),
        })
        return EXIT_OK
    result = train(cfg)
    _emit({
        "checkpoint": str(result.checkpoint_path),
        "report": str(Path(cfg.checkpoint_dir) / "report.json"),
        "curves": str(Path(cfg.checkpoint_dir) / "loss_curves.csv"),
    })
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, run: RunConfig) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    manifest = DatasetManifest.load(run.train.dataset)
    split = run.eval_split
    default_dir = Path(args.checkpoint).resolve().parent

    if args.corrupt == "all":
        clean, reports = evaluate_suite(
            checkpoint, manifest, corruptions.suite(run.seed), split, run.threads, run.hist_bins
        )
        out_dir = Path(args.out) if args.out else default_dir / f"robustness_{split}"
        paths = [str(r.write(out_dir / f"{r.label}.json")) for r in [clean, *reports]]
        table = robustness_table(clean, reports)
        table_path = write_json(out_dir / "robustness.json", table.to_dict())
        print(table.render(), file=sys.stderr)
        _emit({"reports": paths, "table": str(table_path), "blur_ordering_holds": table.blur_ordering_holds})
        return EXIT_OK

    spec = corruptions.NoiseSpec.parse(args.corrupt, seed=run.seed) if args.corrupt else None
    report = evaluate(checkpoint, manifest, split, spec, run.threads, hist_bins=run.hist_bins)
    out = Path(args.out) if args.out else default_dir / f"eval_{split}_{report.label}.json"
    _emit({"report": str(report.write(out))})
    return EXIT_OK


def cmd_corrupt(args: argparse.Namespace, run: RunConfig) -> int:
    spec = corruptions.NoiseSpec.parse(args.spec, seed=run.seed)
    write_pgm(args.output, corruptions.corrupt(read_pgm(args.input), spec))
    _emit({"output": os.path.abspath(args.output), "spec": spec.to_dict()})
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, run: RunConfig) -> int:
    results = run_checks()
    for result in results:
        print(result.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_params(args: argparse.Namespace, run: RunConfig) -> int:
    config = ModelConfig.preset(args.variant)
    if args.no_seg_heads:
        config = replace(config, with_segmentation_heads=False)
    ledger = model_ledger(config)
    width = max(len(spec.name) for spec in ledger)
    for spec in ledger:
        print(f"{spec.name.ljust(width)}  {str(spec.shape):<20} {spec.count:>12,}")
    total = sum(spec.count for spec in ledger)
    print(f"{'total'.ljust(width)}  {'':<20} {total:>12,}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "corrupt": cmd_corrupt,
    "verify": cmd_verify,
    "params": cmd_params,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manager = ConfigManager(args.config) if args.config else None
        file_config = manager.load_config() if manager else {}
        env_file = file_config.get("run", {}).get("env_file_abs")
        if env_file:
            load_dotenv(env_file)
        project_root = manager.config_dir if manager else os.getcwd()
        setup_logging(config=file_config, project_root=project_root, level_override=args.log_level)
        run = RunConfig.from_sources(file_config, _overrides(args))
        return COMMANDS[args.command](args, run)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except CompatibilityError as e:
        logger.error(f"Checkpoint does not match dataset: {e}")
        return EXIT_MISMATCH
    except (TrainingAbortedError, NonFiniteError) as e:
        logger.error(f"Training aborted: {e}")
        return EXIT_ABORTED
    except (OSError, ManifestError, CheckpointError) as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except TransForSegError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
