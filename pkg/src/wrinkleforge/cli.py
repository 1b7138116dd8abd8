"""Command-line entry point wiring all pipelines.

Subcommands: synth, gen-weak-labels, fuse, agreement, pretrain, finetune,
experiment, evaluate, validate. Exit codes: 0 ok, 1 usage error, 2 data
error, 3 runtime failure. Commands refuse to overwrite existing outputs
unless --force is given.

Seed precedence: an explicit --seed flag beats the WRINKLEFORGE_SEED
environment variable, which beats the seed stored in a config/spec file.
"""

from __future__ import annotations

import argparse
import difflib
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import fusion, metrics, synthcorpus, texture, trainer
from .config import load_config
from .errors import WrinkleforgeError
from .image_io import BinaryMask, load_mask, save_mask
from .micronet import load_checkpoint

SUBCOMMANDS = ("synth", "gen-weak-labels", "fuse", "agreement", "pretrain",
               "finetune", "experiment", "evaluate", "validate")


@dataclass(frozen=True)
class CommandResult:
    exit_code: int          # 0 ok, 1 usage, 2 data error, 3 runtime failure
    report_path: Path | None = None


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _resolve_seed(flag_seed: int | None, file_seed: int) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get("WRINKLEFORGE_SEED")
    if env is not None:
        return int(env)
    return file_seed


def _refuse_existing(path: Path, force: bool, what: str) -> None:
    if force:
        return
    if path.is_file() or (path.is_dir() and any(path.iterdir())):
        raise WrinkleforgeError(
            f"{what} already exists at {path}; pass --force to overwrite")


def _write_report(report: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


def build_parser() -> _Parser:
    parser = _Parser(prog="wrinkleforge",
                     description="Facial wrinkle segmentation toolkit: weak-label "
                                 "generation, annotator fusion, two-stage training, "
                                 "and evaluation.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic wrinkle corpus")
    p.add_argument("--spec", type=Path, help="SynthSpec JSON (defaults apply if omitted)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, help="override sample count")
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("gen-weak-labels", help="batch texture-map weak labels")
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--masks", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--sigma", type=float, default=texture.DEFAULT_SIGMA)
    p.add_argument("--ksize", type=int, default=texture.DEFAULT_KERNEL_SIZE)
    p.add_argument("--jobs", type=int, default=os.cpu_count())
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("fuse", help="majority-vote annotator masks into ground truth")
    p.add_argument("--annotations", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--threshold", type=int, default=2)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("agreement", help="inter-rater agreement report")
    p.add_argument("--annotations", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("pretrain", help="weakly supervised pretraining stage")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("finetune", help="supervised finetuning stage")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--init", type=Path, help="pretraining checkpoint to transfer from")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("experiment", help="pretrain + the four-row comparison table")
    p.add_argument("--config", type=Path, required=True,
                   help='JSON {"pretrain": {...}, "finetune": {...}}')
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("validate", help="check a corpus directory for violations")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--report", type=Path)
    return parser


def _cmd_synth(args) -> CommandResult:
    if args.spec is not None:
        spec = synthcorpus.SynthSpec.from_dict(json.loads(args.spec.read_text()))
    else:
        spec = synthcorpus.SynthSpec()
    if args.count is not None:
        spec = replace(spec, count=args.count)
    spec = replace(spec, seed=_resolve_seed(args.seed, spec.seed))
    _refuse_existing(args.out / "manifest.json", args.force, "corpus manifest")
    manifest = synthcorpus.generate(spec, args.out)
    print(f"generated {manifest['count']} samples of size {manifest['size']} "
          f"under {args.out}")
    return CommandResult(0, args.out / "manifest.json")


def _cmd_gen_weak_labels(args) -> CommandResult:
    _refuse_existing(args.out, args.force, "weak-label directory")
    kernel = texture.make_gaussian(args.ksize, args.sigma)
    report = texture.batch_weak_labels(args.images, args.masks, args.out, kernel,
                                       jobs=args.jobs)
    report["kernel"] = {"size": args.ksize, "sigma": args.sigma}
    path = _write_report(report, args.out / "report.json")
    print(f"processed {report['processed']} images, {len(report['failed'])} failures")
    return CommandResult(0 if not report["failed"] else 2, path)


def _load_annotation_dirs(root: Path) -> tuple[list[str], list[str]]:
    annotators = sorted(p.name for p in root.iterdir() if p.is_dir())
    if len(annotators) < 2:
        raise WrinkleforgeError(f"{root} must hold at least 2 annotator directories")
    ids = sorted(p.stem for p in (root / annotators[0]).glob("*.png"))
    if not ids:
        raise WrinkleforgeError(f"{root / annotators[0]} holds no masks")
    return annotators, ids


def _cmd_fuse(args) -> CommandResult:
    annotators, ids = _load_annotation_dirs(args.annotations)
    _refuse_existing(args.out, args.force, "fused-mask directory")
    args.out.mkdir(parents=True, exist_ok=True)
    fused, failed = 0, []
    for image_id in ids:
        try:
            masks = [load_mask(args.annotations / a / f"{image_id}.png")
                     for a in annotators]
            combined = fusion.majority_vote(
                fusion.AnnotationSet(tuple(annotators), tuple(masks)),
                threshold=args.threshold)
            save_mask(combined, args.out / f"{image_id}.png")
            fused += 1
        except WrinkleforgeError as e:
            failed.append({"id": image_id, "reason": type(e).__name__, "detail": str(e)})
    report = {"fused": fused, "threshold": args.threshold, "failed": failed}
    path = _write_report(report, args.out / "report.json")
    print(f"fused {fused} masks at threshold {args.threshold}, "
          f"{len(failed)} failures")
    return CommandResult(0 if not failed else 2, path)


def _cmd_agreement(args) -> CommandResult:
    _refuse_existing(args.report, args.force, "agreement report")
    annotators, ids = _load_annotation_dirs(args.annotations)
    # one tall mask per annotator: per-pair statistics over all pixels of the
    # corpus (per-image Pearson would be undefined on wrinkle-free images)
    stacked = []
    for a in annotators:
        planes = [load_mask(args.annotations / a / f"{image_id}.png").data
                  for image_id in ids]
        stacked.append(BinaryMask(np.concatenate([p.ravel() for p in planes])[None, :]))
    report_obj = fusion.agreement(fusion.AnnotationSet(tuple(annotators), tuple(stacked)))
    report = {"images": len(ids), "annotators": annotators, **report_obj.to_dict()}
    path = _write_report(report, args.report)
    print(f"average jaccard {report['average_jaccard']:.4f}, "
          f"average pearson {report['average_pearson']:.4f} over {len(ids)} images")
    return CommandResult(0, path)


def _cmd_pretrain(args) -> CommandResult:
    config = load_config(args.config)
    config = config.with_seed(_resolve_seed(args.seed, config.seed))
    _refuse_existing(args.out / "checkpoint.wrnk", args.force, "checkpoint")
    ckpt = trainer.pretrain(config, args.out)
    print(f"pretraining done; best epoch {ckpt.epoch}, "
          f"checkpoint at {args.out / 'checkpoint.wrnk'}")
    return CommandResult(0, args.out / "journal.jsonl")


def _cmd_finetune(args) -> CommandResult:
    config = load_config(args.config)
    config = config.with_seed(_resolve_seed(args.seed, config.seed))
    _refuse_existing(args.out / "checkpoint.wrnk", args.force, "checkpoint")
    init = load_checkpoint(args.init) if args.init else None
    ckpt = trainer.finetune(config, init, args.out, force=args.force)
    print(f"finetuning done; best epoch {ckpt.epoch}, "
          f"checkpoint at {args.out / 'checkpoint.wrnk'}")
    return CommandResult(0, args.out / "journal.jsonl")


def _cmd_experiment(args) -> CommandResult:
    pair = json.loads(args.config.read_text())
    from .config import TrainConfig
    pre_cfg = TrainConfig.from_dict(pair["pretrain"])
    ft_cfg = TrainConfig.from_dict(pair["finetune"])
    if args.seed is not None or os.environ.get("WRINKLEFORGE_SEED") is not None:
        seed = _resolve_seed(args.seed, pre_cfg.seed)
        pre_cfg, ft_cfg = pre_cfg.with_seed(seed), ft_cfg.with_seed(seed)
    _refuse_existing(args.out / "report.json", args.force, "experiment report")
    report = trainer.run_experiment(pre_cfg, ft_cfg, args.out)
    print("test JSI by row:")
    for name in trainer.EXPERIMENT_ROWS:
        print(f"  {name:20s} {report['rows'][name]['jsi']:.4f}")
    return CommandResult(0, args.out / "report.json")


def _cmd_evaluate(args) -> CommandResult:
    _refuse_existing(args.report, args.force, "evaluation report")
    ids = sorted(p.stem for p in args.pred.glob("*.png"))
    if not ids:
        raise WrinkleforgeError(f"{args.pred} holds no predictions")
    per_image = {}
    pairs = []
    for image_id in ids:
        pred = load_mask(args.pred / f"{image_id}.png")
        truth = load_mask(args.truth / f"{image_id}.png")
        pairs.append((pred, truth))
        per_image[image_id] = metrics.evaluate(pred, truth).to_dict()
    aggregate = metrics.evaluate_dataset(pairs).to_dict()
    report = {"aggregate": aggregate, "per_image": per_image}
    path = _write_report(report, args.report)
    print(f"aggregate over {len(ids)} images: jsi {aggregate['jsi']:.4f}, "
          f"f1 {aggregate['f1']:.4f}, accuracy {aggregate['accuracy']:.4f}")
    return CommandResult(0, path)


def _cmd_validate(args) -> CommandResult:
    report = synthcorpus.validate(args.corpus)
    path = _write_report(report, args.report) if args.report else None
    print(f"checked {report['checked']} samples, "
          f"{len(report['violations'])} violations")
    for v in report["violations"][:20]:
        print(f"  {v['id']}: {v['kind']}: {v['detail']}")
    return CommandResult(0 if not report["violations"] else 2, path)


_HANDLERS = {
    "synth": _cmd_synth,
    "gen-weak-labels": _cmd_gen_weak_labels,
    "fuse": _cmd_fuse,
    "agreement": _cmd_agreement,
    "pretrain": _cmd_pretrain,
    "finetune": _cmd_finetune,
    "experiment": _cmd_experiment,
    "evaluate": _cmd_evaluate,
    "validate": _cmd_validate,
}


def dispatch(argv: list[str]) -> CommandResult:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        bad = next((a for a in argv if not a.startswith("-")), "")
        close = difflib.get_close_matches(bad, SUBCOMMANDS, n=1)
        if close:
            print(f"did you mean '{close[0]}'?", file=sys.stderr)
        return CommandResult(1)
    except SystemExit as e:   # argparse --help
        return CommandResult(int(e.code or 0))
    if args.command is None:
        parser.print_help()
        return CommandResult(1)
    try:
        return _HANDLERS[args.command](args)
    except WrinkleforgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return CommandResult(2)
    except Exception as e:  # noqa: BLE001 - runtime failures map to exit 3
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return CommandResult(3)


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]).exit_code)


if __name__ == "__main__":
    main()
