"""Command line entry point: train, evaluate, ablate, synth, convert-proslu, gradcheck."""
from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from pathlib import Path

from .config import ABLATIONS, TrainConfig
from .data import CorpusError, load_corpus, write_corpus

log = logging.getLogger("prohan")


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {}
    if args.ablation:
        overrides["ablation"] = args.ablation
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    return TrainConfig.from_dict({**cfg.to_dict(), **overrides}) if overrides else cfg


def cmd_train(args) -> int:
    from .train import train, write_outputs

    cfg = _train_config(args)
    corpus = load_corpus(args.data)
    result = train(corpus, cfg)
    result.checkpoint["extra"]["data"] = str(Path(args.data).resolve())
    out = cfg.output_dir or f"runs/{cfg.ablation}-seed{cfg.seed}"
    write_outputs(result, out)
    _emit({"output_dir": out, "best_epoch": result.best_epoch, "dev": result.best_dev.summary()})
    return 0


def cmd_evaluate(args) -> int:
    from .model import ProHAN
    from .train import check_compatible, evaluate

    ckpt = json.loads(Path(args.checkpoint).read_text(encoding="utf-8"))
    data = args.data or ckpt.get("extra", {}).get("data")
    if not data:
        log.error("no --data given and the checkpoint does not record its corpus")
        return 2
    corpus = load_corpus(data)
    model = ProHAN.from_checkpoint(ckpt)
    try:
        check_compatible(model, corpus)
    except ValueError as exc:
        log.error("%s", exc)
        return 2
    mode = args.ablation or ckpt.get("extra", {}).get("ablation", "none")
    samples = corpus.split(args.split)
    if not samples:
        log.error("split %r of %s is empty", args.split, data)
        return 2
    report = evaluate(model, samples, mode)
    body = report.to_dict() if args.predictions else {**report.summary(), "intent_confusion": report.intent_confusion}
    _emit({"split": args.split, "ablation": mode, **body})
    return 0


def cmd_ablate(args) -> int:
    from .train import run_ablations

    base = _train_config(args)
    corpus = load_corpus(args.data)
    results = run_ablations(corpus, base, args.modes, args.seeds)
    _emit({mode: {"dev_overall": accs, "median": statistics.median(accs)} for mode, accs in results.items()})
    return 0


def cmd_synth(args) -> int:
    from .synth import synth_corpus

    corpus = synth_corpus(args.seed, args.count, args.dev, args.test)
    write_corpus(corpus, args.out)
    _emit({"out": args.out, "train": len(corpus.train), "dev": len(corpus.dev), "test": len(corpus.test)})
    return 0


def cmd_convert(args) -> int:
    from .data import convert_proslu

    options = json.loads(Path(args.option_names).read_text(encoding="utf-8")) if args.option_names else None
    _emit(convert_proslu(args.src, args.dst, options))
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, check_model, check_primitives

    report, ok = {"tolerance": TOLERANCE, "seeds": {}}, True
    for seed in range(args.seeds):
        results = check_primitives(seed) + check_model(seed)
        worst = max(results, key=lambda r: r.max_rel_error)
        failed = [r.name for r in results if not r.ok]
        ok = ok and not failed
        report["seeds"][seed] = {"worst": worst.name, "max_rel_error": worst.max_rel_error, "failed": failed}
    report["passed"] = ok
    _emit(report)
    return 0 if ok else 1


def _add_train_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="directory holding train/dev[/test].jsonl")
    p.add_argument("--config", help="JSON training config; defaults are used when omitted")
    p.add_argument("--ablation", choices=ABLATIONS)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prohan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and keep the dev-best checkpoint")
    _add_train_overrides(p)
    p.add_argument("--out", help="output directory for checkpoint.json and report.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "dev", "test"), default="dev")
    p.add_argument("--data", help="corpus directory; defaults to the one recorded at training time")
    p.add_argument("--ablation", choices=ABLATIONS, help="graph mode; defaults to the training mode")
    p.add_argument("--predictions", action="store_true", help="include per-sample predictions")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train every (mode, seed) pair and report dev accuracy")
    _add_train_overrides(p)
    p.add_argument("--modes", nargs="+", choices=ABLATIONS,
                   default=["none", "drop-intra", "drop-inter", "drop-utterance"])
    p.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write a deterministic synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=50, help="train samples")
    p.add_argument("--dev", type=int, default=20)
    p.add_argument("--test", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert-proslu", help="convert upstream ProSLU json files to jsonl")
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--option-names", help="JSON map from UP category to its option names")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive and the model loss")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CorpusError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
