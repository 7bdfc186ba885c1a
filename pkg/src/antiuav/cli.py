"""Command-line entry point: ``antiuav eval | simulate | check``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import sys
from pathlib import Path

from antiuav import checks
from antiuav.errors import InvalidInputError
from antiuav.formats import dump_config, load_annotations, load_config, load_predictions
from antiuav.metric import (
    ATTRIBUTE_TAGS,
    EvalConfig,
    SequenceResult,
    attribute_slice,
    evaluate_dataset,
    evaluate_sequence,
)
from antiuav.presets import PRESETS
from antiuav.simulator import run_experiment

log = logging.getLogger("antiuav")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INVALID = 2


def _fmt(value: float) -> str:
    # Locale-independent fixed formatting.
    return f"{value:.6f}"


def _result_row(name: str, r: SequenceResult) -> str:
    return (
        f"{name:<24} {r.num_frames:>7d} {r.num_visible:>7d} {r.num_failures:>8d} "
        f"{_fmt(r.accuracy_term):>10} {_fmt(r.penalty_term):>10} {_fmt(r.acc):>10}"
    )


HEADER = f"{'sequence':<24} {'frames':>7} {'visible':>7} {'failures':>8} {'accuracy':>10} {'penalty':>10} {'acc':>10}"


def cmd_eval(args: argparse.Namespace, out) -> int:
    config = EvalConfig(args.alpha, args.beta)
    annotations = load_annotations(args.annotations)
    predictions = load_predictions(args.predictions)
    if not predictions:
        print(f"error: no sequences in {args.predictions}", file=sys.stderr)
        return EXIT_INVALID
    if not annotations:
        print(f"error: no sequences in {args.annotations}", file=sys.stderr)
        return EXIT_INVALID
    by_id = {p.sequence_id: p for p in predictions}
    missing = [a.sequence_id for a in annotations if a.sequence_id not in by_id]
    if missing:
        print(f"error: no predictions for sequence(s) {', '.join(missing)}", file=sys.stderr)
        return EXIT_INVALID
    extra = sorted(set(by_id) - {a.sequence_id for a in annotations})
    if extra:
        print(f"error: predictions for unknown sequence(s) {', '.join(extra)}", file=sys.stderr)
        return EXIT_INVALID
    for seq in annotations:
        n_pred = len(by_id[seq.sequence_id].frames)
        if n_pred != len(seq.frames):
            print(
                f"error: sequence {seq.sequence_id!r} has {len(seq.frames)} annotated frames "
                f"but {n_pred} predictions",
                file=sys.stderr,
            )
            return EXIT_INVALID

    results = []
    print(HEADER, file=out)
    for seq in annotations:
        r = evaluate_sequence(seq.frames, by_id[seq.sequence_id].frames, config)
        results.append(r)
        print(_result_row(seq.sequence_id, r), file=out)
    mean = evaluate_dataset(results, frame_weighted=args.frame_weighted)
    how = "frame-weighted" if args.frame_weighted else "per-sequence mean"
    print(f"dataset Acc {_fmt(mean)} ({len(results)} sequences, {how}; alpha={args.alpha:g}, beta={args.beta:g})", file=out)

    for tag in args.attribute or ():
        print(f"\nattribute {tag}", file=out)
        print(HEADER, file=out)
        sliced = []
        for seq in annotations:
            r = attribute_slice(seq.frames, by_id[seq.sequence_id].frames, tag, config)
            if not r:
                print(f"{seq.sequence_id:<24} (no frames tagged {tag})", file=out)
                continue
            sliced.append(r)
            print(_result_row(seq.sequence_id, r), file=out)
        if sliced:
            print(f"attribute {tag} Acc {_fmt(evaluate_dataset(sliced, args.frame_weighted))} ({len(sliced)} sequences)", file=out)
        else:
            print(f"attribute {tag}: no tagged frames", file=out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, out) -> int:
    if (args.config is None) == (args.preset is None):
        print("error: give exactly one of --config or --preset", file=sys.stderr)
        return EXIT_INVALID
    config = load_config(args.config) if args.config else PRESETS[args.preset]()

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.theta_eh is not None:
        overrides["theta_eh"] = args.theta_eh
    if args.theta_det is not None:
        overrides["theta_det"] = args.theta_det
    if args.alpha is not None or args.beta is not None:
        overrides["metric"] = EvalConfig(
            config.metric.alpha if args.alpha is None else args.alpha,
            config.metric.beta if args.beta is None else args.beta,
        )
    config = dataclasses.replace(config, **overrides)
    arms = config.resolved_arms()
    config = dataclasses.replace(config, arms=arms)

    log.info("running %d trials x %d arms (seed %d)", config.trials, len(arms), config.seed)
    result = run_experiment(
        config.scenario, config.detector, config.tracker, arms, config.trials, config.seed, config.metric, args.workers
    )

    summary = io.StringIO(newline="")
    writer = csv.writer(summary, lineterminator="\n")
    writer.writerow(["arm", "mode", "theta_eh", "theta_det", "trials", "mean_acc", "std_acc", "sem_acc"])
    for s in result.summaries:
        writer.writerow(
            [s.arm.label, s.arm.mode.value, f"{s.arm.theta_eh:g}", f"{s.arm.theta_det:g}", s.trials,
             _fmt(s.mean), _fmt(s.std), _fmt(s.sem)]
        )
    trials = io.StringIO(newline="")
    writer = csv.writer(trials, lineterminator="\n")
    writer.writerow(["trial", "seed", "arm", "acc", "accuracy_term", "penalty_term"])
    for r in result.records:
        writer.writerow([r.trial, r.seed, r.arm, repr(r.acc), repr(r.accuracy_term), repr(r.penalty_term)])

    # Single writer, after the run.
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.csv").write_text(summary.getvalue(), encoding="utf-8")
    (out_dir / "trials.csv").write_text(trials.getvalue(), encoding="utf-8")
    (out_dir / "resolved_config.json").write_text(dump_config(config), encoding="utf-8")

    for s in result.summaries:
        print(f"{s.arm.label:<12} {_fmt(s.mean)} ± {_fmt(s.std)}  (sem {_fmt(s.sem)}, n={s.trials})", file=out)
    print(f"wrote {out_dir / 'summary.csv'}, {out_dir / 'trials.csv'}, {out_dir / 'resolved_config.json'}", file=out)
    return EXIT_OK


def cmd_check(args: argparse.Namespace, out) -> int:
    targets = sorted(checks.CHECKS) if args.target == "all" else [args.target]
    status = EXIT_OK
    for name in targets:
        kwargs = {"seed": args.seed}
        if args.cases is not None:
            kwargs["cases"] = args.cases
        report = checks.CHECKS[name](**kwargs)
        print(report.summary(), file=out)
        for seed, message in report.failures[:20]:
            print(f"  failing case seed={seed}: {message}", file=out)
        if len(report.failures) > 20:
            print(f"  ... {len(report.failures) - 20} more", file=out)
        if not report.ok:
            status = EXIT_FAIL
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="antiuav", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="score predictions against annotations with Acc")
    p.add_argument("annotations", help="annotation file or directory of *.jsonl files")
    p.add_argument("predictions", help="prediction file or directory of *.jsonl files")
    p.add_argument("--alpha", type=float, default=0.2, help="penalty weight (default 0.2)")
    p.add_argument("--beta", type=float, default=0.3, help="penalty exponent (default 0.3)")
    p.add_argument("--attribute", action="append", choices=sorted(ATTRIBUTE_TAGS),
                   help="also report the slice of frames carrying this tag (repeatable)")
    p.add_argument("--frame-weighted", action="store_true", help="weight the dataset mean by frame count")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="run a seeded Monte-Carlo experiment")
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--theta-eh", type=float, help="override the uncertainty threshold (config default 0.2)")
    p.add_argument("--theta-det", type=float, help="override the detection threshold (config default 0.5)")
    p.add_argument("--alpha", type=float, help="override the penalty weight")
    p.add_argument("--beta", type=float, help="override the penalty exponent")
    p.add_argument("--workers", type=int, default=1, help="worker processes for trials")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="run a module's property suite")
    p.add_argument("target", choices=sorted(checks.CHECKS) + ["all"])
    p.add_argument("--cases", type=int, help="number of random cases (module default if omitted)")
    p.add_argument("--seed", type=int, default=0, help="first case seed")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, out)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
