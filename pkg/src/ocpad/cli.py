"""Command-line entry point: ``ocpad {synth,train,score,evaluate,sweep}``.

Every command prints a ``key=value`` summary on standard output and writes
its files only after all computation has finished.  Exit codes: 0 success,
2 invalid configuration, 3 unreadable or malformed input/output files,
4 training failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .dataset import (
    ATTACK,
    DEV,
    REAL,
    SPLIT_NAMES,
    TEST,
    SynthConfig,
    generate_synthetic,
    load_features,
    save_features,
)
from .evaluation import (
    DEFAULT_FRACTIONS,
    FRAME,
    GLOBAL,
    PER_CLIENT,
    VIDEO,
    evaluate,
    fraction_label,
    fuse_per_video,
    sample_size_sweep,
    score_split,
    write_report,
    write_roc,
)
from .exceptions import (
    ModelFormatError,
    OcpadError,
    ParseError,
    TrainingError,
    ValidationError,
)
from .registry import DETECTORS, MODES, DetectorSpec, load_registry, save_registry, train_registry

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TRAINING = 4

# detector-specific flags: dest -> (detector kind, estimator parameter)
_KIND_FLAGS = {
    "nu": ("ocsvm", "nu"),
    "gamma": ("ocsvm", "gamma"),
    "fraction": ("ocsrc", "fraction"),
    "variance_fraction": ("md", "variance_fraction"),
}


class ConfigError(Exception):
    """Invalid combination of command-line options."""


def _fraction(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {text}")
    return v


def _fraction_list(text):
    try:
        return [_fraction(part) for part in text.split(",")]
    except argparse.ArgumentTypeError as exc:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}: {exc}") from None


def _gamma(text):
    if text == "auto":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma must be 'auto' or a positive number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"gamma must be positive, got {text}")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _add_detector_flags(p):
    g = p.add_argument_group("detector")
    g.add_argument("--detector", choices=sorted(DETECTORS), help="detector kind")
    g.add_argument("--mode", choices=MODES, default="spe",
                   help="spe: one model per client from enrolment data; ind: one pooled model")
    g.add_argument("--nu", type=float, help="OCSVM outlier-fraction bound (default 0.05)")
    g.add_argument("--gamma", type=_gamma, help="OCSVM RBF gamma, 'auto' for the median heuristic")
    g.add_argument("--fraction", type=_fraction,
                   help="OCSRC share of training vectors kept as dictionary atoms (default 0.1)")
    g.add_argument("--variance-fraction", type=_fraction,
                   help="MD share of variance retained by PCA (default 0.99)")
    g.add_argument("--train-fraction", type=_fraction, default=1.0,
                   help="share of each client's training vectors used (default 1)")
    g.add_argument("--jobs", type=_positive_int, default=1, help="concurrent per-client training tasks")


def _add_eval_flags(p):
    p.add_argument("--granularity", choices=(FRAME, VIDEO), default=FRAME)
    p.add_argument("--thresholds", choices=(GLOBAL, PER_CLIENT), default=GLOBAL)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ocpad", description="Client-specific one-class presentation-attack detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic feature file")
    p.add_argument("--clients", type=int, default=20)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--frames-per-video", type=int, default=20)
    p.add_argument("--videos", type=int, default=10, help="videos per client per split and label")
    p.add_argument("--client-spread", type=float, default=5.0)
    p.add_argument("--real-noise", type=float, default=1.0)
    p.add_argument("--attack-shift", type=float, default=3.0)
    p.add_argument("--attack-types", default="print,mobile,highdef", help="comma-separated names")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="feature file to write")

    p = sub.add_parser("train", help="train a model registry")
    p.add_argument("--features", required=True)
    _add_detector_flags(p)
    p.add_argument("-o", "--output", required=True, help="model file to write")

    p = sub.add_parser("score", help="score one split against a model registry")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=(DEV, TEST), default=TEST)
    p.add_argument("--granularity", choices=(FRAME, VIDEO), default=FRAME)
    p.add_argument("-o", "--output", required=True, help="CSV of scores to write")

    p = sub.add_parser("evaluate", help="compute EER/HTER/AUC on dev and test")
    p.add_argument("--features", required=True)
    p.add_argument("--model", help="trained model file; omit to train from --detector options")
    _add_detector_flags(p)
    _add_eval_flags(p)
    p.add_argument("-o", "--output", required=True, help="report file to write (JSON)")
    p.add_argument("--roc", help="ROC file to write (default: report path with .roc.csv)")

    p = sub.add_parser("sweep", help="retrain and evaluate at several training fractions")
    p.add_argument("--features", required=True)
    _add_detector_flags(p)
    _add_eval_flags(p)
    p.add_argument("--fractions", type=_fraction_list,
                   help="comma-separated training fractions (default 1/100,1/75,1/50,1/20,1/10,1/5,1)")
    p.add_argument("-o", "--output", required=True, help="directory for reports and summary")
    return parser


# ------------------------------------------------------------------ helpers

def _detector_spec(args, train_fraction=None) -> DetectorSpec:
    if args.detector is None:
        raise ConfigError("--detector is required")
    params = {}
    for dest, (kind, param) in _KIND_FLAGS.items():
        value = getattr(args, dest)
        if value is None:
            continue
        if kind != args.detector:
            flag = "--" + dest.replace("_", "-")
            raise ConfigError(f"{flag} applies to --detector {kind}, not {args.detector}")
        params[param] = value
    tf = args.train_fraction if train_fraction is None else train_fraction
    return DetectorSpec(args.detector, args.mode, params, tf)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _emit(lines):
    sys.stdout.write("".join(f"{line}\n" for line in lines))


# ----------------------------------------------------------------- commands

def cmd_synth(args):
    types = tuple(t for t in args.attack_types.split(",") if t)
    cfg = SynthConfig(
        n_clients=args.clients,
        dim=args.dim,
        frames_per_video=args.frames_per_video,
        videos_per_split={name: args.videos for name in SPLIT_NAMES},
        client_spread=args.client_spread,
        real_noise=args.real_noise,
        attack_shift=args.attack_shift,
        attack_types=types,
        seed=args.seed,
    )
    splits = generate_synthetic(cfg)
    save_features(splits, args.output)
    _emit([f"records.{name}={len(splits[name])}" for name in SPLIT_NAMES])


def cmd_train(args):
    spec = _detector_spec(args)
    splits = load_features(args.features)
    reg = train_registry(spec, splits, jobs=args.jobs)
    save_registry(reg, args.output)
    lines = [f"detector={spec.kind}", f"mode={spec.mode}", f"models={len(reg.train_sizes)}"]
    lines += [f"train_size.{k}={v}" for k, v in sorted(reg.train_sizes.items())]
    _emit(lines)


def cmd_score(args):
    splits = load_features(args.features)
    reg = load_registry(args.model)
    scores = score_split(reg, splits[args.split])
    if args.granularity == VIDEO:
        scores = fuse_per_video(scores)
    rows = ["claimed_id,label,attack_type,video_id,score"]
    rows += [f"{it.claimed_id},{it.label},{it.attack_type},{it.video_id},{it.score!r}"
             for it in scores.items]
    _write_text(args.output, "\n".join(rows) + "\n")
    counts = scores.counts()
    _emit([f"split={args.split}", f"granularity={args.granularity}",
           f"items.{REAL}={counts[REAL]}", f"items.{ATTACK}={counts[ATTACK]}"])


def _roc_path(report_path):
    p = Path(report_path)
    return str(p.with_suffix("")) + ".roc.csv"


def cmd_evaluate(args):
    if args.model is not None:
        if args.detector is not None or any(getattr(args, d) is not None for d in _KIND_FLAGS):
            raise ConfigError("--model cannot be combined with detector options")
        reg = load_registry(args.model)
        splits = load_features(args.features)
    else:
        spec = _detector_spec(args)
        splits = load_features(args.features)
        reg = train_registry(spec, splits, jobs=args.jobs)
    report = evaluate(reg, splits, args.thresholds, args.granularity)
    write_report(report, args.output)
    write_roc(report.roc_points, args.roc or _roc_path(args.output))
    _emit(report.summary_lines())


def cmd_sweep(args):
    spec = _detector_spec(args)
    fractions = args.fractions or list(DEFAULT_FRACTIONS)
    if len(set(fractions)) != len(fractions):
        raise ConfigError("--fractions contains duplicates")
    splits = load_features(args.features)
    reports = sample_size_sweep(spec, splits, fractions, args.thresholds, args.granularity, args.jobs)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    header = "fraction,auc_test,eer_dev" + (",hter_test" if args.thresholds == GLOBAL else "")
    rows = [header]
    lines = [f"reports={len(reports)}"]
    for f, rep in reports.items():
        label = fraction_label(f)
        write_report(rep, out / f"report_{label}.json")
        write_roc(rep.roc_points, out / f"roc_{label}.csv")
        row = f"{f!r},{rep.auc_test!r},{rep.eer_dev!r}"
        if args.thresholds == GLOBAL:
            row += f",{rep.hter_test!r}"
        rows.append(row)
        lines.append(f"auc_test[{label}]={rep.auc_test!r}")
    _write_text(out / "summary.csv", "\n".join(rows) + "\n")
    _emit(lines)


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "score": cmd_score,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"ocpad: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"ocpad: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (OSError, ParseError, ModelFormatError) as exc:
        print(f"ocpad: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, OcpadError, KeyError) as exc:
        print(f"ocpad: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
