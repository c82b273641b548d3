"""Command-line entry points for the pipeline and the service.

Exit codes: 0 success, 1 validation or parse error, 2 indeterminate pipeline
result, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import IndeterminateResult, SequenceFormatError
from .evaluation import (
    EvaluationGroup,
    LabeledCase,
    hard_accuracy,
    sweep_threshold,
    sweep_to_records,
    sweep_to_text,
)
from .pose import (
    ARCHETYPE_NAMES,
    DEFAULT_AMPLITUDE,
    DEFAULT_PERIOD_FRAMES,
    MotionArchetype,
    PoseSequence,
    generate_synthetic,
    parse_sequence,
    serialize_sequence,
)
from .preprocess import EXTRAPOLATION, OUTLIER_AVERAGE, PreprocessParams, preprocess
from .repetition import PeakParams, SmoothingParams, count_repetitions
from .similarity import CalibrationProfile, calibrate, score_similarity

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INDETERMINATE = 2
EXIT_IO = 3


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_sequence(path: str) -> PoseSequence:
    return parse_sequence(_read_text(path))


def _sequence_paths(directory: str) -> list[str]:
    names = sorted(n for n in os.listdir(directory) if n.endswith(".json"))
    if not names:
        raise SequenceFormatError(f"no .json sequence files in {directory}")
    return [os.path.join(directory, n) for n in names]


def _preprocess_params(args: argparse.Namespace) -> PreprocessParams:
    return PreprocessParams(
        z_threshold=getattr(args, "z_threshold", 3.0),
        displacement_threshold=args.threshold,
    )


def _add_threshold(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--threshold",
        type=float,
        default=0.2,
        help="displacement threshold T for temporal repair (default 0.2)",
    )


def _add_format(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format",
        choices=("text", "tabular"),
        default="text",
        help="human-readable text or tab-separated rows",
    )


def _cmd_score(args: argparse.Namespace) -> int:
    params = _preprocess_params(args)
    sample, _ = preprocess(_load_sequence(args.sample), params)
    patient, _ = preprocess(_load_sequence(args.patient), params)
    if args.profile is not None:
        profile = CalibrationProfile.from_json(_read_text(args.profile))
    else:
        wrong = [
            preprocess(_load_sequence(p), params)[0]
            for p in _sequence_paths(args.calibrate_from)
        ]
        profile = calibrate(sample, wrong)
    report = score_similarity(patient, sample, profile)
    if args.format == "tabular":
        lines = ["angle\tdivergence\tscore\tincluded"]
        for angle in report.angles:
            divergence = "" if angle.divergence is None else f"{angle.divergence:.12g}"
            score = "" if angle.score is None else f"{angle.score:.12g}"
            lines.append(f"{angle.name}\t{divergence}\t{score}\t{angle.included}")
        lines.append(f"overall\t\t{report.overall:.12g}\t{report.similar}")
        print("\n".join(lines))
    else:
        print(report.to_text())
    return EXIT_OK


def _cmd_count(args: argparse.Namespace) -> int:
    params = _preprocess_params(args)
    cleaned, _ = preprocess(_load_sequence(args.sequence), params)
    report = count_repetitions(
        cleaned,
        SmoothingParams(window=args.sg_window, polyorder=args.sg_order),
        PeakParams(max_width=args.max_width, min_snr=args.min_snr),
        include_stationary=args.include_stationary,
    )
    if args.format == "tabular":
        lines = ["keypoint\tcycles\tincluded"]
        for keypoint, cycles in sorted(report.cycle_counts.items()):
            lines.append(f"{keypoint.name}\t{cycles}\t{keypoint in report.included}")
        lines.append(f"repetitions\t{report.repetitions}\t")
        print("\n".join(lines))
    else:
        for keypoint, cycles in sorted(report.cycle_counts.items()):
            print(f"{keypoint.name:>16}: {cycles}")
        print(f"modes: {sorted(report.modes)}")
        print(f"repetitions: {report.repetitions}")
    return EXIT_OK


def _cmd_preprocess(args: argparse.Namespace) -> int:
    params = _preprocess_params(args)
    cleaned, log = preprocess(_load_sequence(args.sequence), params)
    _write_text(args.output, serialize_sequence(cleaned))
    print(
        f"repairs: {log.count(OUTLIER_AVERAGE)} outlier, "
        f"{log.count(EXTRAPOLATION)} extrapolation",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    params = _preprocess_params(args)
    sample, _ = preprocess(_load_sequence(args.sample), params)
    wrong = [
        preprocess(_load_sequence(p), params)[0] for p in _sequence_paths(args.wrong)
    ]
    profile = calibrate(sample, wrong)
    _write_text(args.output, profile.to_json())
    return EXIT_OK


def _cmd_generate(args: argparse.Namespace) -> int:
    archetype = MotionArchetype(
        name=args.archetype,
        repetitions=args.reps,
        amplitude=args.amplitude,
        period_frames=args.period,
        noise_sigma=args.noise,
    )
    seq, truth = generate_synthetic(archetype, fps=args.fps, seed=args.seed)
    _write_text(args.output, serialize_sequence(seq))
    moving = sorted(k.name for k in truth.moving_keypoints)
    print(
        f"generated {args.archetype}: {truth.repetitions} repetitions, "
        f"moving keypoints {', '.join(moving)}",
        file=sys.stderr,
    )
    return EXIT_OK


def _load_manifest(path: str) -> tuple[list[EvaluationGroup], list[list[int]], list[str]]:
    """Read an evaluation manifest; returns groups, per-group truth counts, names.

    Manifest shape:
      {"groups": [{"name": ..., "sample": path, "calibration": [path, ...],
                   "cases": [{"patient": path, "similar": bool,
                              "truth_reps": int (optional)}, ...]}, ...]}
    Paths are resolved relative to the manifest's directory.
    """
    base = os.path.dirname(os.path.abspath(path))
    try:
        manifest = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise SequenceFormatError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(manifest, dict) or not manifest.get("groups"):
        raise SequenceFormatError("manifest must contain a non-empty 'groups' list")

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    groups = []
    truths = []
    names = []
    for entry in manifest["groups"]:
        cases = []
        truth = []
        for case in entry["cases"]:
            cases.append(
                LabeledCase(
                    patient=_load_sequence(resolve(case["patient"])),
                    similar=bool(case["similar"]),
                )
            )
            if "truth_reps" in case:
                truth.append(int(case["truth_reps"]))
        groups.append(
            EvaluationGroup(
                name=entry.get("name", entry["sample"]),
                sample=_load_sequence(resolve(entry["sample"])),
                calibration=tuple(
                    _load_sequence(resolve(p)) for p in entry["calibration"]
                ),
                cases=tuple(cases),
            )
        )
        truths.append(truth)
        names.append(groups[-1].name)
    return groups, truths, names


def _cmd_evaluate(args: argparse.Namespace) -> int:
    groups, truths, names = _load_manifest(args.manifest)
    thresholds = [float(t) for t in args.thresholds.split(",")]
    rows = sweep_threshold(groups, thresholds)
    if args.format == "tabular":
        lines = ["threshold\tprecision\trecall\tf1"]
        for record in sweep_to_records(rows):
            lines.append(
                f"{record['threshold']:.3g}\t{record['precision']:.12g}"
                f"\t{record['recall']:.12g}\t{record['f1']:.12g}"
            )
        print("\n".join(lines))
    else:
        print(sweep_to_text(rows))

    # Repetition accuracy per group, for cases that carry ground truth;
    # counting runs at the first sweep threshold.
    params = PreprocessParams(displacement_threshold=thresholds[0])
    accuracy_lines = []
    for group, truth, name in zip(groups, truths, names):
        if len(truth) != len(group.cases):
            continue
        detected = []
        for case in group.cases:
            cleaned, _ = preprocess(case.patient, params)
            try:
                detected.append(count_repetitions(cleaned).repetitions)
            except IndeterminateResult:
                detected.append(0)
        report = hard_accuracy(detected, truth)
        accuracy_lines.append(
            f"{name}: hard {report.hard_accuracy:.2f} soft {report.soft_accuracy:.2f} "
            f"({report.correct}/{report.total} exact, {report.tolerated}/{report.total} tolerated)"
        )
    if accuracy_lines:
        print()
        print("repetition accuracy:")
        for line in accuracy_lines:
            print(f"  {line}")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .webapp import STORAGE_ENV_VAR, create_app

    storage = args.storage or os.environ.get(STORAGE_ENV_VAR)
    if not storage:
        print(
            f"error: --storage or {STORAGE_ENV_VAR} required",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    uvicorn.run(create_app(storage), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rehabmon",
        description="Skeleton-sequence rehabilitation monitoring toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score a patient video against a sample")
    p.add_argument("--sample", required=True, help="sample sequence file")
    p.add_argument("--patient", required=True, help="patient sequence file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--profile", help="calibration profile file")
    group.add_argument(
        "--calibrate-from",
        help="directory of known-incorrect sequences to calibrate from",
    )
    _add_threshold(p)
    _add_format(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("count", help="count repetitions in a sequence")
    p.add_argument("sequence", help="sequence file")
    p.add_argument("--sg-window", type=int, default=11)
    p.add_argument("--sg-order", type=int, default=3)
    p.add_argument("--max-width", type=int, default=None)
    p.add_argument("--min-snr", type=float, default=1.0)
    p.add_argument("--include-stationary", action="store_true")
    _add_threshold(p)
    _add_format(p)
    p.set_defaults(func=_cmd_count)

    p = sub.add_parser("preprocess", help="repair a sequence and write the result")
    p.add_argument("sequence", help="sequence file")
    p.add_argument("-o", "--output", default=None, help="output file (default stdout)")
    p.add_argument("--z-threshold", type=float, default=3.0)
    _add_threshold(p)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("calibrate", help="build a calibration profile")
    p.add_argument("--sample", required=True, help="sample sequence file")
    p.add_argument("--wrong", required=True, help="directory of incorrect sequences")
    p.add_argument("-o", "--output", default=None, help="output file (default stdout)")
    _add_threshold(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("generate", help="generate a synthetic sequence")
    p.add_argument("--archetype", required=True, choices=ARCHETYPE_NAMES)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--amplitude", type=float, default=DEFAULT_AMPLITUDE)
    p.add_argument("--period", type=int, default=DEFAULT_PERIOD_FRAMES)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fps", type=int, default=10)
    p.add_argument("-o", "--output", default=None, help="output file (default stdout)")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="threshold sweep over a labeled corpus")
    p.add_argument("manifest", help="manifest file listing groups and cases")
    p.add_argument(
        "--thresholds",
        default="0.2,0.5",
        help="comma-separated displacement thresholds (default 0.2,0.5)",
    )
    _add_format(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("serve", help="run the monitoring HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--storage", default=None, help="storage directory")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IndeterminateResult as exc:
        print(f"indeterminate: {exc}", file=sys.stderr)
        return EXIT_INDETERMINATE
    except (SequenceFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
