"""Classification metrics, repetition accuracy, and the threshold sweep.

Precision/recall/F1 summarize the similar-or-not decision over a labeled
corpus. Hard accuracy demands the exact repetition count; soft accuracy also
accepts one extra repetition (never one fewer). The sweep harness replays the
full preprocess -> calibrate -> score pipeline at several displacement
thresholds and tabulates the resulting metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import IndeterminateResult
from .kinematics import AngleDef
from .pose import PoseSequence
from .preprocess import PreprocessParams, preprocess
from .similarity import (
    DEFAULT_BINS,
    DEFAULT_DECISION_THRESHOLD,
    DEFAULT_EPSILON,
    calibrate,
    score_similarity,
)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts of the four prediction/truth combinations."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        for field_name in ("tp", "fp", "fn", "tn"):
            if getattr(self, field_name) < 0:
                raise ValueError(f"{field_name} must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    """Precision, recall, and F1 with a flag for zero-denominator cells.

    Undefined ratios are reported as 0 so that threshold sweeps can cover
    degenerate corners without aborting; `degenerate` records that at least
    one denominator was zero.
    """

    precision: float
    recall: float
    f1: float
    degenerate: bool


@dataclass(frozen=True)
class AccuracyReport:
    """Exact and one-over repetition accuracy over a batch of videos."""

    total: int
    correct: int
    tolerated: int
    hard_accuracy: float
    soft_accuracy: float


def confusion(predicted: list[bool], actual: list[bool]) -> ConfusionMatrix:
    """Tally predictions against truth; positive means "similar"."""
    if len(predicted) != len(actual):
        raise ValueError(
            f"predicted has {len(predicted)} entries, actual has {len(actual)}"
        )
    tp = fp = fn = tn = 0
    for p, a in zip(predicted, actual):
        if p and a:
            tp += 1
        elif p and not a:
            fp += 1
        elif not p and a:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def precision_recall_f1(cm: ConfusionMatrix) -> MetricsReport:
    """P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R); zeros when undefined."""
    degenerate = False
    if cm.tp + cm.fp > 0:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision, degenerate = 0.0, True
    if cm.tp + cm.fn > 0:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1, degenerate = 0.0, True
    return MetricsReport(precision=precision, recall=recall, f1=f1, degenerate=degenerate)


def hard_accuracy(detected: list[int], truth: list[int]) -> AccuracyReport:
    """Fraction of videos whose repetition count is exactly right."""
    return _accuracy(detected, truth)


def soft_accuracy(detected: list[int], truth: list[int]) -> AccuracyReport:
    """Fraction counting a video as right when detected is truth or truth+1.

    The tolerance is one-sided: one repetition too many is accepted, one too
    few is not.
    """
    return _accuracy(detected, truth)


def _accuracy(detected: list[int], truth: list[int]) -> AccuracyReport:
    if len(detected) != len(truth):
        raise ValueError(
            f"detected has {len(detected)} entries, truth has {len(truth)}"
        )
    total = len(detected)
    correct = sum(1 for d, t in zip(detected, truth) if d == t)
    tolerated = sum(1 for d, t in zip(detected, truth) if d == t or d == t + 1)
    return AccuracyReport(
        total=total,
        correct=correct,
        tolerated=tolerated,
        hard_accuracy=correct / total if total else 0.0,
        soft_accuracy=tolerated / total if total else 0.0,
    )


@dataclass(frozen=True)
class LabeledCase:
    """One patient video with its is-similar ground truth."""

    patient: PoseSequence
    similar: bool


@dataclass(frozen=True)
class EvaluationGroup:
    """One action's sample video, calibration set, and labeled cases."""

    name: str
    sample: PoseSequence
    calibration: tuple[PoseSequence, ...]
    cases: tuple[LabeledCase, ...]

    def __post_init__(self) -> None:
        if not self.calibration:
            raise ValueError("calibration set must not be empty")
        if not self.cases:
            raise ValueError("cases must not be empty")


@dataclass(frozen=True)
class SweepRow:
    """Metrics for one displacement threshold."""

    threshold: float
    metrics: MetricsReport
    confusion: ConfusionMatrix


def sweep_threshold(
    groups: list[EvaluationGroup],
    thresholds: list[float],
    angle_defs: list[AngleDef] | None = None,
    bins: int = DEFAULT_BINS,
    epsilon: float = DEFAULT_EPSILON,
    decision_threshold: float = DEFAULT_DECISION_THRESHOLD,
) -> list[SweepRow]:
    """Run preprocess -> calibrate -> score -> classify at each threshold.

    Every sequence (sample, calibration, patient) is preprocessed with the
    row's displacement threshold before scoring, so the table shows how repair
    quality feeds through to classification quality. A patient video whose
    score is indeterminate (no discriminative angles) counts as not similar.
    """
    if not groups:
        raise ValueError("corpus must contain at least one group")
    rows = []
    for threshold in thresholds:
        params = PreprocessParams(displacement_threshold=threshold)
        predicted: list[bool] = []
        actual: list[bool] = []
        for group in groups:
            sample, _ = preprocess(group.sample, params)
            cleaned_calibration = [
                preprocess(video, params)[0] for video in group.calibration
            ]
            profile = calibrate(
                sample,
                cleaned_calibration,
                angle_defs,
                bins=bins,
                epsilon=epsilon,
            )
            for case in group.cases:
                patient, _ = preprocess(case.patient, params)
                try:
                    report = score_similarity(
                        patient,
                        sample,
                        profile,
                        angle_defs,
                        decision_threshold=decision_threshold,
                    )
                    predicted.append(report.similar)
                except IndeterminateResult:
                    predicted.append(False)
                actual.append(case.similar)
        cm = confusion(predicted, actual)
        rows.append(SweepRow(threshold=threshold, metrics=precision_recall_f1(cm), confusion=cm))
    return rows


def sweep_to_text(rows: list[SweepRow]) -> str:
    """Aligned-column rendering of a threshold sweep."""
    lines = [f"{'T':>6}  {'Precision':>9}  {'Recall':>9}  {'F1':>9}"]
    for row in rows:
        lines.append(
            f"{row.threshold:>6.2f}  {row.metrics.precision:>9.3f}  "
            f"{row.metrics.recall:>9.3f}  {row.metrics.f1:>9.3f}"
        )
    return "\n".join(lines)


def sweep_to_records(rows: list[SweepRow]) -> list[dict]:
    """Machine-readable sweep rows."""
    return [
        {
            "threshold": row.threshold,
            "precision": row.metrics.precision,
            "recall": row.metrics.recall,
            "f1": row.metrics.f1,
            "tp": row.confusion.tp,
            "fp": row.confusion.fp,
            "fn": row.confusion.fn,
            "tn": row.confusion.tn,
        }
        for row in rows
    ]
