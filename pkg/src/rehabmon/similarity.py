"""Pose-similarity scoring between a patient video and a therapist sample.

Each monitored angle's values over a video are histogrammed into a smoothed
distribution. The KL divergence of the patient's distribution from the
sample's is rescaled to a 0..100 score against a per-angle upper bound
calibrated from videos of incorrect poses, and the per-angle scores are
aggregated with the harmonic mean so one bad angle dominates.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import IndeterminateResult, SequenceFormatError
from .kinematics import AngleDef, default_angle_defs, extract_angles
from .pose import PoseSequence

logger = logging.getLogger(__name__)

DEFAULT_BINS = 18
DEFAULT_EPSILON = 1e-6
DEFAULT_DECISION_THRESHOLD = 50.0

# Upper bounds at or below this carry no signal; the angle is excluded.
NON_DISCRIMINATIVE_U = 1e-12

ANGLE_RANGE = (0.0, math.pi)


class NoDistributionError(ValueError):
    """Raised when a histogram is requested for a series with no defined values."""


@dataclass(frozen=True)
class AngleDistribution:
    """Smoothed probability masses over equal-width bins partitioning [0, pi]."""

    masses: np.ndarray
    bins: int = DEFAULT_BINS
    epsilon: float = DEFAULT_EPSILON


def histogram(
    series: np.ndarray, bins: int = DEFAULT_BINS, epsilon: float = DEFAULT_EPSILON
) -> AngleDistribution:
    """Bin one angle's values into a smoothed distribution; NaN values are skipped."""
    series = np.asarray(series, dtype=np.float64)
    defined = series[~np.isnan(series)]
    if defined.size == 0:
        raise NoDistributionError("no defined angle values to histogram")
    counts, _edges = np.histogram(defined, bins=bins, range=ANGLE_RANGE)
    masses = counts / counts.sum()
    masses = (masses + epsilon) / (1.0 + bins * epsilon)
    return AngleDistribution(masses, bins, epsilon)


def kl_divergence(p: AngleDistribution, q: AngleDistribution) -> float:
    """D(P || Q) = sum P(i) * ln(P(i) / Q(i)), in nats."""
    if p.bins != q.bins:
        raise ValueError(f"bin-count mismatch: {p.bins} vs {q.bins}")
    return float(np.sum(p.masses * np.log(p.masses / q.masses)))


def angle_score(d: float, u: float) -> float | None:
    """Rescale a divergence to 0..100 against the calibrated upper bound.

    Returns None when the bound is (numerically) zero: the angle never
    diverged on the calibration set, so it cannot discriminate.
    """
    if d < 0 or u < 0:
        raise ValueError("divergence and upper bound must be >= 0")
    if u <= NON_DISCRIMINATIVE_U or math.isnan(u):
        return None
    return max(100.0 - 100.0 * d / u, 0.0)


def harmonic_mean(scores: "list[float] | tuple[float, ...] | np.ndarray") -> float:
    """n / sum(1/x); any zero score collapses the mean to 0 (continuous limit)."""
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise ValueError("harmonic mean of empty list")
    if (values < 0).any():
        raise ValueError("scores must be >= 0")
    if (values == 0.0).any():
        return 0.0
    return float(values.size / np.sum(1.0 / values))


@dataclass(frozen=True)
class CalibrationProfile:
    """Per-angle KL upper bounds learned from videos of incorrect poses.

    ``bounds`` maps angle name to u in nats; NaN marks angles the sample video
    never defines. Binning parameters are carried so scoring always matches
    the calibration's distribution construction.
    """

    bounds: dict[str, float]
    sample_action_id: str = ""
    calibration_size: int = 0
    bins: int = DEFAULT_BINS
    epsilon: float = DEFAULT_EPSILON

    def to_json(self) -> str:
        doc = {
            "sample_action_id": self.sample_action_id,
            "calibration_size": self.calibration_size,
            "bins": self.bins,
            "epsilon": self.epsilon,
            "bounds": {
                name: (None if math.isnan(u) else u) for name, u in self.bounds.items()
            },
        }
        return json.dumps(doc, separators=(",", ":"), ensure_ascii=True)

    @classmethod
    def from_json(cls, document: bytes | str) -> "CalibrationProfile":
        if isinstance(document, bytes):
            document = document.decode("utf-8")
        try:
            raw = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SequenceFormatError(f"malformed profile: {exc}") from None
        if not isinstance(raw, dict) or not isinstance(raw.get("bounds"), dict):
            raise SequenceFormatError("profile must be an object with a bounds map")
        bounds = {}
        for name, u in raw["bounds"].items():
            if u is None:
                bounds[name] = math.nan
            elif isinstance(u, (int, float)) and not isinstance(u, bool) and u >= 0:
                bounds[name] = float(u)
            else:
                raise SequenceFormatError(f"invalid bound for angle {name!r}")
        return cls(
            bounds=bounds,
            sample_action_id=str(raw.get("sample_action_id", "")),
            calibration_size=int(raw.get("calibration_size", 0)),
            bins=int(raw.get("bins", DEFAULT_BINS)),
            epsilon=float(raw.get("epsilon", DEFAULT_EPSILON)),
        )


def _distributions_by_angle(
    seq: PoseSequence,
    defs: tuple[AngleDef, ...],
    bins: int,
    epsilon: float,
) -> dict[str, AngleDistribution | None]:
    """Histogram per angle; None where the sequence never defines the angle."""
    series = extract_angles(seq, defs)
    out: dict[str, AngleDistribution | None] = {}
    for name, row in zip(series.names, series.values):
        try:
            out[name] = histogram(row, bins, epsilon)
        except NoDistributionError:
            out[name] = None
    return out


def calibrate(
    sample: PoseSequence,
    incorrect: "list[PoseSequence] | tuple[PoseSequence, ...]",
    defs: tuple[AngleDef, ...] | None = None,
    bins: int = DEFAULT_BINS,
    epsilon: float = DEFAULT_EPSILON,
) -> CalibrationProfile:
    """Per angle, u = max KL divergence of any incorrect video from the sample."""
    if not incorrect:
        raise ValueError("calibration set is empty")
    if defs is None:
        defs = default_angle_defs()
    sample_dists = _distributions_by_angle(sample, defs, bins, epsilon)
    bounds = {d.name: 0.0 for d in defs}
    for name, dist in sample_dists.items():
        if dist is None:
            bounds[name] = math.nan
    for video in incorrect:
        video_dists = _distributions_by_angle(video, defs, bins, epsilon)
        for name in bounds:
            sample_dist = sample_dists[name]
            video_dist = video_dists[name]
            if sample_dist is None or video_dist is None:
                continue
            d = kl_divergence(video_dist, sample_dist)
            if d > bounds[name]:
                bounds[name] = d
    profile = CalibrationProfile(
        bounds=bounds,
        sample_action_id=sample.action_id,
        calibration_size=len(incorrect),
        bins=bins,
        epsilon=epsilon,
    )
    excluded = [n for n, u in bounds.items() if math.isnan(u) or u <= NON_DISCRIMINATIVE_U]
    if excluded:
        logger.debug("calibrate: non-discriminative or undefined angles %s", excluded)
    return profile


@dataclass(frozen=True)
class AngleResult:
    """One angle's contribution to a similarity report."""

    name: str
    divergence: float | None
    score: float | None
    included: bool


@dataclass(frozen=True)
class SimilarityReport:
    """Similarity of one patient video against the therapist sample."""

    angles: tuple[AngleResult, ...]
    overall: float
    similar: bool
    threshold: float

    def to_text(self) -> str:
        lines = []
        for a in self.angles:
            if a.included:
                lines.append(f"{a.name:<16} d={a.divergence:.6f}  score={a.score:.2f}")
            else:
                lines.append(f"{a.name:<16} excluded")
        lines.append(f"overall {self.overall:.2f} -> {'similar' if self.similar else 'not-similar'}")
        return "\n".join(lines)


def score_similarity(
    patient: PoseSequence,
    sample: PoseSequence,
    profile: CalibrationProfile,
    defs: tuple[AngleDef, ...] | None = None,
    decision_threshold: float = DEFAULT_DECISION_THRESHOLD,
) -> SimilarityReport:
    """Score a patient video against the sample using a calibration profile.

    Angles are excluded when the profile marks them non-discriminative or when
    either video never defines them; the overall score is the harmonic mean of
    the remaining per-angle scores.
    """
    if defs is None:
        defs = default_angle_defs()
    names = [d.name for d in defs]
    if set(names) != set(profile.bounds):
        raise ValueError("profile angles do not match the angle catalogue")

    patient_dists = _distributions_by_angle(patient, defs, profile.bins, profile.epsilon)
    sample_dists = _distributions_by_angle(sample, defs, profile.bins, profile.epsilon)

    results = []
    included_scores = []
    for name in names:
        u = profile.bounds[name]
        patient_dist = patient_dists[name]
        sample_dist = sample_dists[name]
        if patient_dist is None or sample_dist is None:
            results.append(AngleResult(name, None, None, False))
            continue
        d = kl_divergence(patient_dist, sample_dist)
        score = angle_score(d, u)
        if score is None:
            results.append(AngleResult(name, d, None, False))
            continue
        results.append(AngleResult(name, d, score, True))
        included_scores.append(score)

    if not included_scores:
        raise IndeterminateResult("no discriminative angles to aggregate")
    overall = harmonic_mean(included_scores)
    return SimilarityReport(
        angles=tuple(results),
        overall=overall,
        similar=overall >= decision_threshold,
        threshold=decision_threshold,
    )
