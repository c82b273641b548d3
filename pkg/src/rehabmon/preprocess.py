"""Repair of incorrect keypoint coordinates in skeleton sequences.

Two stages run in order. First, per-keypoint displacement outliers (population
|z| above a threshold) are replaced by the average of the neighboring frames.
Second, each remaining large displacement is classified against the pattern of
the three prior and three following displacements; patterns that match neither
a motion start, a motion finish, nor sustained motion mark the frame as
incorrect, and the coordinates are linearly extrapolated from the two frames
before it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import SequenceFormatError
from .pose import KEYPOINT_COUNT, KeypointId, PoseSequence

logger = logging.getLogger(__name__)

# Displacements examined on each side of a large displacement.
CONTEXT_WINDOW = 3

# A context displacement below this fraction of the large threshold is
# definitely small; one above the threshold is definitely large; values in
# between are borderline and veto no motion pattern. Without the band, noise
# dips just below the threshold during genuine motion break the all-large
# patterns and trigger extrapolations that amplify the noise.
HYSTERESIS_FRACTION = 0.5

# Lower bound on the large-displacement threshold, in pixels, applied to
# keypoints whose displacements are mostly jitter-scale (bulk quantile at or
# below the floor). For such a keypoint a handful of corrupt frames can
# inflate M_k until T * M_k lands inside the jitter band, where every frame
# flags as large and extrapolation repairs compound into spurious drift;
# flooring the threshold keeps jitter out of the classification while the
# corrupt displacements, tens of pixels high, still flag. Keypoints with
# genuine motion keep the relative threshold untouched, since flooring it
# would push the threshold into their motion band instead.
NOISE_FLOOR_PX = 12.0

# Quantile of a keypoint's displacements used to judge whether it is
# jitter-dominated; robust to the few elevated steps corruption introduces.
BULK_QUANTILE = 0.9

OUTLIER_AVERAGE = "outlier_average"
EXTRAPOLATION = "extrapolation"


@dataclass(frozen=True)
class PreprocessParams:
    """Tunables for both repair stages.

    ``displacement_threshold`` is the fraction T of a keypoint's maximum
    displacement above which a displacement counts as large; 0.2 is the
    best-performing setting on the reference corpus.
    """

    z_threshold: float = 3.0
    displacement_threshold: float = 0.2
    window: int = CONTEXT_WINDOW
    noise_floor: float = NOISE_FLOOR_PX

    def __post_init__(self) -> None:
        if not self.z_threshold > 0:
            raise ValueError("z_threshold must be positive")
        if not 0.0 < self.displacement_threshold <= 1.0:
            raise ValueError("displacement_threshold must be in (0, 1]")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be nonnegative")


@dataclass(frozen=True)
class RepairEntry:
    """One repaired coordinate pair."""

    frame: int
    keypoint: KeypointId
    method: str
    old: tuple[float, float]
    new: tuple[float, float]


@dataclass(frozen=True)
class RepairLog:
    """Ordered record of every repair applied to a sequence."""

    entries: tuple[RepairEntry, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def count(self, method: str) -> int:
        return sum(1 for e in self.entries if e.method == method)

    def frames_for(self, method: str | None = None) -> set[tuple[int, KeypointId]]:
        """(frame, keypoint) pairs touched, optionally limited to one method."""
        return {
            (e.frame, e.keypoint)
            for e in self.entries
            if method is None or e.method == method
        }

    def apply_to(self, seq: PoseSequence) -> PoseSequence:
        """Replay the log over a sequence, reproducing the repaired output."""
        coords = seq.to_array()
        for entry in self.entries:
            coords[entry.frame, entry.keypoint, :] = entry.new
        return seq.with_coords(coords)

    def to_text(self) -> str:
        """One line per repair, for audit output."""
        lines = []
        for e in self.entries:
            lines.append(
                f"frame {e.frame} {e.keypoint.name} {e.method} "
                f"({e.old[0]:.3f}, {e.old[1]:.3f}) -> ({e.new[0]:.3f}, {e.new[1]:.3f})"
            )
        return "\n".join(lines)


def displacements(seq: PoseSequence) -> np.ndarray:
    """Per-keypoint Euclidean displacement between consecutive frames.

    Returns an array of shape (17, N-1); column j is the displacement between
    frames j and j+1, i.e. the displacement whose primary frame is j+1.
    """
    if len(seq) < 2:
        raise SequenceFormatError("displacements need at least 2 frames")
    coords = seq.to_array()
    return _displacement_table(coords)


def _displacement_table(coords: np.ndarray) -> np.ndarray:
    steps = np.diff(coords, axis=0)
    return np.linalg.norm(steps, axis=2).T


def max_displacements(table: np.ndarray) -> np.ndarray:
    """Per-keypoint maximum displacement M_k over the whole video."""
    table = np.asarray(table)
    if table.size == 0:
        raise ValueError("empty displacement table")
    return table.max(axis=1)


def remove_outliers(
    seq: PoseSequence, params: PreprocessParams = PreprocessParams()
) -> tuple[PoseSequence, RepairLog]:
    """Replace coordinates behind displacement outliers (population |z| > threshold).

    Z-scores are computed once from the original displacement table. Outliers
    are repaired in ascending frame order; the primary frame's coordinates
    become the average of frames t-1 and t+1 (current values, so consecutive
    outliers chain), or a copy of frame t-1 when t is the final frame.
    """
    coords = seq.to_array()
    table = _displacement_table(coords)
    means = table.mean(axis=1, keepdims=True)
    stds = table.std(axis=1, keepdims=True)
    entries: list[RepairEntry] = []

    for k in range(KEYPOINT_COUNT):
        sigma = stds[k, 0]
        if sigma == 0.0:
            continue
        z = np.abs((table[k] - means[k, 0]) / sigma)
        for j in np.nonzero(z > params.z_threshold)[0]:
            t = int(j) + 1
            old = coords[t, k].copy()
            if t == len(seq) - 1:
                new = coords[t - 1, k].copy()
            else:
                new = (coords[t - 1, k] + coords[t + 1, k]) / 2.0
            if np.array_equal(old, new):
                continue
            coords[t, k] = new
            entries.append(
                RepairEntry(t, KeypointId(k), OUTLIER_AVERAGE, tuple(old), tuple(new))
            )

    if not entries:
        return seq, RepairLog()
    return seq.with_coords(coords), RepairLog(tuple(entries))


def repair_temporal(
    seq: PoseSequence, params: PreprocessParams = PreprocessParams()
) -> tuple[PoseSequence, RepairLog]:
    """Extrapolate over frames whose displacement pattern matches no real motion.

    A displacement is large when it exceeds T * M_k, with M_k frozen from the
    table as passed in (post outlier removal). For jitter-dominated keypoints,
    those whose bulk displacement quantile sits at or below the noise floor,
    the threshold is floored at the noise floor so jitter never reaches the
    classification; a keypoint with no displacement above its threshold is
    never touched at all. Every large displacement with a full +/-window
    context is classified: small prior with large following is a motion start,
    the reverse a motion finish, large throughout is sustained motion; any
    other pattern marks frame t incorrect and replaces p(t) with
    2*p(t-1) - p(t-2). Context displacements in the hysteresis band between
    HYSTERESIS_FRACTION * threshold and the threshold count as ambiguous and
    never veto a pattern, so a repair fires only on unambiguous evidence.
    Repairs run in ascending frame order and the displacements they change
    take effect immediately, so a run of consecutive bad frames is healed
    front to back.
    """
    n = len(seq)
    coords = seq.to_array()
    table = _displacement_table(coords)
    maxima = table.max(axis=1)
    bulk = np.quantile(table, BULK_QUANTILE, axis=1)
    thresholds = params.displacement_threshold * maxima
    jittery = bulk <= params.noise_floor
    thresholds[jittery] = np.maximum(thresholds[jittery], params.noise_floor)
    w = params.window
    entries: list[RepairEntry] = []

    # Frame t has full context when displacements t-w .. t+w all exist.
    for k in range(KEYPOINT_COUNT):
        if maxima[k] <= thresholds[k]:
            continue
        threshold = thresholds[k]
        low = HYSTERESIS_FRACTION * threshold
        for t in range(w + 1, n - w):
            if table[k, t - 1] <= threshold:
                continue
            prior = table[k, t - 1 - w : t - 1]
            following = table[k, t : t + w]
            prior_small = not (prior > threshold).any()
            prior_large = not (prior <= low).any()
            following_small = not (following > threshold).any()
            following_large = not (following <= low).any()
            starting = prior_small and following_large
            finishing = prior_large and following_small
            sustained = prior_large and following_large
            if starting or finishing or sustained:
                continue
            old = coords[t, k].copy()
            new = 2.0 * coords[t - 1, k] - coords[t - 2, k]
            if np.array_equal(old, new):
                continue
            coords[t, k] = new
            entries.append(
                RepairEntry(t, KeypointId(k), EXTRAPOLATION, tuple(old), tuple(new))
            )
            table[k, t - 1] = np.linalg.norm(coords[t, k] - coords[t - 1, k])
            if t < n - 1:
                table[k, t] = np.linalg.norm(coords[t + 1, k] - coords[t, k])

    if not entries:
        return seq, RepairLog()
    return seq.with_coords(coords), RepairLog(tuple(entries))


def preprocess(
    seq: PoseSequence, params: PreprocessParams = PreprocessParams()
) -> tuple[PoseSequence, RepairLog]:
    """Outlier removal followed by temporal repair; combined log in order."""
    if len(seq) < 2:
        raise SequenceFormatError("preprocess needs at least 2 frames")
    cleaned, outlier_log = remove_outliers(seq, params)
    repaired, temporal_log = repair_temporal(cleaned, params)
    log = RepairLog(outlier_log.entries + temporal_log.entries)
    if log.entries:
        logger.debug(
            "preprocess repaired %d coordinates (%d outlier, %d extrapolation)",
            len(log),
            log.count(OUTLIER_AVERAGE),
            log.count(EXTRAPOLATION),
        )
    return repaired, log
