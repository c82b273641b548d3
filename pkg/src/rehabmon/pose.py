"""Skeleton-sequence domain types, document I/O, and synthetic motion generation.

A pose sequence is an ordered list of frames, each holding the 17 keypoints
produced by a 2-D pose detector. Sequences travel as JSON documents with
top-level fields ``fps``, ``subject_id``, ``action_id``, and ``frames``;
each frame is an array of 17 ``[x, y, confidence?]`` triples in keypoint order.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import SequenceFormatError

logger = logging.getLogger(__name__)

DEFAULT_FPS = 10.0
KEYPOINT_COUNT = 17

# Spike magnitudes are padded past the target keypoint's own displacement
# statistics so the injected jump always clears the |z| > 3 outlier gate.
SPIKE_SIGMA_MARGIN = 40.0
SPIKE_BASE_MAGNITUDE = 50.0


class KeypointId(enum.IntEnum):
    """COCO-order keypoint indices used by 17-point 2-D pose detectors."""

    nose = 0
    left_eye = 1
    right_eye = 2
    left_ear = 3
    right_ear = 4
    left_shoulder = 5
    right_shoulder = 6
    left_elbow = 7
    right_elbow = 8
    left_wrist = 9
    right_wrist = 10
    left_hip = 11
    right_hip = 12
    left_knee = 13
    right_knee = 14
    left_ankle = 15
    right_ankle = 16


@dataclass(frozen=True)
class Keypoint:
    """One detected joint: pixel coordinates plus optional detector confidence."""

    x: float
    y: float
    confidence: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise SequenceFormatError(f"non-finite coordinate ({self.x}, {self.y})")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise SequenceFormatError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Frame:
    """All 17 keypoints observed at one frame index."""

    index: int
    keypoints: tuple[Keypoint, ...]

    def __post_init__(self) -> None:
        if self.index < 0:
            raise SequenceFormatError(f"negative frame index {self.index}")
        if len(self.keypoints) != KEYPOINT_COUNT:
            raise SequenceFormatError(
                f"keypoint count {len(self.keypoints)} != {KEYPOINT_COUNT} at frame {self.index}"
            )


@dataclass(frozen=True)
class PoseSequence:
    """An ordered skeleton sequence for one (subject, action) video.

    Frame indices are contiguous from 0 so that serialization, which stores
    frames positionally, round-trips without loss.
    """

    frames: tuple[Frame, ...]
    fps: float = DEFAULT_FPS
    subject_id: str = ""
    action_id: str = ""

    def __post_init__(self) -> None:
        if not self.frames:
            raise SequenceFormatError("sequence has no frames")
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise SequenceFormatError(f"fps {self.fps} must be a positive number")
        for position, frame in enumerate(self.frames):
            if frame.index != position:
                raise SequenceFormatError(
                    f"frame index {frame.index} at position {position}; indices must be 0..N-1"
                )

    def __len__(self) -> int:
        return len(self.frames)

    def to_array(self) -> np.ndarray:
        """Coordinates as a float array of shape (frames, 17, 2)."""
        out = np.empty((len(self.frames), KEYPOINT_COUNT, 2), dtype=np.float64)
        for i, frame in enumerate(self.frames):
            for k, kp in enumerate(frame.keypoints):
                out[i, k, 0] = kp.x
                out[i, k, 1] = kp.y
        return out

    def confidences(self) -> list[list[float | None]]:
        """Per-frame confidence values, preserved but unused by the pipeline."""
        return [[kp.confidence for kp in frame.keypoints] for frame in self.frames]

    def with_coords(self, coords: np.ndarray) -> "PoseSequence":
        """Copy of this sequence with coordinates replaced from an (N, 17, 2) array."""
        if coords.shape != (len(self.frames), KEYPOINT_COUNT, 2):
            raise ValueError(f"coordinate array shape {coords.shape} does not match sequence")
        frames = []
        for i, frame in enumerate(self.frames):
            keypoints = tuple(
                Keypoint(float(coords[i, k, 0]), float(coords[i, k, 1]), kp.confidence)
                for k, kp in enumerate(frame.keypoints)
            )
            frames.append(Frame(frame.index, keypoints))
        return PoseSequence(tuple(frames), self.fps, self.subject_id, self.action_id)


def sequence_from_array(
    coords: np.ndarray,
    fps: float = DEFAULT_FPS,
    subject_id: str = "",
    action_id: str = "",
) -> PoseSequence:
    """Build a sequence from an (N, 17, 2) coordinate array, confidences absent."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 3 or coords.shape[1:] != (KEYPOINT_COUNT, 2):
        raise ValueError(f"expected (N, {KEYPOINT_COUNT}, 2) array, got {coords.shape}")
    frames = tuple(
        Frame(i, tuple(Keypoint(float(x), float(y)) for x, y in frame))
        for i, frame in enumerate(coords)
    )
    return PoseSequence(frames, fps, subject_id, action_id)


def parse_sequence(document: bytes | str) -> PoseSequence:
    """Parse an ingestion document into a validated PoseSequence."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SequenceFormatError(f"malformed document: {exc}") from None
    if not isinstance(raw, dict):
        raise SequenceFormatError("document root must be an object")

    fps = raw.get("fps", DEFAULT_FPS)
    if not isinstance(fps, (int, float)) or isinstance(fps, bool):
        raise SequenceFormatError("fps must be a number")
    subject_id = raw.get("subject_id", "")
    action_id = raw.get("action_id", "")
    if not isinstance(subject_id, str) or not isinstance(action_id, str):
        raise SequenceFormatError("subject_id and action_id must be strings")

    raw_frames = raw.get("frames")
    if not isinstance(raw_frames, list) or not raw_frames:
        raise SequenceFormatError("frames must be a non-empty array")

    frames = []
    for i, raw_frame in enumerate(raw_frames):
        if not isinstance(raw_frame, list) or len(raw_frame) != KEYPOINT_COUNT:
            count = len(raw_frame) if isinstance(raw_frame, list) else "non-array"
            raise SequenceFormatError(f"keypoint count {count} != {KEYPOINT_COUNT} at frame {i}")
        keypoints = []
        for k, triple in enumerate(raw_frame):
            if not isinstance(triple, list) or len(triple) not in (2, 3):
                raise SequenceFormatError(f"keypoint {k} of frame {i} must be [x, y] or [x, y, confidence]")
            values = []
            for value in triple:
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise SequenceFormatError(f"non-numeric value in keypoint {k} of frame {i}")
                values.append(float(value))
            confidence = values[2] if len(values) == 3 else None
            try:
                keypoints.append(Keypoint(values[0], values[1], confidence))
            except SequenceFormatError as exc:
                raise SequenceFormatError(f"frame {i}, keypoint {k}: {exc}") from None
        frames.append(Frame(i, tuple(keypoints)))

    return PoseSequence(tuple(frames), float(fps), subject_id, action_id)


def serialize_sequence(seq: PoseSequence) -> str:
    """Emit the canonical document for a sequence; parse round-trips it exactly."""
    raw_frames = []
    for frame in seq.frames:
        raw_frame = []
        for kp in frame.keypoints:
            triple = [kp.x, kp.y] if kp.confidence is None else [kp.x, kp.y, kp.confidence]
            raw_frame.append(triple)
        raw_frames.append(raw_frame)
    doc = {
        "fps": seq.fps,
        "subject_id": seq.subject_id,
        "action_id": seq.action_id,
        "frames": raw_frames,
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=True)


ARCHETYPE_NAMES = ("squat", "raise_hands", "lift_foot", "rotate_neck", "rotate_waist", "shrug")

# Resting skeleton in pixel coordinates (y grows downward), roughly a person
# standing centered in a 1280x960 view.
BASE_POSE: dict[KeypointId, tuple[float, float]] = {
    KeypointId.nose: (640.0, 200.0),
    KeypointId.left_eye: (620.0, 190.0),
    KeypointId.right_eye: (660.0, 190.0),
    KeypointId.left_ear: (600.0, 200.0),
    KeypointId.right_ear: (680.0, 200.0),
    KeypointId.left_shoulder: (580.0, 300.0),
    KeypointId.right_shoulder: (700.0, 300.0),
    KeypointId.left_elbow: (560.0, 385.0),
    KeypointId.right_elbow: (720.0, 385.0),
    KeypointId.left_wrist: (550.0, 465.0),
    KeypointId.right_wrist: (730.0, 465.0),
    KeypointId.left_hip: (600.0, 480.0),
    KeypointId.right_hip: (680.0, 480.0),
    KeypointId.left_knee: (590.0, 620.0),
    KeypointId.right_knee: (690.0, 620.0),
    KeypointId.left_ankle: (585.0, 760.0),
    KeypointId.right_ankle: (695.0, 760.0),
}

# Per-archetype motion model: keypoint -> (unit dx, unit dy, amplitude scale).
# Trajectories are base + direction * scale * amplitude * (1 - cos(2*pi*t/P)) / 2,
# which gives exactly one displacement-from-rest peak per cycle.
ARCHETYPE_MOTIONS: dict[str, dict[KeypointId, tuple[float, float, float]]] = {
    "squat": {
        KeypointId.left_hip: (0.0, 1.0, 1.0),
        KeypointId.right_hip: (0.0, 1.0, 1.0),
        # Knees flare outward as the hips drop so the hip-knee-ankle angle
        # actually flexes instead of the whole leg translating rigidly.
        KeypointId.left_knee: (-1.0, 0.0, 0.5),
        KeypointId.right_knee: (1.0, 0.0, 0.5),
        KeypointId.left_ankle: (0.0, 1.0, 0.15),
        KeypointId.right_ankle: (0.0, 1.0, 0.15),
    },
    "raise_hands": {
        KeypointId.left_wrist: (0.0, -1.0, 1.0),
        KeypointId.right_wrist: (0.0, -1.0, 1.0),
        KeypointId.left_elbow: (0.0, -1.0, 0.6),
        KeypointId.right_elbow: (0.0, -1.0, 0.6),
    },
    "lift_foot": {
        KeypointId.left_ankle: (0.0, -1.0, 1.0),
        KeypointId.left_knee: (0.0, -1.0, 0.6),
    },
    "rotate_neck": {
        KeypointId.nose: (1.0, 0.0, 1.0),
        KeypointId.left_eye: (1.0, 0.0, 0.9),
        KeypointId.right_eye: (1.0, 0.0, 0.9),
        KeypointId.left_ear: (1.0, 0.0, 0.7),
        KeypointId.right_ear: (1.0, 0.0, 0.7),
    },
    "rotate_waist": {
        KeypointId.left_shoulder: (1.0, 0.0, 1.0),
        KeypointId.right_shoulder: (-1.0, 0.0, 1.0),
        KeypointId.left_elbow: (1.0, 0.0, 0.8),
        KeypointId.right_elbow: (-1.0, 0.0, 0.8),
        KeypointId.left_wrist: (1.0, 0.0, 0.7),
        KeypointId.right_wrist: (-1.0, 0.0, 0.7),
    },
    "shrug": {
        KeypointId.left_shoulder: (0.0, -1.0, 1.0),
        KeypointId.right_shoulder: (0.0, -1.0, 1.0),
    },
}

# Defaults chosen so the clean displacement profile never dips below the
# repair threshold (see preprocess): with an even 12-frame period the sampled
# per-frame displacement stays above 0.26 of its maximum. The amplitude keeps
# the stationary-keypoint cutoff (5% of the global maximum, 12 px here) well
# clear of the smoothed noise pedestal at the default 2 px jitter.
DEFAULT_PERIOD_FRAMES = 12
DEFAULT_AMPLITUDE = 240.0


@dataclass(frozen=True)
class MotionArchetype:
    """Parameterized exercise motion used to generate ground-truth sequences.

    ``rest_frames`` holds the skeleton at the resting pose for that many
    frames after each cycle, modelling the pause patients take between
    repetitions.
    """

    name: str
    repetitions: int
    amplitude: float = DEFAULT_AMPLITUDE
    period_frames: int = DEFAULT_PERIOD_FRAMES
    rest_frames: int = 0
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.name not in ARCHETYPE_NAMES:
            raise ValueError(f"unknown archetype {self.name!r}; expected one of {ARCHETYPE_NAMES}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.period_frames < 4:
            raise ValueError("period_frames must be >= 4")
        if self.rest_frames < 0:
            raise ValueError("rest_frames must be >= 0")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """What the generator actually produced, for harness comparisons."""

    repetitions: int
    moving_keypoints: frozenset[KeypointId]


def generate_synthetic(
    archetype: MotionArchetype,
    fps: float = DEFAULT_FPS,
    seed: int = 0,
) -> tuple[PoseSequence, GroundTruth]:
    """Generate a deterministic synthetic sequence with known repetition count."""
    motion = ARCHETYPE_MOTIONS[archetype.name]
    period = archetype.period_frames
    cycle = period + archetype.rest_frames
    n_frames = archetype.repetitions * cycle + 1
    t = np.arange(n_frames, dtype=np.float64)
    in_cycle = t % cycle
    phase = np.where(
        in_cycle < period,
        (1.0 - np.cos(2.0 * np.pi * in_cycle / period)) / 2.0,
        0.0,
    )

    coords = np.empty((n_frames, KEYPOINT_COUNT, 2), dtype=np.float64)
    for kid in KeypointId:
        base = BASE_POSE[kid]
        coords[:, kid, 0] = base[0]
        coords[:, kid, 1] = base[1]
    for kid, (ux, uy, scale) in motion.items():
        swing = archetype.amplitude * scale * phase
        coords[:, kid, 0] += ux * swing
        coords[:, kid, 1] += uy * swing

    if archetype.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        coords += rng.normal(0.0, archetype.noise_sigma, coords.shape)

    seq = sequence_from_array(coords, fps=fps, subject_id="synthetic", action_id=archetype.name)
    truth = GroundTruth(archetype.repetitions, frozenset(motion))
    return seq, truth


@dataclass(frozen=True)
class CorruptionSpec:
    """Detector-failure injection plan: single-frame spikes and short drifts."""

    spike_count: int = 0
    drift_runs: tuple[tuple[int, int, float], ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.spike_count < 0:
            raise ValueError("spike_count must be >= 0")
        for start, length, _offset in self.drift_runs:
            if not 1 <= length <= 4:
                raise ValueError(f"drift length {length} outside 1..4")
            if start < 1:
                raise ValueError(f"drift start {start} must be >= 1")


class Corruption(NamedTuple):
    frame: int
    keypoint: KeypointId
    kind: str


def _unit_vector(rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([np.cos(angle), np.sin(angle)])


def inject_corruptions(
    seq: PoseSequence, spec: CorruptionSpec
) -> tuple[PoseSequence, list[Corruption]]:
    """Corrupt a sequence per the spec; returns the new sequence and every hit.

    Spikes displace one keypoint for one frame by enough to guarantee the jump
    is a |z| > 3 outlier in that keypoint's displacement series. Drifts add a
    constant offset over 1..4 consecutive frames.
    """
    if spec.spike_count == 0 and not spec.drift_runs:
        return seq, []

    n_frames = len(seq)
    coords = seq.to_array()
    rng = np.random.default_rng(spec.seed)
    hits: list[Corruption] = []

    for start, length, _offset in spec.drift_runs:
        if start + length > n_frames - 1:
            raise ValueError(f"drift run ({start}, {length}) exceeds sequence bounds")

    if spec.spike_count > 0:
        if n_frames < spec.spike_count * 3 + 2:
            raise ValueError("sequence too short for requested spike count")
        drift_frames = {
            f for start, length, _ in spec.drift_runs for f in range(start - 1, start + length + 2)
        }
        candidates = [f for f in range(1, n_frames - 1) if f not in drift_frames]
        spike_frames: list[int] = []
        for frame in rng.permutation(candidates):
            if all(abs(frame - other) >= 3 for other in spike_frames):
                spike_frames.append(int(frame))
            if len(spike_frames) == spec.spike_count:
                break
        if len(spike_frames) < spec.spike_count:
            raise ValueError("could not place all spikes with 3-frame separation")
        keypoint_pool = rng.permutation(KEYPOINT_COUNT)
        for i, frame in enumerate(spike_frames):
            kid = KeypointId(int(keypoint_pool[i % KEYPOINT_COUNT]))
            steps = np.linalg.norm(np.diff(coords[:, kid, :], axis=0), axis=1)
            magnitude = float(steps.mean() + SPIKE_SIGMA_MARGIN * steps.std() + SPIKE_BASE_MAGNITUDE)
            coords[frame, kid, :] += _unit_vector(rng) * magnitude
            hits.append(Corruption(frame, kid, "spike"))

    for start, length, offset in spec.drift_runs:
        kid = KeypointId(int(rng.integers(KEYPOINT_COUNT)))
        shift = _unit_vector(rng) * float(offset)
        for frame in range(start, start + length):
            coords[frame, kid, :] += shift
            hits.append(Corruption(frame, kid, "drift"))

    corrupted = seq.with_coords(coords)
    logger.debug("injected %d corruptions into %d-frame sequence", len(hits), n_frames)
    return corrupted, hits
