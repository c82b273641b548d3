"""Joint-angle definitions and per-frame angle extraction.

Each monitored angle is the unsigned angle between two 2-D vectors anchored on
keypoints (or virtual midpoints of keypoint pairs). The default catalogue
covers the eight limb joints plus neck inclination, head yaw, and trunk twist.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import SequenceFormatError
from .pose import KeypointId, PoseSequence

logger = logging.getLogger(__name__)

# A point is a keypoint or the arithmetic midpoint of two keypoints.
PointSpec = "KeypointId | tuple[KeypointId, KeypointId]"


class UndefinedAngleError(ValueError):
    """Raised when an angle is undefined because a defining vector has zero length."""


@dataclass(frozen=True)
class AngleDef:
    """A named angle between vectors (origin_a -> tip_a) and (origin_b -> tip_b)."""

    name: str
    vector_a: tuple[object, object]
    vector_b: tuple[object, object]


@dataclass(frozen=True)
class AngleSeries:
    """Per-frame angle values in radians; NaN marks undefined (zero-length) cells."""

    names: tuple[str, ...]
    values: np.ndarray  # shape (len(names), N), radians in [0, pi] or NaN


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Unsigned angle between two 2-D vectors, in [0, pi]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise UndefinedAngleError("angle undefined for zero-length vector")
    cosine = np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0)
    return float(np.arccos(cosine))


def default_angle_defs() -> tuple[AngleDef, ...]:
    """The 11 monitored angles, in fixed order."""
    K = KeypointId
    mid_shoulder = (K.left_shoulder, K.right_shoulder)
    mid_hip = (K.left_hip, K.right_hip)
    return (
        AngleDef("left_elbow", (K.left_elbow, K.left_shoulder), (K.left_elbow, K.left_wrist)),
        AngleDef("right_elbow", (K.right_elbow, K.right_shoulder), (K.right_elbow, K.right_wrist)),
        AngleDef("left_shoulder", (K.left_shoulder, K.left_elbow), (K.left_shoulder, K.left_hip)),
        AngleDef("right_shoulder", (K.right_shoulder, K.right_elbow), (K.right_shoulder, K.right_hip)),
        AngleDef("left_hip", (K.left_hip, K.left_shoulder), (K.left_hip, K.left_knee)),
        AngleDef("right_hip", (K.right_hip, K.right_shoulder), (K.right_hip, K.right_knee)),
        AngleDef("left_knee", (K.left_knee, K.left_hip), (K.left_knee, K.left_ankle)),
        AngleDef("right_knee", (K.right_knee, K.right_hip), (K.right_knee, K.right_ankle)),
        AngleDef("neck", (mid_shoulder, K.nose), (mid_shoulder, mid_hip)),
        AngleDef("head_yaw", (K.nose, K.left_ear), (K.nose, K.right_ear)),
        AngleDef("trunk_twist", (K.left_shoulder, K.right_shoulder), (K.left_hip, K.right_hip)),
    )


def _resolve_point(coords: np.ndarray, spec: object) -> np.ndarray:
    """Point spec -> (N, 2) array of positions across frames."""
    if isinstance(spec, tuple):
        first, second = spec
        return (coords[:, int(first), :] + coords[:, int(second), :]) / 2.0
    return coords[:, int(spec), :]


def extract_angles(seq: PoseSequence, defs: tuple[AngleDef, ...] | None = None) -> AngleSeries:
    """Evaluate every angle definition on every frame of a sequence.

    Frames where a defining vector has zero length get NaN for that angle;
    downstream histogram construction skips them.
    """
    if defs is None:
        defs = default_angle_defs()
    coords = seq.to_array()
    n = coords.shape[0]
    values = np.empty((len(defs), n), dtype=np.float64)
    for i, adef in enumerate(defs):
        vec_a = _resolve_point(coords, adef.vector_a[1]) - _resolve_point(coords, adef.vector_a[0])
        vec_b = _resolve_point(coords, adef.vector_b[1]) - _resolve_point(coords, adef.vector_b[0])
        norm_a = np.linalg.norm(vec_a, axis=1)
        norm_b = np.linalg.norm(vec_b, axis=1)
        defined = (norm_a > 0.0) & (norm_b > 0.0)
        dots = np.einsum("ij,ij->i", vec_a, vec_b)
        with np.errstate(divide="ignore", invalid="ignore"):
            cosine = np.clip(dots / (norm_a * norm_b), -1.0, 1.0)
        row = np.full(n, np.nan)
        row[defined] = np.arccos(cosine[defined])
        values[i] = row
    undefined = int(np.isnan(values).sum())
    if undefined:
        logger.debug("extract_angles: %d undefined cells out of %d", undefined, values.size)
    return AngleSeries(tuple(d.name for d in defs), values)


def _parse_point_spec(raw: object) -> object:
    """Accept a keypoint id, a keypoint name, or a two-element midpoint list."""
    if isinstance(raw, int) and not isinstance(raw, bool):
        return KeypointId(raw)
    if isinstance(raw, str):
        try:
            return KeypointId[raw]
        except KeyError:
            raise SequenceFormatError(f"unknown keypoint name {raw!r}") from None
    if isinstance(raw, list) and len(raw) == 2:
        return (_parse_point_spec(raw[0]), _parse_point_spec(raw[1]))
    raise SequenceFormatError(f"invalid point spec {raw!r}")


def load_angle_defs(document: bytes | str) -> tuple[AngleDef, ...]:
    """Load an angle catalogue from a JSON document.

    Format: a list of objects with ``name``, ``vector_a``, ``vector_b``; each
    vector is a two-element list of point specs (keypoint id, keypoint name,
    or ``[point, point]`` midpoint).
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SequenceFormatError(f"malformed angle catalogue: {exc}") from None
    if not isinstance(raw, list) or not raw:
        raise SequenceFormatError("angle catalogue must be a non-empty list")
    defs = []
    for item in raw:
        if not isinstance(item, dict):
            raise SequenceFormatError("angle catalogue entries must be objects")
        try:
            name = item["name"]
            raw_a = item["vector_a"]
            raw_b = item["vector_b"]
        except KeyError as exc:
            raise SequenceFormatError(f"angle entry missing field {exc}") from None
        if not isinstance(name, str) or not isinstance(raw_a, list) or not isinstance(raw_b, list):
            raise SequenceFormatError(f"invalid angle entry for {name!r}")
        if len(raw_a) != 2 or len(raw_b) != 2:
            raise SequenceFormatError(f"angle {name!r}: vectors need origin and tip")
        defs.append(
            AngleDef(
                name,
                (_parse_point_spec(raw_a[0]), _parse_point_spec(raw_a[1])),
                (_parse_point_spec(raw_b[0]), _parse_point_spec(raw_b[1])),
            )
        )
    names = [d.name for d in defs]
    if len(set(names)) != len(names):
        raise SequenceFormatError("duplicate angle names in catalogue")
    return tuple(defs)
