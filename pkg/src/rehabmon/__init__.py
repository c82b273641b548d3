"""Rehabilitation monitoring from 2-D skeleton sequences.

The toolkit takes 17-keypoint pose sequences (as produced by a pose
estimator), repairs coordinate errors, scores pose similarity against a
reference video, counts exercise repetitions, and tracks patient progress
behind an HTTP service.
"""

from .errors import IndeterminateResult, SequenceFormatError
from .evaluation import (
    AccuracyReport,
    ConfusionMatrix,
    EvaluationGroup,
    LabeledCase,
    MetricsReport,
    SweepRow,
    confusion,
    hard_accuracy,
    precision_recall_f1,
    soft_accuracy,
    sweep_threshold,
)
from .kinematics import (
    AngleDef,
    AngleSeries,
    UndefinedAngleError,
    angle_between,
    default_angle_defs,
    extract_angles,
)
from .monitor import (
    ActionAssignment,
    CheckpointEntry,
    DetectionResult,
    DuplicateError,
    MonitorService,
    NotFoundError,
    Notification,
    Patient,
    UploadRecord,
)
from .pose import (
    ARCHETYPE_NAMES,
    Frame,
    GroundTruth,
    Keypoint,
    KeypointId,
    MotionArchetype,
    PoseSequence,
    generate_synthetic,
    parse_sequence,
    sequence_from_array,
    serialize_sequence,
)
from .preprocess import (
    PreprocessParams,
    RepairLog,
    displacements,
    preprocess,
    remove_outliers,
    repair_temporal,
)
from .repetition import (
    PeakParams,
    RepetitionReport,
    SmoothingParams,
    count_repetitions,
    cwt_peaks,
    reference_displacements,
    savitzky_golay,
    sg_coefficients,
)
from .similarity import (
    AngleDistribution,
    CalibrationProfile,
    SimilarityReport,
    calibrate,
    harmonic_mean,
    histogram,
    kl_divergence,
    score_similarity,
)

__version__ = "0.1.0"

__all__ = [
    "ARCHETYPE_NAMES",
    "AccuracyReport",
    "ActionAssignment",
    "AngleDef",
    "AngleDistribution",
    "AngleSeries",
    "CalibrationProfile",
    "CheckpointEntry",
    "ConfusionMatrix",
    "DetectionResult",
    "DuplicateError",
    "EvaluationGroup",
    "Frame",
    "GroundTruth",
    "IndeterminateResult",
    "Keypoint",
    "KeypointId",
    "LabeledCase",
    "MetricsReport",
    "MonitorService",
    "MotionArchetype",
    "NotFoundError",
    "Notification",
    "Patient",
    "PeakParams",
    "PoseSequence",
    "PreprocessParams",
    "RepairLog",
    "RepetitionReport",
    "SequenceFormatError",
    "SimilarityReport",
    "SmoothingParams",
    "SweepRow",
    "UndefinedAngleError",
    "UploadRecord",
    "angle_between",
    "calibrate",
    "confusion",
    "count_repetitions",
    "cwt_peaks",
    "default_angle_defs",
    "displacements",
    "extract_angles",
    "generate_synthetic",
    "hard_accuracy",
    "harmonic_mean",
    "histogram",
    "kl_divergence",
    "parse_sequence",
    "precision_recall_f1",
    "preprocess",
    "remove_outliers",
    "repair_temporal",
    "reference_displacements",
    "savitzky_golay",
    "score_similarity",
    "sequence_from_array",
    "serialize_sequence",
    "sg_coefficients",
    "soft_accuracy",
    "sweep_threshold",
]
