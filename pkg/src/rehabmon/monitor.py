"""Rehabilitation monitoring service: assignments, uploads, checkpoints.

The service keeps every fact in an append-only record log (one JSON object
per line) and derives checkpoint ledgers, completion rates, and notification
history from it. Replaying the log from empty storage therefore reproduces
the exact service state. All mutations are serialized through one lock, so a
reader never sees a partially applied upload.

A patient earns a daily checkpoint by completing a required number of sets
(uploads whose detected repetitions reach reps_per_set) in one day. Weekly
checkpoint requirements follow the assigned intensity; weeks are anchored at
the assignment's start date. A reminder notification is recorded when a check
runs on a non-visit day and the weekly completion rate through the previous
day is below 100%.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import threading
from dataclasses import dataclass

from .errors import IndeterminateResult
from .pose import PoseSequence, parse_sequence
from .preprocess import EXTRAPOLATION, OUTLIER_AVERAGE, PreprocessParams, preprocess
from .repetition import PeakParams, SmoothingParams, count_repetitions
from .similarity import CalibrationProfile, score_similarity

INTENSITY_CHECKPOINTS = {"light": 3, "medium": 5, "daily": 7}
DEFAULT_SETS_PER_CHECKPOINT = 3
DEFAULT_REPS_PER_SET = 10
LOG_FILENAME = "events.jsonl"


class NotFoundError(LookupError):
    """Referenced patient or assignment does not exist."""


class DuplicateError(ValueError):
    """Patient or assignment identifier already in use."""


@dataclass(frozen=True)
class Patient:
    patient_id: str
    name: str


@dataclass(frozen=True)
class ActionAssignment:
    """One prescribed action with its reference video and calibration."""

    patient_id: str
    action_id: str
    intensity: str
    start_date: dt.date
    visit_date: dt.date
    sets_per_checkpoint: int
    reps_per_set: int
    sample_document: str
    profile_document: str

    def __post_init__(self) -> None:
        if self.intensity not in INTENSITY_CHECKPOINTS:
            raise ValueError(
                f"intensity must be one of {sorted(INTENSITY_CHECKPOINTS)}, "
                f"got {self.intensity!r}"
            )
        if self.sets_per_checkpoint < 1:
            raise ValueError("sets_per_checkpoint must be positive")
        if self.reps_per_set < 1:
            raise ValueError("reps_per_set must be positive")

    @property
    def required_weekly_checkpoints(self) -> int:
        return INTENSITY_CHECKPOINTS[self.intensity]


@dataclass(frozen=True)
class DetectionResult:
    """Pipeline outputs for one uploaded sequence."""

    score: float
    similar: bool
    repetitions: int
    outlier_repairs: int
    extrapolation_repairs: int
    indeterminate_similarity: bool
    indeterminate_count: bool


@dataclass(frozen=True)
class UploadRecord:
    upload_id: str
    patient_id: str
    action_id: str
    date: dt.date
    sequence_document: str
    result: DetectionResult


@dataclass(frozen=True)
class CheckpointEntry:
    date: dt.date
    sets_completed: int
    checkpoint_earned: bool


@dataclass(frozen=True)
class Notification:
    patient_id: str
    action_id: str
    date: dt.date
    completion_rate: float


def _result_to_record(result: DetectionResult) -> dict:
    return {
        "score": result.score,
        "similar": result.similar,
        "repetitions": result.repetitions,
        "outlier_repairs": result.outlier_repairs,
        "extrapolation_repairs": result.extrapolation_repairs,
        "indeterminate_similarity": result.indeterminate_similarity,
        "indeterminate_count": result.indeterminate_count,
    }


def _result_from_record(record: dict) -> DetectionResult:
    return DetectionResult(
        score=float(record["score"]),
        similar=bool(record["similar"]),
        repetitions=int(record["repetitions"]),
        outlier_repairs=int(record["outlier_repairs"]),
        extrapolation_repairs=int(record["extrapolation_repairs"]),
        indeterminate_similarity=bool(record["indeterminate_similarity"]),
        indeterminate_count=bool(record["indeterminate_count"]),
    )


class MonitorService:
    """Append-only-log-backed monitoring service.

    `storage_dir` holds the record log; it is created if missing and replayed
    if present. Pipeline parameters apply to every ingested upload.
    """

    def __init__(
        self,
        storage_dir: str,
        preprocess_params: PreprocessParams = PreprocessParams(),
        smoothing: SmoothingParams = SmoothingParams(),
        peaks: PeakParams = PeakParams(),
    ) -> None:
        self._lock = threading.Lock()
        self._preprocess_params = preprocess_params
        self._smoothing = smoothing
        self._peaks = peaks
        self._patients: dict[str, Patient] = {}
        self._assignments: dict[tuple[str, str], ActionAssignment] = {}
        self._uploads: dict[tuple[str, str], list[UploadRecord]] = {}
        self._notifications: dict[str, list[Notification]] = {}
        self._notified: set[tuple[str, str, str]] = set()
        self._upload_counter = 0
        # Parsed sample/profile cache, rebuilt lazily; never persisted.
        self._pipeline_cache: dict[tuple[str, str], tuple[PoseSequence, CalibrationProfile]] = {}
        os.makedirs(storage_dir, exist_ok=True)
        self._log_path = os.path.join(storage_dir, LOG_FILENAME)
        if os.path.exists(self._log_path):
            self._replay()

    # -- storage ------------------------------------------------------------

    def _append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":"))
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _replay(self) -> None:
        with open(self._log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                kind = record["record"]
                if kind == "patient":
                    self._apply_patient(Patient(record["patient_id"], record["name"]))
                elif kind == "assignment":
                    self._apply_assignment(
                        ActionAssignment(
                            patient_id=record["patient_id"],
                            action_id=record["action_id"],
                            intensity=record["intensity"],
                            start_date=dt.date.fromisoformat(record["start_date"]),
                            visit_date=dt.date.fromisoformat(record["visit_date"]),
                            sets_per_checkpoint=record["sets_per_checkpoint"],
                            reps_per_set=record["reps_per_set"],
                            sample_document=record["sample_document"],
                            profile_document=record["profile_document"],
                        )
                    )
                elif kind == "upload":
                    self._apply_upload(
                        UploadRecord(
                            upload_id=record["upload_id"],
                            patient_id=record["patient_id"],
                            action_id=record["action_id"],
                            date=dt.date.fromisoformat(record["date"]),
                            sequence_document=record["sequence_document"],
                            result=_result_from_record(record["result"]),
                        )
                    )
                elif kind == "notification":
                    self._apply_notification(
                        Notification(
                            patient_id=record["patient_id"],
                            action_id=record["action_id"],
                            date=dt.date.fromisoformat(record["date"]),
                            completion_rate=record["completion_rate"],
                        )
                    )
                else:
                    raise ValueError(f"unknown record kind {kind!r} in log")

    # -- in-memory state transitions -----------------------------------------

    def _apply_patient(self, patient: Patient) -> None:
        self._patients[patient.patient_id] = patient

    def _apply_assignment(self, assignment: ActionAssignment) -> None:
        self._assignments[(assignment.patient_id, assignment.action_id)] = assignment
        self._uploads.setdefault((assignment.patient_id, assignment.action_id), [])

    def _apply_upload(self, upload: UploadRecord) -> None:
        self._uploads[(upload.patient_id, upload.action_id)].append(upload)
        self._upload_counter += 1

    def _apply_notification(self, notification: Notification) -> None:
        self._notifications.setdefault(notification.patient_id, []).append(notification)
        self._notified.add(
            (notification.patient_id, notification.action_id, notification.date.isoformat())
        )

    # -- API -----------------------------------------------------------------

    def register_patient(self, patient_id: str, name: str) -> Patient:
        with self._lock:
            if patient_id in self._patients:
                raise DuplicateError(f"patient {patient_id!r} already registered")
            patient = Patient(patient_id=patient_id, name=name)
            self._append({"record": "patient", "patient_id": patient_id, "name": name})
            self._apply_patient(patient)
            return patient

    def get_patient(self, patient_id: str) -> Patient:
        with self._lock:
            if patient_id not in self._patients:
                raise NotFoundError(f"unknown patient {patient_id!r}")
            return self._patients[patient_id]

    def assign_action(
        self,
        patient_id: str,
        action_id: str,
        intensity: str,
        start_date: dt.date,
        visit_date: dt.date,
        sample_document: str,
        profile_document: str,
        sets_per_checkpoint: int = DEFAULT_SETS_PER_CHECKPOINT,
        reps_per_set: int = DEFAULT_REPS_PER_SET,
    ) -> ActionAssignment:
        # Validate the referenced documents up front so a bad assignment
        # never reaches the log.
        parse_sequence(sample_document)
        CalibrationProfile.from_json(profile_document)
        with self._lock:
            if patient_id not in self._patients:
                raise NotFoundError(f"unknown patient {patient_id!r}")
            key = (patient_id, action_id)
            if key in self._assignments:
                raise DuplicateError(
                    f"action {action_id!r} already assigned to patient {patient_id!r}"
                )
            assignment = ActionAssignment(
                patient_id=patient_id,
                action_id=action_id,
                intensity=intensity,
                start_date=start_date,
                visit_date=visit_date,
                sets_per_checkpoint=sets_per_checkpoint,
                reps_per_set=reps_per_set,
                sample_document=sample_document,
                profile_document=profile_document,
            )
            self._append(
                {
                    "record": "assignment",
                    "patient_id": patient_id,
                    "action_id": action_id,
                    "intensity": intensity,
                    "start_date": start_date.isoformat(),
                    "visit_date": visit_date.isoformat(),
                    "sets_per_checkpoint": sets_per_checkpoint,
                    "reps_per_set": reps_per_set,
                    "sample_document": sample_document,
                    "profile_document": profile_document,
                }
            )
            self._apply_assignment(assignment)
            return assignment

    def get_assignment(self, patient_id: str, action_id: str) -> ActionAssignment:
        with self._lock:
            return self._assignment_unlocked(patient_id, action_id)

    def _assignment_unlocked(self, patient_id: str, action_id: str) -> ActionAssignment:
        key = (patient_id, action_id)
        if key not in self._assignments:
            raise NotFoundError(
                f"no assignment of action {action_id!r} for patient {patient_id!r}"
            )
        return self._assignments[key]

    def _pipeline_inputs(
        self, assignment: ActionAssignment
    ) -> tuple[PoseSequence, CalibrationProfile]:
        key = (assignment.patient_id, assignment.action_id)
        if key not in self._pipeline_cache:
            sample = parse_sequence(assignment.sample_document)
            cleaned, _ = preprocess(sample, self._preprocess_params)
            profile = CalibrationProfile.from_json(assignment.profile_document)
            self._pipeline_cache[key] = (cleaned, profile)
        return self._pipeline_cache[key]

    def ingest_upload(
        self, patient_id: str, action_id: str, document: str, date: dt.date
    ) -> DetectionResult:
        """Run the full pipeline on an uploaded sequence document.

        The raw document is persisted verbatim together with the detection
        result. An indeterminate repetition count is recorded as 0 with the
        indeterminate_count flag set; an indeterminate similarity score is
        recorded as 0.0 / not similar with its own flag.
        """
        with self._lock:
            assignment = self._assignment_unlocked(patient_id, action_id)
            sequence = parse_sequence(document)
            cleaned, repair_log = preprocess(sequence, self._preprocess_params)
            sample, profile = self._pipeline_inputs(assignment)

            indeterminate_similarity = False
            try:
                similarity = score_similarity(cleaned, sample, profile)
                score, similar = similarity.overall, similarity.similar
            except IndeterminateResult:
                score, similar, indeterminate_similarity = 0.0, False, True

            indeterminate_count = False
            try:
                repetitions = count_repetitions(cleaned, self._smoothing, self._peaks).repetitions
            except IndeterminateResult:
                repetitions, indeterminate_count = 0, True

            result = DetectionResult(
                score=score,
                similar=similar,
                repetitions=repetitions,
                outlier_repairs=repair_log.count(OUTLIER_AVERAGE),
                extrapolation_repairs=repair_log.count(EXTRAPOLATION),
                indeterminate_similarity=indeterminate_similarity,
                indeterminate_count=indeterminate_count,
            )
            upload = UploadRecord(
                upload_id=f"upload-{self._upload_counter + 1:06d}",
                patient_id=patient_id,
                action_id=action_id,
                date=date,
                sequence_document=document,
                result=result,
            )
            self._append(
                {
                    "record": "upload",
                    "upload_id": upload.upload_id,
                    "patient_id": patient_id,
                    "action_id": action_id,
                    "date": date.isoformat(),
                    "sequence_document": document,
                    "result": _result_to_record(result),
                }
            )
            self._apply_upload(upload)
            return result

    def results(self, patient_id: str, action_id: str) -> list[UploadRecord]:
        with self._lock:
            self._assignment_unlocked(patient_id, action_id)
            return list(self._uploads[(patient_id, action_id)])

    def daily_rollup(self, patient_id: str, action_id: str, date: dt.date) -> CheckpointEntry:
        """Sets completed and checkpoint status for one calendar day."""
        with self._lock:
            assignment = self._assignment_unlocked(patient_id, action_id)
            uploads = self._uploads[(patient_id, action_id)]
            sets_completed = sum(
                1
                for upload in uploads
                if upload.date == date and upload.result.repetitions >= assignment.reps_per_set
            )
            return CheckpointEntry(
                date=date,
                sets_completed=sets_completed,
                checkpoint_earned=sets_completed >= assignment.sets_per_checkpoint,
            )

    def completion_rate(self, patient_id: str, action_id: str, through_date: dt.date) -> float:
        """Weekly completion percentage through the given date, capped at 100.

        Weeks run in 7-day windows anchored at the assignment's start date;
        the window containing through_date is evaluated. Dates before the
        start date yield 0.
        """
        with self._lock:
            assignment = self._assignment_unlocked(patient_id, action_id)
        if through_date < assignment.start_date:
            return 0.0
        week_index = (through_date - assignment.start_date).days // 7
        week_start = assignment.start_date + dt.timedelta(days=7 * week_index)
        earned = 0
        day = week_start
        while day <= through_date:
            if self.daily_rollup(patient_id, action_id, day).checkpoint_earned:
                earned += 1
            day += dt.timedelta(days=1)
        rate = 100.0 * earned / assignment.required_weekly_checkpoints
        return min(rate, 100.0)

    def notification_check(
        self, date: dt.date, patient_id: str | None = None
    ) -> list[Notification]:
        """Record reminders for assignments behind schedule as of yesterday.

        A reminder is recorded iff the check date is not the visit date and
        the weekly completion rate through the previous day is below 100%.
        At most one notification exists per (patient, action, date); repeated
        checks return previously recorded notifications without duplicating
        them. Assignments starting on or after the check date are skipped.
        """
        with self._lock:
            if patient_id is not None and patient_id not in self._patients:
                raise NotFoundError(f"unknown patient {patient_id!r}")
            assignments = [
                a
                for a in self._assignments.values()
                if patient_id is None or a.patient_id == patient_id
            ]
        emitted = []
        previous_day = date - dt.timedelta(days=1)
        for assignment in sorted(assignments, key=lambda a: (a.patient_id, a.action_id)):
            if date == assignment.visit_date:
                continue
            if previous_day < assignment.start_date:
                continue
            rate = self.completion_rate(
                assignment.patient_id, assignment.action_id, previous_day
            )
            if rate >= 100.0:
                continue
            with self._lock:
                key = (assignment.patient_id, assignment.action_id, date.isoformat())
                if key in self._notified:
                    continue
                notification = Notification(
                    patient_id=assignment.patient_id,
                    action_id=assignment.action_id,
                    date=date,
                    completion_rate=rate,
                )
                self._append(
                    {
                        "record": "notification",
                        "patient_id": notification.patient_id,
                        "action_id": notification.action_id,
                        "date": date.isoformat(),
                        "completion_rate": rate,
                    }
                )
                self._apply_notification(notification)
                emitted.append(notification)
        return emitted

    def notifications(self, patient_id: str) -> list[Notification]:
        with self._lock:
            if patient_id not in self._patients:
                raise NotFoundError(f"unknown patient {patient_id!r}")
            return list(self._notifications.get(patient_id, []))
