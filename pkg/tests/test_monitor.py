"""Patient registry, upload analysis, checkpoints, completion rate, notifications."""

from __future__ import annotations

import datetime as dt
import hashlib
import os

import pytest

from rehabmon.monitor import (
    INTENSITY_CHECKPOINTS,
    LOG_FILENAME,
    DuplicateError,
    MonitorService,
    NotFoundError,
)
from rehabmon.pose import serialize_sequence
from rehabmon.similarity import calibrate
from tests.conftest import make_sequence

MON = dt.date(2026, 3, 2)  # a Monday


def documents():
    sample = make_sequence("squat", repetitions=3, noise_sigma=0.0, seed=40)
    wrongs = [
        make_sequence(name, repetitions=3, noise_sigma=0.0, seed=41 + i)
        for i, name in enumerate(("raise_hands", "rotate_neck", "rotate_waist", "shrug"))
    ]
    profile = calibrate(sample, wrongs)
    return serialize_sequence(sample), profile.to_json()


SAMPLE_DOC, PROFILE_DOC = documents()


def upload_doc(reps: int, seed: int) -> str:
    return serialize_sequence(
        make_sequence("squat", repetitions=reps, noise_sigma=0.0, seed=seed)
    )


def service(tmp_path, intensity="light", sets_per_checkpoint=2, reps_per_set=2):
    svc = MonitorService(str(tmp_path / "store"))
    svc.register_patient("p1", "Pat One")
    svc.assign_action(
        "p1",
        "squat",
        intensity,
        start_date=MON,
        visit_date=MON + dt.timedelta(days=7),
        sample_document=SAMPLE_DOC,
        profile_document=PROFILE_DOC,
        sets_per_checkpoint=sets_per_checkpoint,
        reps_per_set=reps_per_set,
    )
    return svc


def test_register_and_duplicate(tmp_path):
    svc = MonitorService(str(tmp_path / "store"))
    patient = svc.register_patient("p1", "Pat One")
    assert patient.patient_id == "p1"
    with pytest.raises(DuplicateError):
        svc.register_patient("p1", "Again")


def test_assign_requires_registered_patient(tmp_path):
    svc = MonitorService(str(tmp_path / "store"))
    with pytest.raises(NotFoundError):
        svc.assign_action(
            "ghost", "squat", "light",
            start_date=MON, visit_date=MON + dt.timedelta(days=7),
            sample_document=SAMPLE_DOC, profile_document=PROFILE_DOC,
        )


def test_duplicate_assignment_rejected(tmp_path):
    svc = service(tmp_path)
    with pytest.raises(DuplicateError):
        svc.assign_action(
            "p1", "squat", "light",
            start_date=MON, visit_date=MON + dt.timedelta(days=7),
            sample_document=SAMPLE_DOC, profile_document=PROFILE_DOC,
        )


def test_intensity_checkpoint_requirements():
    assert INTENSITY_CHECKPOINTS == {"light": 3, "medium": 5, "daily": 7}


def test_invalid_intensity_rejected(tmp_path):
    svc = MonitorService(str(tmp_path / "store"))
    svc.register_patient("p1", "Pat One")
    with pytest.raises(ValueError, match="intensity"):
        svc.assign_action(
            "p1", "squat", "extreme",
            start_date=MON, visit_date=MON + dt.timedelta(days=7),
            sample_document=SAMPLE_DOC, profile_document=PROFILE_DOC,
        )


def test_upload_against_unknown_assignment(tmp_path):
    svc = service(tmp_path)
    with pytest.raises(NotFoundError):
        svc.ingest_upload("p1", "lunge", upload_doc(2, 1), MON)


def test_upload_of_matching_sample_scores_perfect(tmp_path):
    svc = service(tmp_path)
    result = svc.ingest_upload("p1", "squat", SAMPLE_DOC, MON)
    assert result.similar is True
    assert result.score == pytest.approx(100.0, abs=1e-9)
    assert result.repetitions == 3
    assert result.outlier_repairs == 0
    assert result.extrapolation_repairs == 0


def test_upload_counts_repetitions(tmp_path):
    svc = service(tmp_path)
    result = svc.ingest_upload("p1", "squat", upload_doc(4, seed=7), MON)
    assert result.repetitions == 4
    assert result.similar is True


def test_results_accumulate_in_order(tmp_path):
    svc = service(tmp_path)
    svc.ingest_upload("p1", "squat", upload_doc(2, 1), MON)
    svc.ingest_upload("p1", "squat", upload_doc(3, 2), MON)
    records = svc.results("p1", "squat")
    assert len(records) == 2
    assert [r.result.repetitions for r in records] == [2, 3]


def test_daily_rollup_counts_sets(tmp_path):
    # reps_per_set = 2: uploads of 2, 2, 1 reps give two qualifying sets.
    svc = service(tmp_path, sets_per_checkpoint=2, reps_per_set=2)
    svc.ingest_upload("p1", "squat", upload_doc(2, 1), MON)
    svc.ingest_upload("p1", "squat", upload_doc(2, 2), MON)
    svc.ingest_upload("p1", "squat", upload_doc(1, 3), MON)
    entry = svc.daily_rollup("p1", "squat", MON)
    assert entry.sets_completed == 2
    assert entry.checkpoint_earned is True


def test_daily_rollup_below_requirement(tmp_path):
    svc = service(tmp_path, sets_per_checkpoint=2, reps_per_set=2)
    svc.ingest_upload("p1", "squat", upload_doc(2, 1), MON)
    entry = svc.daily_rollup("p1", "squat", MON)
    assert entry.sets_completed == 1
    assert entry.checkpoint_earned is False


def test_short_uploads_do_not_earn_sets(tmp_path):
    svc = service(tmp_path, sets_per_checkpoint=2, reps_per_set=3)
    for seed in range(4):
        svc.ingest_upload("p1", "squat", upload_doc(2, seed + 1), MON)
    entry = svc.daily_rollup("p1", "squat", MON)
    assert entry.sets_completed == 0
    assert entry.checkpoint_earned is False


def test_empty_day_rolls_up_to_zero(tmp_path):
    svc = service(tmp_path)
    entry = svc.daily_rollup("p1", "squat", MON + dt.timedelta(days=4))
    assert entry.sets_completed == 0
    assert entry.checkpoint_earned is False


def test_rollup_is_idempotent(tmp_path):
    svc = service(tmp_path)
    svc.ingest_upload("p1", "squat", upload_doc(2, 1), MON)
    svc.ingest_upload("p1", "squat", upload_doc(2, 2), MON)
    first = svc.daily_rollup("p1", "squat", MON)
    second = svc.daily_rollup("p1", "squat", MON)
    assert first == second


def test_completion_rate_zero_without_uploads(tmp_path):
    svc = service(tmp_path)
    assert svc.completion_rate("p1", "squat", MON + dt.timedelta(days=6)) == 0.0


def test_completion_rate_full_week(tmp_path):
    # light intensity needs 3 checkpoint days per week.
    svc = service(tmp_path, intensity="light")
    for day in (0, 2, 4):
        date = MON + dt.timedelta(days=day)
        svc.ingest_upload("p1", "squat", upload_doc(2, day + 1), date)
        svc.ingest_upload("p1", "squat", upload_doc(2, day + 10), date)
    assert svc.completion_rate("p1", "squat", MON + dt.timedelta(days=6)) == 100.0


def test_completion_rate_partial(tmp_path):
    svc = service(tmp_path, intensity="light")
    for day in (0, 2):
        date = MON + dt.timedelta(days=day)
        svc.ingest_upload("p1", "squat", upload_doc(2, day + 1), date)
        svc.ingest_upload("p1", "squat", upload_doc(2, day + 10), date)
    rate = svc.completion_rate("p1", "squat", MON + dt.timedelta(days=6))
    assert rate == pytest.approx(100.0 * 2.0 / 3.0, abs=0.01)


def test_completion_rate_caps_at_hundred(tmp_path):
    svc = service(tmp_path, intensity="light")
    for day in range(5):
        date = MON + dt.timedelta(days=day)
        svc.ingest_upload("p1", "squat", upload_doc(2, day + 1), date)
        svc.ingest_upload("p1", "squat", upload_doc(2, day + 10), date)
    assert svc.completion_rate("p1", "squat", MON + dt.timedelta(days=6)) <= 100.0


def test_notification_for_low_completion(tmp_path):
    svc = service(tmp_path, intensity="light")
    check_day = MON + dt.timedelta(days=3)
    notes = svc.notification_check(check_day)
    assert len(notes) == 1
    assert notes[0].patient_id == "p1"
    assert notes[0].action_id == "squat"
    assert notes[0].completion_rate < 100.0


def test_notification_not_repeated_same_day(tmp_path):
    svc = service(tmp_path, intensity="light")
    check_day = MON + dt.timedelta(days=3)
    assert len(svc.notification_check(check_day)) == 1
    assert svc.notification_check(check_day) == []
    assert len(svc.notifications("p1")) == 1


def test_no_notification_at_full_completion(tmp_path):
    svc = service(tmp_path, intensity="light")
    for day in (0, 1, 2):
        date = MON + dt.timedelta(days=day)
        svc.ingest_upload("p1", "squat", upload_doc(2, day + 1), date)
        svc.ingest_upload("p1", "squat", upload_doc(2, day + 10), date)
    assert svc.notification_check(MON + dt.timedelta(days=3)) == []


def test_no_notification_on_visit_date(tmp_path):
    svc = service(tmp_path, intensity="light")
    assert svc.notification_check(MON + dt.timedelta(days=7)) == []


def test_no_notification_before_start(tmp_path):
    svc = service(tmp_path, intensity="light")
    assert svc.notification_check(MON - dt.timedelta(days=1)) == []


def test_unknown_patient_queries(tmp_path):
    svc = service(tmp_path)
    with pytest.raises(NotFoundError):
        svc.results("ghost", "squat")
    with pytest.raises(NotFoundError):
        svc.completion_rate("ghost", "squat", MON)


def test_replay_reproduces_state(tmp_path):
    store = str(tmp_path / "store")
    svc = MonitorService(store)
    svc.register_patient("p1", "Pat One")
    svc.assign_action(
        "p1", "squat", "light",
        start_date=MON, visit_date=MON + dt.timedelta(days=7),
        sample_document=SAMPLE_DOC, profile_document=PROFILE_DOC,
        sets_per_checkpoint=2, reps_per_set=2,
    )
    svc.ingest_upload("p1", "squat", upload_doc(2, 1), MON)
    svc.ingest_upload("p1", "squat", upload_doc(3, 2), MON)
    svc.notification_check(MON + dt.timedelta(days=3))
    log_path = os.path.join(store, LOG_FILENAME)
    digest_before = hashlib.sha256(open(log_path, "rb").read()).hexdigest()

    reopened = MonitorService(store)
    records = reopened.results("p1", "squat")
    assert [r.result.repetitions for r in records] == [2, 3]
    assert [r.result.score for r in records] == [
        r.result.score for r in svc.results("p1", "squat")
    ]
    assert reopened.notifications("p1") == svc.notifications("p1")
    assert reopened.completion_rate("p1", "squat", MON + dt.timedelta(days=6)) == (
        svc.completion_rate("p1", "squat", MON + dt.timedelta(days=6))
    )
    # Reading the store back must not rewrite the event log.
    digest_after = hashlib.sha256(open(log_path, "rb").read()).hexdigest()
    assert digest_after == digest_before


def test_checkpoints_monotone_in_uploads(tmp_path):
    svc = service(tmp_path, intensity="light")
    day = MON + dt.timedelta(days=1)
    rates = []
    for seed in range(1, 5):
        svc.ingest_upload("p1", "squat", upload_doc(2, seed), day)
        rates.append(svc.completion_rate("p1", "squat", MON + dt.timedelta(days=6)))
    assert rates == sorted(rates)
