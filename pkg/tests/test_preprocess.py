"""Displacement tables, z-score outlier removal, and temporal extrapolation repair."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rehabmon.errors import SequenceFormatError
from rehabmon.pose import CorruptionSpec, inject_corruptions, sequence_from_array
from rehabmon.preprocess import (
    EXTRAPOLATION,
    OUTLIER_AVERAGE,
    PreprocessParams,
    displacements,
    max_displacements,
    preprocess,
    remove_outliers,
    repair_temporal,
)
from tests.conftest import make_sequence, static_sequence

ARCHETYPES = ("squat", "raise_hands", "lift_foot", "rotate_neck", "rotate_waist", "shrug")


def path_sequence(points, n_frames=None, keypoint=3):
    # One keypoint follows the given path; the rest stay parked far away.
    n = len(points) if n_frames is None else n_frames
    coords = np.zeros((n, 17, 2))
    coords[:, :, 0] = 500.0
    coords[:, :, 1] = np.arange(17)[None, :] * 40.0
    pts = np.asarray(points, dtype=float)
    coords[: len(pts), keypoint] = pts
    if len(pts) < n:
        coords[len(pts):, keypoint] = pts[-1]
    return sequence_from_array(coords, fps=10.0)


def test_displacement_three_four_five():
    # 3-4-5 triangle: a (3, 4) step has length 5.
    points = [(0.0, 0.0), (3.0, 4.0)]
    table = displacements(path_sequence(points))
    assert table.shape == (17, 1)
    assert table[3, 0] == 5.0
    assert (table[[k for k in range(17) if k != 3]] == 0.0).all()


def test_displacement_table_shape():
    seq = make_sequence("squat", repetitions=4)
    table = displacements(seq)
    assert table.shape == (17, len(seq) - 1)
    assert (table >= 0).all()


def test_displacement_column_is_step_into_next_frame():
    points = [(0.0, 0.0), (0.0, 0.0), (6.0, 8.0)]
    table = displacements(path_sequence(points))
    assert table[3, 0] == 0.0
    assert table[3, 1] == 10.0


def test_max_displacements_all_zero():
    assert (max_displacements(np.zeros((17, 5))) == 0.0).all()


def test_max_displacements_single_value():
    table = np.zeros((17, 5))
    table[3, 2] = 7.5
    maxima = max_displacements(table)
    assert maxima[3] == 7.5
    assert maxima.shape == (17,)


def test_outlier_z_score_flags_large_step():
    # 99 unit steps and one step of 50: z = (50 - mean) / std ~ 9.95.
    xs = np.cumsum(np.ones(101))
    xs[41:] += 49.0
    points = [(x, 0.0) for x in xs]
    seq = path_sequence(points)
    table = displacements(seq)
    row = table[3]
    z = (50.0 - row.mean()) / row.std()
    assert z == pytest.approx(9.9498, abs=0.01)
    repaired, log = remove_outliers(seq, PreprocessParams())
    cells = log.frames_for(OUTLIER_AVERAGE)
    assert {(f, int(k)) for f, k in cells} == {(41, 3)}
    # Neighbor average: frames 40 and 42 hold x = 41 and x = 92.
    assert repaired.to_array()[41, 3, 0] == (41.0 + 92.0) / 2.0


def test_outlier_repair_is_neighbor_average():
    points = [(10.0, 10.0)] * 30 + [(50.0, 50.0)] + [(12.0, 12.0)] * 29
    repaired, log = remove_outliers(path_sequence(points), PreprocessParams())
    entries = [e for e in log.entries if e.frame == 30]
    assert len(entries) == 1
    assert entries[0].method == OUTLIER_AVERAGE
    assert entries[0].new == (11.0, 11.0)
    assert tuple(repaired.to_array()[30, 3]) == (11.0, 11.0)


def test_outlier_on_final_frame_copies_previous():
    points = [(10.0, float(t % 2)) for t in range(59)] + [(80.0, 0.0)]
    repaired, log = remove_outliers(path_sequence(points), PreprocessParams())
    coords = repaired.to_array()
    assert np.array_equal(coords[59, 3], coords[58, 3])
    assert (59, 3) in {(f, int(k)) for f, k in log.frames_for(OUTLIER_AVERAGE)}


def test_outlier_skips_constant_displacement_rows():
    # Zero-variance rows have no z-score; a uniform walk is left alone.
    points = [(float(t), 0.0) for t in range(40)]
    seq = path_sequence(points)
    repaired, log = remove_outliers(seq, PreprocessParams())
    assert len(log) == 0
    assert np.array_equal(repaired.to_array(), seq.to_array())


def test_outlier_static_sequence_identity():
    seq = static_sequence(25)
    repaired, log = remove_outliers(seq, PreprocessParams())
    assert len(log) == 0
    assert np.array_equal(repaired.to_array(), seq.to_array())


def test_extrapolation_continues_previous_velocity():
    # After (0, 0) -> (2, 1) the linear continuation is (4, 2).
    points = (
        [(0.0, 0.0)] * 9
        + [(2.0, 1.0)]
        + [(30.0, 15.0), (30.0, 15.0)]
        + [(2.0 * i, float(i)) for i in range(2, 11)]
    )
    seq = path_sequence(points, n_frames=60)
    repaired, log = repair_temporal(seq, PreprocessParams())
    coords = repaired.to_array()
    assert tuple(coords[10, 3]) == (4.0, 2.0)
    assert tuple(coords[11, 3]) == (6.0, 3.0)
    entries = [e for e in log.entries if e.keypoint == 3]
    assert {e.frame for e in entries} == {10, 11}
    assert all(e.method == EXTRAPOLATION for e in entries)
    # Other keypoints never move, so they are never touched.
    assert all(e.keypoint == 3 for e in log.entries)


def test_temporal_identity_when_threshold_is_maximum():
    seq = make_sequence("squat", repetitions=5, noise_sigma=2.0, seed=8)
    params = PreprocessParams(displacement_threshold=1.0)
    repaired, log = repair_temporal(seq, params)
    assert len(log) == 0
    assert np.array_equal(repaired.to_array(), seq.to_array())


@pytest.mark.parametrize("name", ARCHETYPES)
def test_clean_sequences_pass_through_unchanged(name):
    seq = make_sequence(name, repetitions=5, noise_sigma=0.0, seed=0)
    repaired, log = preprocess(seq)
    assert len(log) == 0
    assert np.array_equal(repaired.to_array(), seq.to_array())


def test_preprocess_requires_two_frames():
    with pytest.raises(SequenceFormatError, match="at least 2 frames"):
        preprocess(static_sequence(1))


def test_preprocess_two_frames_is_identity():
    seq = static_sequence(2)
    repaired, log = preprocess(seq)
    assert len(log) == 0
    assert np.array_equal(repaired.to_array(), seq.to_array())


def test_preprocess_preserves_metadata():
    seq = make_sequence("squat", repetitions=3, noise_sigma=2.0, seed=1)
    repaired, _ = preprocess(seq)
    assert repaired.fps == seq.fps
    assert repaired.subject_id == seq.subject_id
    assert repaired.action_id == seq.action_id
    assert len(repaired) == len(seq)


@pytest.mark.parametrize(
    "name, gen_seed, spec",
    [
        ("squat", 3, CorruptionSpec(spike_count=5, seed=50)),
        ("raise_hands", 3, CorruptionSpec(spike_count=5, seed=51)),
        ("lift_foot", 3, CorruptionSpec(spike_count=5, seed=50)),
    ],
)
def test_spikes_are_caught_by_outlier_stage(name, gen_seed, spec):
    seq = make_sequence(name, repetitions=8, noise_sigma=2.0, seed=gen_seed)
    corrupted, hits = inject_corruptions(seq, spec)
    _, log = preprocess(corrupted)
    outlier_cells = log.frames_for(OUTLIER_AVERAGE)
    for h in hits:
        assert (h.frame, h.keypoint) in outlier_cells


@pytest.mark.parametrize(
    "name, gen_seed, inj_seed",
    [
        ("squat", 0, 60),
        ("squat", 0, 61),
        ("raise_hands", 0, 60),
        ("lift_foot", 0, 61),
        ("rotate_waist", 1, 60),
        ("shrug", 0, 60),
    ],
)
def test_drift_on_still_keypoint_is_flattened(name, gen_seed, inj_seed):
    # A four-frame drift lands on a keypoint the archetype keeps still:
    # repair must pull every corrupted frame back toward the true pose.
    seq = make_sequence(name, repetitions=8, noise_sigma=2.0, seed=gen_seed)
    spec = CorruptionSpec(drift_runs=((30, 4, 40.0),), seed=inj_seed)
    corrupted, hits = inject_corruptions(seq, spec)
    repaired, _ = preprocess(corrupted)
    truth = seq.to_array()
    before = corrupted.to_array()
    after = repaired.to_array()
    for h in hits:
        err_before = np.linalg.norm(before[h.frame, h.keypoint] - truth[h.frame, h.keypoint])
        err_after = np.linalg.norm(after[h.frame, h.keypoint] - truth[h.frame, h.keypoint])
        assert err_after < err_before


def test_drift_repair_on_clean_sequence_is_exact():
    seq = make_sequence("squat", repetitions=8, noise_sigma=0.0, seed=0)
    spec = CorruptionSpec(drift_runs=((30, 4, 40.0),), seed=60)
    corrupted, hits = inject_corruptions(seq, spec)
    repaired, _ = preprocess(corrupted)
    truth = seq.to_array()
    after = repaired.to_array()
    for h in hits:
        assert np.linalg.norm(after[h.frame, h.keypoint] - truth[h.frame, h.keypoint]) < 1.0


def test_second_pass_makes_fewer_repairs():
    seq = make_sequence("squat", repetitions=8, noise_sigma=2.0, seed=3)
    spec = CorruptionSpec(spike_count=5, drift_runs=((30, 4, 40.0),), seed=50)
    corrupted, _ = inject_corruptions(seq, spec)
    once, log1 = preprocess(corrupted)
    twice, log2 = preprocess(once)
    assert len(log2) < len(log1)


def test_repair_log_matches_coordinate_diff():
    seq = make_sequence("rotate_waist", repetitions=8, noise_sigma=2.0, seed=2)
    corrupted, _ = inject_corruptions(seq, CorruptionSpec(spike_count=4, seed=52))
    repaired, log = preprocess(corrupted)
    diff = np.any(repaired.to_array() != corrupted.to_array(), axis=2)
    changed = {(t, k) for t, k in zip(*np.nonzero(diff))}
    assert changed == {(f, int(k)) for f, k in log.frames_for()}


def test_repair_log_replay():
    seq = make_sequence("squat", repetitions=6, noise_sigma=2.0, seed=5)
    corrupted, _ = inject_corruptions(seq, CorruptionSpec(spike_count=3, seed=53))
    repaired, log = preprocess(corrupted)
    replayed = log.apply_to(corrupted)
    assert np.array_equal(replayed.to_array(), repaired.to_array())


def test_repair_log_counts_and_text():
    seq = make_sequence("squat", repetitions=8, noise_sigma=2.0, seed=3)
    corrupted, _ = inject_corruptions(seq, CorruptionSpec(spike_count=5, seed=50))
    _, log = preprocess(corrupted)
    assert len(log) == log.count(OUTLIER_AVERAGE) + log.count(EXTRAPOLATION)
    text = log.to_text()
    assert str(log.entries[0].frame) in text


def test_combined_log_lists_outlier_repairs_first():
    seq = make_sequence("squat", repetitions=8, noise_sigma=2.0, seed=3)
    spec = CorruptionSpec(spike_count=5, drift_runs=((30, 4, 40.0),), seed=50)
    corrupted, _ = inject_corruptions(seq, spec)
    _, log = preprocess(corrupted)
    methods = [e.method for e in log.entries]
    if EXTRAPOLATION in methods:
        assert methods.index(EXTRAPOLATION) >= log.count(OUTLIER_AVERAGE)


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"z_threshold": 0.0}, "z_threshold"),
        ({"displacement_threshold": 0.0}, "displacement_threshold"),
        ({"displacement_threshold": 1.5}, "displacement_threshold"),
        ({"window": 0}, "window"),
        ({"noise_floor": -1.0}, "noise_floor"),
    ],
)
def test_params_validation(kwargs, message):
    with pytest.raises(ValueError, match=message):
        PreprocessParams(**kwargs)


@given(seed=st.integers(0, 10**6), glitches=st.integers(0, 3))
@settings(max_examples=20, deadline=None)
def test_log_diff_bijection_on_random_walks(seed, glitches):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(12, 40))
    steps = rng.normal(0.0, 5.0, size=(n, 17, 2))
    coords = 300.0 + np.cumsum(steps, axis=0)
    for _ in range(glitches):
        t = int(rng.integers(1, n))
        k = int(rng.integers(0, 17))
        coords[t, k] += rng.uniform(40.0, 80.0, size=2) * rng.choice([-1.0, 1.0], size=2)
    seq = sequence_from_array(coords)
    repaired, log = preprocess(seq)
    assert len(repaired) == n
    diff = np.any(repaired.to_array() != seq.to_array(), axis=2)
    changed = {(t, k) for t, k in zip(*np.nonzero(diff))}
    assert changed == {(f, int(k)) for f, k in log.frames_for()}
