"""Shared fixtures and generation helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from rehabmon.pose import MotionArchetype, PoseSequence, generate_synthetic, sequence_from_array


def make_sequence(
    name: str = "squat",
    repetitions: int = 5,
    noise_sigma: float = 0.0,
    seed: int = 0,
    amplitude: float = 240.0,
    period_frames: int = 12,
    rest_frames: int = 0,
) -> PoseSequence:
    arch = MotionArchetype(
        name=name,
        repetitions=repetitions,
        amplitude=amplitude,
        period_frames=period_frames,
        rest_frames=rest_frames,
        noise_sigma=noise_sigma,
    )
    seq, _ = generate_synthetic(arch, seed=seed)
    return seq


def make_with_truth(name: str, repetitions: int, noise_sigma: float, seed: int):
    arch = MotionArchetype(
        name=name,
        repetitions=repetitions,
        amplitude=240.0,
        period_frames=12,
        rest_frames=0,
        noise_sigma=noise_sigma,
    )
    return generate_synthetic(arch, seed=seed)


def static_sequence(n_frames: int = 30, fps: float = 10.0) -> PoseSequence:
    coords = np.zeros((n_frames, 17, 2))
    coords[:, :, 0] = 300.0
    coords[:, :, 1] = np.arange(17)[None, :] * 25.0 + 80.0
    return sequence_from_array(coords, fps=fps)


@pytest.fixture
def squat_clean() -> PoseSequence:
    return make_sequence("squat", repetitions=5)
