"""Repetition counting from per-keypoint reference-displacement series.

Each keypoint's distance-from-first-frame series is smoothed with a
Savitzky-Golay filter and its peaks are counted with the wavelet ridge-line
method (Ricker wavelet over a range of widths). The per-keypoint cycle counts
vote: the mode set keeps every count at maximal frequency and the repetition
count is its lowest member.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import IndeterminateResult
from .pose import KEYPOINT_COUNT, KeypointId, PoseSequence

logger = logging.getLogger(__name__)

# Keypoints whose smoothed series never leaves this fraction of the global
# maximum displacement are treated as stationary and excluded from the vote.
STATIONARY_FRACTION = 0.05


@dataclass(frozen=True)
class SmoothingParams:
    """Savitzky-Golay window and polynomial order."""

    window: int = 11
    polyorder: int = 3

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be an odd integer >= 3")
        if not 0 <= self.polyorder < self.window:
            raise ValueError("polyorder must be >= 0 and < window")


@dataclass(frozen=True)
class PeakParams:
    """Ridge-line peak detection tunables.

    ``max_width`` defaults to max(1, N // 10) for an N-point series and
    ``min_ridge_length`` to ceil(max_width / 4); widths run 1..max_width.
    """

    max_width: int | None = None
    gap_threshold: int = 2
    min_ridge_length: int | None = None
    min_snr: float = 1.0
    noise_percentile: float = 10.0

    def __post_init__(self) -> None:
        if self.max_width is not None and self.max_width < 1:
            raise ValueError("max_width must be >= 1")
        if self.gap_threshold < 1:
            raise ValueError("gap_threshold must be >= 1")
        if self.min_ridge_length is not None and self.min_ridge_length < 1:
            raise ValueError("min_ridge_length must be >= 1")
        if not self.min_snr > 0:
            raise ValueError("min_snr must be positive")
        if not 0 < self.noise_percentile < 100:
            raise ValueError("noise_percentile must be in (0, 100)")


@dataclass(frozen=True)
class RepetitionReport:
    """Per-keypoint cycle counts and the aggregated repetition count."""

    cycle_counts: dict[KeypointId, int]
    included: frozenset[KeypointId]
    modes: frozenset[int]
    repetitions: int


def reference_displacements(seq: PoseSequence) -> np.ndarray:
    """Distance of every keypoint from its first-frame position; shape (17, N)."""
    coords = seq.to_array()
    return np.linalg.norm(coords - coords[0], axis=2).T


def sg_coefficients(window: int, polyorder: int) -> np.ndarray:
    """Least-squares polynomial smoothing coefficients for the central sample.

    The coefficient vector h satisfies the moment conditions A^T h = e where A
    is the Vandermonde matrix of window offsets and e selects the polynomial's
    value at the center; the minimum-norm solution is the projection row of
    the least-squares fit.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if not 0 <= polyorder < window:
        raise ValueError("polyorder must be >= 0 and < window")
    offsets = np.arange(window, dtype=np.float64) - window // 2
    design = np.vander(offsets, polyorder + 1, increasing=True)
    target = np.zeros(polyorder + 1)
    target[0] = 1.0
    coeffs, *_ = np.linalg.lstsq(design.T, target, rcond=None)
    return coeffs


def savitzky_golay(series: np.ndarray, params: SmoothingParams = SmoothingParams()) -> np.ndarray:
    """Smooth a 1-D series; edges are filled by evaluating the boundary fits.

    The first and last half-windows come from the polynomial fitted to the
    first and last full window, so output length equals input length.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1:
        raise ValueError("series must be 1-D")
    window, polyorder = params.window, params.polyorder
    n = series.size
    if n < window:
        raise ValueError(f"series length {n} shorter than window {window}")
    half = window // 2
    coeffs = sg_coefficients(window, polyorder)
    out = np.empty(n)
    out[half : n - half] = np.correlate(series, coeffs, mode="valid")
    positions = np.arange(window, dtype=np.float64)
    head_fit = np.polynomial.polynomial.polyfit(positions, series[:window], polyorder)
    out[:half] = np.polynomial.polynomial.polyval(positions[:half], head_fit)
    tail_fit = np.polynomial.polynomial.polyfit(positions, series[n - window :], polyorder)
    out[n - half :] = np.polynomial.polynomial.polyval(positions[half + 1 :], tail_fit)
    return out


def ricker(points: int, width: float) -> np.ndarray:
    """Ricker (Mexican-hat) wavelet sampled at `points` positions."""
    amplitude = 2.0 / (np.sqrt(3.0 * width) * np.pi**0.25)
    x = np.arange(points, dtype=np.float64) - (points - 1.0) / 2.0
    scaled = (x / width) ** 2
    return amplitude * (1.0 - scaled) * np.exp(-scaled / 2.0)


def _cwt_matrix(series: np.ndarray, widths: np.ndarray) -> np.ndarray:
    # Odd kernel length keeps responses centered (an even kernel shifts every
    # row by half a sample); reflect padding avoids the spurious edge maxima
    # that zero padding manufactures on series that start or end high.
    out = np.empty((widths.size, series.size))
    n = series.size
    for i, width in enumerate(widths):
        points = min(10 * int(width), n)
        if points % 2 == 0:
            points = points + 1 if points < n else points - 1
        kernel = ricker(points, width)
        half = points // 2
        padded = np.pad(series, half, mode="reflect")
        out[i] = np.convolve(padded, kernel, mode="same")[half : n + half]
    return out


def _relative_maxima(matrix: np.ndarray) -> np.ndarray:
    """Boolean mask of strict row-wise local maxima; row edges never qualify."""
    mask = np.zeros(matrix.shape, dtype=bool)
    if matrix.shape[1] >= 3:
        interior = (matrix[:, 1:-1] > matrix[:, :-2]) & (matrix[:, 1:-1] > matrix[:, 2:])
        mask[:, 1:-1] = interior
    return mask


def _identify_ridge_lines(
    matrix: np.ndarray, max_distances: np.ndarray, gap_threshold: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Connect local maxima across adjacent widths, largest width downward.

    Each ridge is (rows, cols) sorted by row. A ridge survives a missing
    connection for up to gap_threshold consecutive rows.
    """
    all_max = _relative_maxima(matrix)
    rows_with_max = np.nonzero(all_max.any(axis=1))[0]
    if rows_with_max.size == 0:
        return []
    start_row = int(rows_with_max[-1])
    # Active ridge: [row list, col list, current gap count].
    active: list[list] = [
        [[start_row], [int(col)], 0] for col in np.nonzero(all_max[start_row])[0]
    ]
    finished: list[list] = []
    for row in range(start_row - 1, -1, -1):
        this_cols = np.nonzero(all_max[row])[0]
        for line in active:
            line[2] += 1
        prev_cols = np.array([line[1][-1] for line in active])
        for col in this_cols:
            line = None
            if prev_cols.size > 0:
                closest = int(np.argmin(np.abs(col - prev_cols)))
                if abs(col - prev_cols[closest]) <= max_distances[row]:
                    line = active[closest]
            if line is not None:
                line[0].append(int(row))
                line[1].append(int(col))
                line[2] = 0
            else:
                active.append([[int(row)], [int(col)], 0])
        for index in range(len(active) - 1, -1, -1):
            if active[index][2] > gap_threshold:
                finished.append(active.pop(index))
    ridges = []
    for line in finished + active:
        order = np.argsort(line[0])
        ridges.append((np.asarray(line[0])[order], np.asarray(line[1])[order]))
    return ridges


# Lower bound on the noise floor as a fraction of the strongest width-1
# response. The percentile alone collapses to ~0 on noise-free series whose
# width-1 response crosses zero exactly (every quarter period for sinusoids),
# letting vanishing ridges through; tying the floor to the response scale also
# keeps peak selection invariant under rescaling of the input.
NOISE_FLOOR_FRACTION = 3e-3


def cwt_peaks(series: np.ndarray, params: PeakParams = PeakParams()) -> np.ndarray:
    """Peak indices of a 1-D series via CWT ridge lines; sorted, possibly empty.

    A ridge counts as a peak only if it is long enough, descends to within
    gap_threshold of the smallest width, and its maximum absolute coefficient
    clears min_snr times the noise floor (noise_percentile of the absolute
    width-1 coefficients, bounded below by a small fraction of their maximum).
    The peak position is the ridge's column at the smallest width it reached.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1:
        raise ValueError("series must be 1-D")
    n = series.size
    if n < 4:
        raise ValueError("series must have at least 4 points")
    max_width = params.max_width if params.max_width is not None else max(1, n // 10)
    widths = np.arange(1, max_width + 1)
    min_length = (
        params.min_ridge_length
        if params.min_ridge_length is not None
        else math.ceil(widths.size / 4)
    )
    max_distances = widths / 4.0

    matrix = _cwt_matrix(series, widths)
    ridges = _identify_ridge_lines(matrix, max_distances, params.gap_threshold)

    smallest_row = np.abs(matrix[0])
    floor = max(
        float(np.percentile(smallest_row, params.noise_percentile)),
        NOISE_FLOOR_FRACTION * float(smallest_row.max()),
    )

    peaks = []
    for rows, cols in ridges:
        if rows.size < min_length:
            continue
        # Spurious ridges (troughs, boundary artifacts) live only at large
        # widths; genuine peaks persist down to the finest scales.
        if rows[0] > params.gap_threshold:
            continue
        signal = float(np.abs(matrix[rows, cols]).max())
        snr = math.inf if floor == 0 else signal / floor
        if snr < params.min_snr:
            continue
        peaks.append(int(cols[0]))
    return np.unique(np.asarray(peaks, dtype=np.intp))


def count_repetitions(
    seq: PoseSequence,
    smoothing: SmoothingParams = SmoothingParams(),
    peaks: PeakParams = PeakParams(),
    include_stationary: bool = False,
) -> RepetitionReport:
    """Count repetitions by letting keypoints vote with their peak counts.

    Stationary keypoints (smoothed series maximum below 5% of the global
    maximum) are excluded from the vote unless include_stationary is set.
    The mode set holds every cycle count at maximal frequency; the repetition
    count is its minimum, never a common divisor.
    """
    series = reference_displacements(seq)
    n = series.shape[1]
    if n < smoothing.window:
        raise IndeterminateResult(
            f"sequence length {n} shorter than smoothing window {smoothing.window}"
        )
    smoothed = np.empty_like(series)
    for k in range(KEYPOINT_COUNT):
        smoothed[k] = savitzky_golay(series[k], smoothing)

    maxima = smoothed.max(axis=1)
    global_max = maxima.max()
    if include_stationary or global_max == 0.0:
        included = set(range(KEYPOINT_COUNT))
    else:
        included = {
            k for k in range(KEYPOINT_COUNT) if maxima[k] >= STATIONARY_FRACTION * global_max
        }
    if not included:
        raise IndeterminateResult("all keypoints excluded as stationary")

    cycle_counts = {
        KeypointId(k): int(cwt_peaks(smoothed[k], peaks).size) for k in sorted(included)
    }
    frequencies = Counter(cycle_counts.values())
    top = max(frequencies.values())
    modes = frozenset(count for count, freq in frequencies.items() if freq == top)
    repetitions = min(modes)
    logger.debug(
        "count_repetitions: %d/%d keypoints voted, modes %s -> %d",
        len(included),
        KEYPOINT_COUNT,
        sorted(modes),
        repetitions,
    )
    return RepetitionReport(
        cycle_counts=cycle_counts,
        included=frozenset(KeypointId(k) for k in included),
        modes=modes,
        repetitions=repetitions,
    )
