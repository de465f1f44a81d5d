"""Breath peak detection and conversion of inter-peak intervals to breath rate."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .defaults import BR_WINDOW_S, PEAK_MIN_DISTANCE_S, PEAK_MIN_HEIGHT, PEAK_MIN_PROMINENCE


class InsufficientPeaksError(ValueError):
    """Fewer than two peaks: no interval, hence no breath rate."""


@dataclass(frozen=True)
class PeakConfig:
    min_height: float = PEAK_MIN_HEIGHT
    min_prominence: float = PEAK_MIN_PROMINENCE
    min_distance_s: float = PEAK_MIN_DISTANCE_S

    def __post_init__(self):
        if not self.min_distance_s > 0:
            raise ValueError(f"min_distance_s must be positive, got {self.min_distance_s}")


def local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices of samples higher than both neighbours.

    A flat top counts once, at the floor of its midpoint, provided the
    samples on either side of the plateau are lower.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    out = []
    i = 1
    while i < n - 1:
        if x[i - 1] < x[i]:
            ahead = i + 1
            while ahead < n - 1 and x[ahead] == x[i]:
                ahead += 1
            if x[ahead] < x[i]:
                out.append((i + ahead - 1) // 2)
                i = ahead
        i += 1
    return np.array(out, dtype=np.intp)


def prominences(x: np.ndarray, peaks: np.ndarray) -> np.ndarray:
    """Height of each peak above the higher of its two bases.

    A base is the lowest sample between the peak and the nearest strictly
    higher sample on that side (or the signal edge).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(len(peaks))
    n = len(x)
    for k, p in enumerate(peaks):
        h = x[p]
        i, left_min = p, h
        while i >= 0 and x[i] <= h:
            left_min = min(left_min, x[i])
            i -= 1
        i, right_min = p, h
        while i < n and x[i] <= h:
            right_min = min(right_min, x[i])
            i += 1
        out[k] = h - max(left_min, right_min)
    return out


def select_by_distance(peaks: np.ndarray, heights: np.ndarray, distance: float) -> np.ndarray:
    """Greedy thinning, tallest first (earlier index wins a tie): every peak
    closer than ``distance`` samples to an already kept one is dropped."""
    order = np.lexsort((peaks, -heights))
    keep = np.zeros(len(peaks), dtype=bool)
    removed = np.zeros(len(peaks), dtype=bool)
    for k in order:
        if removed[k]:
            continue
        keep[k] = True
        close = np.abs(peaks - peaks[k]) < distance
        removed |= close
    return np.sort(peaks[keep])


def find_peaks(x, config: PeakConfig = PeakConfig(), sample_rate: float = 1.0) -> np.ndarray:
    """Peak indices passing height, then prominence, then distance rules.

    ``x`` may be an array or a :class:`~breathflow.dsp.Signal`; for a Signal
    its own sample rate converts ``min_distance_s`` into samples.
    """
    if hasattr(x, "samples"):
        sample_rate = x.sample_rate
        x = x.samples
    x = np.asarray(x, dtype=float)
    peaks = local_maxima(x)
    peaks = peaks[x[peaks] >= config.min_height]
    peaks = peaks[prominences(x, peaks) >= config.min_prominence]
    if len(peaks) > 1:
        peaks = select_by_distance(peaks, x[peaks], config.min_distance_s * sample_rate)
    return peaks


@dataclass(frozen=True)
class BrSeries:
    """Breath rate (rpm) defined at peak times, held constant in between."""

    times: np.ndarray
    br: np.ndarray
    window_s: float = BR_WINDOW_S

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        br = np.array(self.br, dtype=float)
        if t.shape != br.shape or t.ndim != 1:
            raise ValueError("times and br must be matching 1-D arrays")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("BR series times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "br", br)

    def __len__(self):
        return len(self.times)

    def value_at(self, t) -> np.ndarray:
        """Step (previous-value) interpolation; NaN before the first sample."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = np.where(idx >= 0, self.br[np.clip(idx, 0, None)], np.nan)
        return out


def intervals_to_br(peak_times, window_s: float = BR_WINDOW_S) -> BrSeries:
    """At each peak from the second on, 60 / mean of the intervals that end
    within the preceding ``window_s`` seconds (right-closed)."""
    t = np.asarray(peak_times, dtype=float)
    if len(t) < 2:
        raise InsufficientPeaksError(f"insufficient peaks: {len(t)} found, need at least 2")
    if not np.all(np.diff(t) > 0):
        raise ValueError("peak times must be strictly increasing")
    ends = t[1:]
    intervals = np.diff(t)
    csum = np.concatenate([[0.0], np.cumsum(intervals)])
    hi = np.arange(1, len(ends) + 1)
    lo = np.searchsorted(ends, ends - window_s, side="right")
    mean = (csum[hi] - csum[lo]) / (hi - lo)
    return BrSeries(ends, 60.0 / mean, window_s)


def write_br_csv(path, series: BrSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "br_rpm"])
        for t, v in zip(series.times, series.br):
            w.writerow([f"{t:.6f}", f"{v:.6f}"])


def write_peaks_csv(path, indices, times, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "time_s", "value"])
        for i, t, v in zip(indices, times, values):
            w.writerow([int(i), f"{t:.6f}", repr(float(v))])
