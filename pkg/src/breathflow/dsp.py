"""Signal conditioning: smoothing, Butterworth lowpass, envelopes, normalisation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .defaults import BUTTERWORTH_ORDER, CUTOFF_HZ, EXTREMA_WINDOW_S, SMOOTH_WIDTH_S

ENVELOPE_EPS = 1e-9


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled series; sample ``n`` is at ``t0 + n / sample_rate``."""

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("signal samples must be 1-D")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.isfinite(x).all():
            raise ValueError("signal contains non-finite samples")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.sample_rate

    def with_samples(self, samples) -> "Signal":
        return Signal(samples, self.sample_rate, self.t0)


# --- smoothing ---------------------------------------------------------------

def odd_window(width_s: float, sample_rate: float) -> int:
    """Nearest odd sample count to ``width_s * sample_rate`` (ties go up)."""
    return 2 * int(math.floor(width_s * sample_rate / 2.0)) + 1


def moving_average(signal: Signal, width_s: float = SMOOTH_WIDTH_S) -> Signal:
    """Centred running mean; windows shrink at the edges."""
    if not width_s > 0:
        raise ValueError(f"width_s must be positive, got {width_s}")
    x = signal.samples
    n = len(x)
    half = odd_window(width_s, signal.sample_rate) // 2
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    return signal.with_samples((csum[hi] - csum[lo]) / (hi - lo))


# --- Butterworth -------------------------------------------------------------

@dataclass(frozen=True)
class ButterworthDesign:
    """Cascade of second-order sections, rows ``[b0, b1, b2, 1, a1, a2]``.

    Every section has unit gain at DC.
    """

    sos: np.ndarray
    cutoff_hz: float
    sample_rate: float
    order: int

    def response(self, freqs_hz) -> np.ndarray:
        """Complex single-pass frequency response at the given frequencies."""
        z = np.exp(-1j * 2 * np.pi * np.asarray(freqs_hz, dtype=float) / self.sample_rate)
        h = np.ones_like(z)
        for b0, b1, b2, _, a1, a2 in self.sos:
            h = h * (b0 + b1 * z + b2 * z * z) / (1 + a1 * z + a2 * z * z)
        return h

    def magnitude(self, freqs_hz) -> np.ndarray:
        return np.abs(self.response(freqs_hz))


def analog_prototype_poles(order: int) -> np.ndarray:
    """Left-half-plane poles of the unit-cutoff analog Butterworth filter."""
    k = np.arange(1, order + 1)
    return np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))


def butterworth_design(cutoff_hz: float, sample_rate: float,
                       order: int = BUTTERWORTH_ORDER) -> ButterworthDesign:
    """Digital lowpass via the bilinear transform with cutoff prewarping."""
    nyquist = sample_rate / 2.0
    if not 0 < cutoff_hz < nyquist:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz")
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    fs2 = 2.0 * sample_rate
    warped = fs2 * math.tan(math.pi * cutoff_hz / sample_rate)
    poles = (fs2 + warped * analog_prototype_poles(order)) / (fs2 - warped * analog_prototype_poles(order))

    sections = []
    # upper-half-plane member of each conjugate pair; the real pole (odd order) last
    for p in sorted((p for p in poles if p.imag > 1e-12), key=lambda p: -abs(p)):
        b = np.array([1.0, 2.0, 1.0])
        a = np.array([1.0, -2.0 * p.real, abs(p) ** 2])
        sections.append(np.concatenate([b * a.sum() / b.sum(), a]))
    for p in (p for p in poles if abs(p.imag) <= 1e-12):
        b = np.array([1.0, 1.0, 0.0])
        a = np.array([1.0, -p.real, 0.0])
        sections.append(np.concatenate([b * a.sum() / b.sum(), a]))
    return ButterworthDesign(np.array(sections), cutoff_hz, sample_rate, order)


def warped_magnitude(freqs_hz, cutoff_hz: float, sample_rate: float, order: int) -> np.ndarray:
    """Closed-form magnitude of the bilinear Butterworth lowpass."""
    ratio = np.tan(np.pi * np.asarray(freqs_hz, dtype=float) / sample_rate) / math.tan(
        math.pi * cutoff_hz / sample_rate)
    return 1.0 / np.sqrt(1.0 + ratio ** (2 * order))


def _section_steady_state(sos: np.ndarray) -> np.ndarray:
    """Per-section transposed direct-form II state for a unit step at rest."""
    zi = np.zeros((len(sos), 2))
    gain_in = 1.0
    for k, (b0, b1, b2, _, a1, a2) in enumerate(sos):
        dc = (b0 + b1 + b2) / (1.0 + a1 + a2)
        u, y = gain_in, gain_in * dc
        zi[k, 1] = b2 * u - a2 * y
        zi[k, 0] = b1 * u - a1 * y + zi[k, 1]
        gain_in = y
    return zi


def sos_filter(sos: np.ndarray, x: np.ndarray, zi: np.ndarray | None = None) -> np.ndarray:
    """Run the cascade over ``x`` (transposed direct form II)."""
    y = np.array(x, dtype=np.float64)
    state = np.zeros((len(sos), 2)) if zi is None else np.array(zi, dtype=np.float64)
    for k, (b0, b1, b2, _, a1, a2) in enumerate(sos):
        z0, z1 = state[k]
        out = y.tolist()
        for i, xi in enumerate(out):
            yi = b0 * xi + z0
            z0 = b1 * xi - a1 * yi + z1
            z1 = b2 * xi - a2 * yi
            out[i] = yi
        y = np.array(out)
    return y


def zero_phase_filter(sos: np.ndarray, x: np.ndarray, padlen: int) -> np.ndarray:
    """Forward-backward filtering with odd reflection padding.

    Each pass starts from the steady state of its first sample, so a
    constant input passes through untouched.
    """
    x = np.asarray(x, dtype=np.float64)
    padlen = min(padlen, len(x) - 1)
    if padlen > 0:
        head = 2 * x[0] - x[padlen:0:-1]
        tail = 2 * x[-1] - x[-2:-padlen - 2:-1]
        ext = np.concatenate([head, x, tail])
    else:
        ext = x
    zi = _section_steady_state(sos)
    fwd = sos_filter(sos, ext, zi * ext[0])
    bwd = sos_filter(sos, fwd[::-1], zi * fwd[-1])[::-1]
    return bwd[padlen:len(bwd) - padlen] if padlen > 0 else bwd


def butterworth_lowpass(signal: Signal, cutoff_hz: float = CUTOFF_HZ,
                        order: int = BUTTERWORTH_ORDER) -> Signal:
    design = butterworth_design(cutoff_hz, signal.sample_rate, order)
    if len(signal) < 2:
        return signal
    return signal.with_samples(zero_phase_filter(design.sos, signal.samples, 3 * order))


# --- envelopes ---------------------------------------------------------------

@dataclass(frozen=True)
class Envelope:
    """Upper and lower polylines, linear between vertices and constant outside."""

    upper_t: np.ndarray
    upper_v: np.ndarray
    lower_t: np.ndarray
    lower_v: np.ndarray
    upper_idx: np.ndarray | None = None
    lower_idx: np.ndarray | None = None

    def upper(self, t) -> np.ndarray:
        return np.interp(t, self.upper_t, self.upper_v)

    def lower(self, t) -> np.ndarray:
        return np.interp(t, self.lower_t, self.lower_v)


def _strict_first_max(x: np.ndarray, left: int, right: int) -> np.ndarray:
    """Indices that are the earliest maximum of the window [i-left, i+right]."""
    n = len(x)
    pad = np.concatenate([np.full(left, -np.inf), x, np.full(right, -np.inf)])
    before = sliding_window_view(pad[:n + left - 1], left).max(axis=1) if left else np.full(n, -np.inf)
    after = (sliding_window_view(pad[left + 1:], right).max(axis=1)
             if right else np.full(n, -np.inf))
    return np.flatnonzero((x > before) & (x >= after))


def _polyline(x: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertices spanning the whole signal, for maxima of ``x``.

    Without interior vertices the polyline joins the two end samples. With
    them, each end vertex takes the larger of the end sample and the nearest
    interior vertex, so the polyline stays above the signal up to the edges.
    """
    n = len(x)
    inner = idx[(idx > 0) & (idx < n - 1)]
    if inner.size == 0:
        ends = np.array([0, n - 1], dtype=np.intp)
        return ends, x[ends]
    verts = np.concatenate([[0], inner, [n - 1]]).astype(np.intp)
    values = x[verts]
    values[0] = max(x[0], x[inner[0]])
    values[-1] = max(x[-1], x[inner[-1]])
    return verts, values


def sliding_extrema(signal: Signal, window_s: float = EXTREMA_WINDOW_S) -> Envelope:
    """Envelope vertices at the samples that are the (earliest) strict maximum
    or minimum of their centred window, plus vertices at both signal ends."""
    if not window_s > 0:
        raise ValueError(f"window_s must be positive, got {window_s}")
    x = signal.samples
    n = len(x)
    if n < 2:
        raise ValueError("signal too short for envelope extraction")
    length = max(1, int(math.floor(window_s * signal.sample_rate + 0.5)))
    left = (length - 1) // 2
    right = length - 1 - left
    up, up_v = _polyline(x, _strict_first_max(x, left, right))
    lo, lo_v = _polyline(-x, _strict_first_max(-x, left, right))
    t = signal.times
    return Envelope(t[up], up_v, t[lo], -lo_v, up, lo)


def normalize(signal: Signal, envelope: Envelope, eps: float = ENVELOPE_EPS) -> Signal:
    """Map each sample onto [0, 1] between the lower and upper polylines.

    Where the polylines (nearly) meet the output is 0.5.
    """
    t = signal.times
    lo = envelope.lower(t)
    span = envelope.upper(t) - lo
    flat = span < eps
    out = np.where(flat, 0.5, (signal.samples - lo) / np.where(flat, 1.0, span))
    return signal.with_samples(np.clip(out, 0.0, 1.0))


def write_signal_csv(path, signal: Signal, values=None) -> None:
    values = signal.samples if values is None else values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "value"])
        for t, v in zip(signal.times, values):
            w.writerow([f"{t:.6f}", repr(float(v))])
