"""End-to-end chain: masked frames -> flow -> angle series -> breath rate."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dsp
from .config import PipelineConfig
from .imagery import FlowField, Frame, Mask, SequenceError
from .masking import apply_mask, fallback_masks, stabilize_masks
from .motion import AngleTracker, MotionSample, motion_sample
from .optflow import expand_pyramid, flow_from_expansions
from .peaks import BrSeries, find_peaks, intervals_to_br

log = logging.getLogger(__name__)

CHUNK = 32


@dataclass(frozen=True)
class SignalStages:
    raw: dsp.Signal
    smoothed: dsp.Signal
    filtered: dsp.Signal
    envelope: dsp.Envelope
    normalized: dsp.Signal
    peaks: np.ndarray
    peak_times: np.ndarray
    br: BrSeries


@dataclass(frozen=True)
class PipelineResult:
    samples: list[MotionSample]
    stages: SignalStages


def process_signal(signal: dsp.Signal, config: PipelineConfig) -> SignalStages:
    """Smooth, lowpass, envelope-normalise, detect peaks, convert to BR.

    Raises :class:`~breathflow.peaks.InsufficientPeaksError` when fewer than
    two peaks survive.
    """
    smoothed = dsp.moving_average(signal, config.smooth_width_s)
    filtered = dsp.butterworth_lowpass(smoothed, config.cutoff_hz, config.butterworth_order)
    envelope = dsp.sliding_extrema(filtered, config.extrema_window_s)
    normalized = dsp.normalize(filtered, envelope)
    peaks = find_peaks(normalized, config.peaks)
    peak_times = normalized.times[peaks]
    br = intervals_to_br(peak_times, config.br_window_s)
    return SignalStages(signal, smoothed, filtered, envelope, normalized, peaks, peak_times, br)


def angle_signal(samples: Sequence[MotionSample], fps: float) -> dsp.Signal:
    if not samples:
        raise SequenceError("need at least two frames for a motion signal")
    return dsp.Signal([s.angle for s in samples], fps, samples[0].frame_index / fps)


def prepare_frames(frames: Sequence[Frame], masks: Sequence[Mask] | None,
                   config: PipelineConfig) -> tuple[list[Frame], list[Mask]]:
    """Stabilise the masks and black out everything outside them."""
    if masks is None:
        masks = fallback_masks(frames, config.fallback_threshold, config.fallback_dilation)
    if len(masks) != len(frames):
        raise SequenceError(f"mask count mismatch: {len(masks)} != {len(frames)}")
    stable = stabilize_masks(masks, config.mask_window)
    return [apply_mask(f, m) for f, m in zip(frames, stable)], stable


def motion_series(frames: Sequence[Frame], masks: Sequence[Mask] | None,
                  config: PipelineConfig, workers: int = 1) -> list[MotionSample]:
    """One motion sample per frame after the first.

    Frame expansions (and, without warm start, the per-pair flow solves) run
    on a thread pool; results are consumed in frame order, so the output does
    not depend on ``workers``.
    """
    if len(frames) < 2:
        raise SequenceError("need at least two frames for a motion signal")
    masked, stable = prepare_frames(frames, masks, config)
    params = config.flow
    track = AngleTracker()
    samples: list[MotionSample] = []
    prev_exp = None
    prev_flow: FlowField | None = None

    def expand(frame):
        return expand_pyramid(frame.pixels, params)

    def solve(pair):
        return flow_from_expansions(pair[0], pair[1], params)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for start in range(0, len(masked), CHUNK):
            chunk = masked[start:start + CHUNK]
            exps = list(pool.map(expand, chunk))
            if prev_exp is not None:
                exps.insert(0, prev_exp)
                first = start
            else:
                first = start + 1
            pairs = list(zip(exps, exps[1:]))
            if config.warm_start:
                flows = []
                for e0, e1 in pairs:
                    prev_flow = flow_from_expansions(e0, e1, params, prev_flow)
                    flows.append(prev_flow)
            else:
                flows = list(pool.map(solve, pairs))
            for k, flow in enumerate(flows):
                idx = first + k
                sample = motion_sample(flow, stable[idx], masked[idx].index, config.direction)
                samples.append(track(sample))
            prev_exp = exps[-1]
            log.info("motion: %d/%d frames", min(start + CHUNK, len(masked)), len(masked))
    return samples


def run_pipeline(frames: Sequence[Frame], masks: Sequence[Mask] | None,
                 config: PipelineConfig, workers: int = 1) -> PipelineResult:
    fps = config.fps or frames[0].fps
    samples = motion_series(frames, masks, config, workers)
    stages = process_signal(angle_signal(samples, fps), config)
    return PipelineResult(samples, stages)
