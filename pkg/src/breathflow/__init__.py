"""Breath-rate estimation from video via dense optical flow of chest motion."""

from .config import PipelineConfig
from .evaluate import EvalReport, process_reference, score
from .imagery import FlowField, Frame, Mask, load_frame_sequence, load_mask_sequence
from .optflow import FlowParams, estimate_flow
from .peaks import BrSeries, PeakConfig, find_peaks, intervals_to_br
from .pipeline import process_signal, run_pipeline
from .synth import SynthScenario, generate

__version__ = "0.1.0"
