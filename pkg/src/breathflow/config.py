"""Pipeline configuration: every tunable in one place, JSON round-trippable."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import defaults
from .masking import FALLBACK_DILATION, FALLBACK_THRESHOLD
from .motion import DirectionFilterConfig
from .optflow import FlowParams
from .peaks import PeakConfig

SENSORS = ("lower", "upper", "mean")


@dataclass(frozen=True)
class PipelineConfig:
    fps: float | None = None
    mask_window: int = defaults.MASK_WINDOW
    alpha: float = defaults.DIRECTION_ALPHA
    smooth_width_s: float = defaults.SMOOTH_WIDTH_S
    cutoff_hz: float = defaults.CUTOFF_HZ
    butterworth_order: int = defaults.BUTTERWORTH_ORDER
    extrema_window_s: float = defaults.EXTREMA_WINDOW_S
    min_height: float = defaults.PEAK_MIN_HEIGHT
    min_prominence: float = defaults.PEAK_MIN_PROMINENCE
    min_distance_s: float = defaults.PEAK_MIN_DISTANCE_S
    br_window_s: float = defaults.BR_WINDOW_S
    flow: FlowParams = field(default_factory=FlowParams)
    warm_start: bool = True
    sensor: str = "lower"
    fallback_threshold: int = FALLBACK_THRESHOLD
    fallback_dilation: int = FALLBACK_DILATION

    def __post_init__(self):
        if self.fps is not None and not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.mask_window < 1:
            raise ValueError("mask_window must be >= 1")
        if self.sensor not in SENSORS:
            raise ValueError(f"sensor must be one of {SENSORS}, got {self.sensor!r}")
        if not self.br_window_s > 0:
            raise ValueError("br_window_s must be positive")
        # fail early on the parameter objects' own invariants
        self.direction
        self.peaks

    @property
    def direction(self) -> DirectionFilterConfig:
        return DirectionFilterConfig(self.alpha)

    @property
    def peaks(self) -> PeakConfig:
        return PeakConfig(self.min_height, self.min_prominence, self.min_distance_s)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        flow = data.pop("flow", None)
        if isinstance(flow, dict):
            flow_known = {f.name for f in dataclasses.fields(FlowParams)}
            bad = set(flow) - flow_known
            if bad:
                raise ValueError(f"unknown flow keys: {sorted(bad)}")
            data["flow"] = FlowParams(**flow)
        elif isinstance(flow, FlowParams):
            data["flow"] = flow
        return cls(**data)

    def replace(self, **changes) -> "PipelineConfig":
        flow_changes = {k: changes.pop(k) for k in list(changes)
                        if k in {f.name for f in dataclasses.fields(FlowParams)}}
        cfg = dataclasses.replace(self, **changes)
        if flow_changes:
            cfg = dataclasses.replace(cfg, flow=dataclasses.replace(cfg.flow, **flow_changes))
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
