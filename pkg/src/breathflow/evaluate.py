"""Scoring video-derived breath rate against reference traces."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .dsp import Signal
from .peaks import BrSeries
from .pipeline import process_signal


class OverlapError(ValueError):
    """The two series do not overlap (enough) in time."""


@dataclass(frozen=True)
class ReferenceTrace:
    """Either a raw breathing signal or an already computed BR series."""

    kind: str                       # "raw-signal" | "br-series"
    sensor_label: str = "lower"     # "upper" | "lower" | "mean"
    signal: Signal | None = None
    series: BrSeries | None = None

    def __post_init__(self):
        if self.kind == "raw-signal" and self.signal is None:
            raise ValueError("raw-signal reference needs a signal")
        if self.kind == "br-series" and self.series is None:
            raise ValueError("br-series reference needs a BR series")
        if self.kind not in ("raw-signal", "br-series"):
            raise ValueError(f"unknown reference kind {self.kind!r}")


@dataclass(frozen=True)
class EvalReport:
    mae: float
    bias: float
    rmsd: float
    mean_br: float
    duration_s: float
    n_samples: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def process_reference(trace: ReferenceTrace, config: PipelineConfig) -> BrSeries:
    """Run a raw reference through the same conditioning and peak chain as
    the video signal. BR-series references are passed through."""
    if trace.kind == "br-series":
        return trace.series
    return process_signal(trace.signal, config).br


def score(video: BrSeries, reference: BrSeries, min_overlap_s: float = 0.0) -> EvalReport:
    """MAE, bias and RMSD of ``video - reference`` at the video's sample times.

    Only the time span covered by both series is scored; the reference is
    step-resampled (previous value held) onto the video times.
    """
    if len(video) == 0 or len(reference) == 0:
        raise OverlapError("empty BR series")
    lo = max(video.times[0], reference.times[0])
    hi = min(video.times[-1], reference.times[-1])
    sel = (video.times >= lo) & (video.times <= hi)
    if hi < lo or not sel.any():
        raise OverlapError(
            f"no overlap: video {video.times[0]:.3f}-{video.times[-1]:.3f} s, "
            f"reference {reference.times[0]:.3f}-{reference.times[-1]:.3f} s")
    if hi - lo < min_overlap_s:
        raise OverlapError(f"overlap {hi - lo:.3f} s shorter than required {min_overlap_s:g} s")
    v = video.br[sel]
    d = v - reference.value_at(video.times[sel])
    return EvalReport(
        mae=float(np.mean(np.abs(d))),
        bias=float(np.mean(d)),
        rmsd=float(math.sqrt(np.mean(d * d))),
        mean_br=float(np.mean(v)),
        duration_s=float(hi - lo),
        n_samples=int(sel.sum()),
    )


# --- CSV ingestion -----------------------------------------------------------

_RAW_COLUMNS = {"lower": ("value", "lower"), "upper": ("value", "upper")}
_BR_COLUMNS = {"lower": ("br_rpm", "lower_br_rpm"), "upper": ("br_rpm", "upper_br_rpm")}


def _pick(header, rows, choices, sensor, path):
    def col(names):
        for name in names:
            if name in header:
                return np.array([float(r[header.index(name)]) for r in rows])
        raise ValueError(f"{path}: no column for sensor {sensor!r} (have {header})")

    if sensor == "mean":
        # a single-sensor file has nothing to average
        if choices["lower"][0] in header:
            return col(choices["lower"][:1])
        return 0.5 * (col(choices["lower"][1:]) + col(choices["upper"][1:]))
    return col(choices[sensor])


def read_reference_csv(path, sensor: str = "lower") -> ReferenceTrace:
    """Parse a reference CSV; the header decides the kind.

    ``time_s,value`` (or ``time_s,upper,lower``) is a raw signal;
    ``time_s,br_rpm`` (or ``time_s,upper_br_rpm,lower_br_rpm``) is a BR series.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty reference file")
    header = [h.strip() for h in rows[0]]
    rows = rows[1:]
    if not header or header[0] != "time_s":
        raise ValueError(f"{path}: first column must be time_s, got {header[:1]}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    times = np.array([float(r[0]) for r in rows])
    if any("br_rpm" in h for h in header):
        values = _pick(header, rows, _BR_COLUMNS, sensor, path)
        return ReferenceTrace("br-series", sensor, series=BrSeries(times, values))
    values = _pick(header, rows, _RAW_COLUMNS, sensor, path)
    if len(times) < 2:
        raise ValueError(f"{path}: raw reference needs at least two samples")
    dt = np.diff(times)
    step = float(np.median(dt))
    if step <= 0 or np.max(np.abs(dt - step)) > 1e-3 * step + 1e-6:
        raise ValueError(f"{path}: raw reference must be uniformly sampled")
    rate = (len(times) - 1) / float(times[-1] - times[0])
    return ReferenceTrace("raw-signal", sensor, signal=Signal(values, rate, float(times[0])))


def read_br_csv(path) -> BrSeries:
    trace = read_reference_csv(path)
    if trace.kind != "br-series":
        raise ValueError(f"{path}: expected a time_s,br_rpm file")
    return trace.series


def write_report(path, report: EvalReport) -> None:
    Path(path).write_text(report.to_json())
