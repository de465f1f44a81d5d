"""Synthetic breathing videos with exact ground truth.

The scene is a flat background with a textured "chest" band that moves
vertically by ``motion_amplitude * sin(phase(t))``, where the phase advances
at ``2*pi*rpm(t)/60`` rad/s. An optional full-width "distractor" band below
it slides horizontally at its own frequency; it lies inside the mask, so only
the direction filter keeps it out of the motion signal.

Random numbers come from SplitMix64. The generator is counter based: output
``n`` of a stream with key ``k`` is ``mix(base_k + (n + 1) * GAMMA)`` where
``base_k = mix(seed + (k + 1) * GAMMA)`` and

    mix(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
            return z ^ (z >> 31)

with all arithmetic modulo 2**64. Uniforms are ``(u >> 11) * 2**-53``;
normal deviates use Box-Muller on consecutive pairs, keeping the cosine
branch only. Stream keys: 0 chest texture, 1 distractor texture, 2 pixel
noise, 3 mask jitter.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .imagery import Frame, Mask, write_frame_sequence
from .peaks import BrSeries

GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1
STREAM_CHEST, STREAM_DISTRACTOR, STREAM_NOISE, STREAM_JITTER = range(4)

BR_RANGE = (5.0, 40.0)
MIN_DURATION_S = 60.0
BACKGROUND = 40.0


def _mix_scalar(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def splitmix64(seed: int, key: int, counters) -> np.ndarray:
    """Raw 64-bit outputs ``counters`` of stream ``key``."""
    base = _mix_scalar(seed + (key + 1) * GAMMA)
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(np.uint64(base) + (c + np.uint64(1)) * np.uint64(GAMMA))


def uniform(seed: int, key: int, counters) -> np.ndarray:
    return (splitmix64(seed, key, counters) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def normal(seed: int, key: int, counters) -> np.ndarray:
    c = np.asarray(counters, dtype=np.uint64)
    u1 = uniform(seed, key, np.uint64(2) * c)
    u2 = uniform(seed, key, np.uint64(2) * c + np.uint64(1))
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def texture(height: int, width: int, seed: int, key: int = STREAM_CHEST) -> np.ndarray:
    """Uniform noise, 5x5 box blurred, contrast-stretched to [32, 224]."""
    raw = uniform(seed, key, np.arange((height + 4) * (width + 4))).reshape(height + 4, width + 4)
    raw = raw * 255.0
    c = np.cumsum(np.cumsum(np.pad(raw, ((1, 0), (1, 0))), axis=0), axis=1)
    box = (c[5:, 5:] - c[:-5, 5:] - c[5:, :-5] + c[:-5, :-5]) / 25.0
    lo, hi = box.min(), box.max()
    return 32.0 + (box - lo) * (192.0 / (hi - lo))


@dataclass(frozen=True)
class Distractor:
    amplitude: float = 5.0
    frequency_hz: float = 0.7


@dataclass(frozen=True)
class SynthScenario:
    width: int = 160
    height: int = 120
    fps: float = 30.0
    duration_s: float = 90.0
    # piecewise-constant rate: [[start_s, rpm], ...], first start is 0
    br_profile: tuple = ((0.0, 15.0),)
    motion_amplitude: float = 3.0
    texture_seed: int = 1
    distractor: Distractor | None = None
    noise_sigma: float = 2.0
    mask_jitter: int = 0

    def __post_init__(self):
        profile = self.br_profile
        if isinstance(profile, (int, float)):
            profile = ((0.0, float(profile)),)
        profile = tuple((float(t), float(r)) for t, r in profile)
        object.__setattr__(self, "br_profile", profile)
        if isinstance(self.distractor, dict):
            object.__setattr__(self, "distractor", Distractor(**self.distractor))
        self.validate()

    def validate(self) -> None:
        if self.width < 32 or self.height < 32:
            raise ValueError("frames must be at least 32x32")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if self.duration_s < MIN_DURATION_S:
            raise ValueError(
                f"duration_s must be >= {MIN_DURATION_S:g} s (BR averaging window), "
                f"got {self.duration_s:g}")
        if not self.br_profile or self.br_profile[0][0] != 0.0:
            raise ValueError("br_profile must start at t=0")
        starts = [t for t, _ in self.br_profile]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("br_profile start times must increase")
        for _, rpm in self.br_profile:
            if not BR_RANGE[0] <= rpm <= BR_RANGE[1]:
                raise ValueError(f"rpm {rpm} outside {BR_RANGE}")
        if self.motion_amplitude < 0:
            raise ValueError("motion_amplitude must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.mask_jitter < 0:
            raise ValueError("mask_jitter must be >= 0")

    @property
    def n_frames(self) -> int:
        return int(math.floor(self.duration_s * self.fps + 0.5))

    def rpm_at(self, t) -> np.ndarray:
        starts = np.array([s for s, _ in self.br_profile])
        rates = np.array([r for _, r in self.br_profile])
        return rates[np.searchsorted(starts, np.asarray(t, dtype=float), side="right") - 1]

    def phase(self, t) -> np.ndarray:
        """Integral of 2*pi*rpm/60 from 0 to t (piecewise linear)."""
        t = np.asarray(t, dtype=float)
        starts = np.array([s for s, _ in self.br_profile])
        rates = np.array([r for _, r in self.br_profile]) / 60.0
        ends = np.append(starts[1:], np.inf)
        cycles = np.zeros_like(t)
        for s, e, r in zip(starts, ends, rates):
            cycles += r * np.clip(np.minimum(t, e) - s, 0.0, None)
        return 2.0 * np.pi * cycles

    def to_dict(self) -> dict:
        d = asdict(self)
        d["br_profile"] = [list(p) for p in self.br_profile]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SynthScenario":
        data = dict(data)
        if "br_profile" in data and not isinstance(data["br_profile"], (int, float)):
            data["br_profile"] = tuple(tuple(p) for p in data["br_profile"])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SynthScenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Layout:
    chest_rows: tuple[int, int]
    chest_cols: tuple[int, int]
    distractor_rows: tuple[int, int]


def layout(sc: SynthScenario) -> Layout:
    h, w = sc.height, sc.width
    return Layout(
        chest_rows=(int(0.25 * h), int(0.60 * h)),
        chest_cols=(int(0.15 * w), int(0.85 * w)),
        distractor_rows=(int(0.72 * h), int(0.92 * h)),
    )


@dataclass
class SynthDataset:
    scenario: SynthScenario
    frames: np.ndarray            # (n, h, w) uint8
    masks: np.ndarray             # (n, h, w) bool
    times: np.ndarray
    displacement: np.ndarray      # upward chest displacement, pixels

    def frame_objects(self) -> list[Frame]:
        return [Frame(p, index=i, fps=self.scenario.fps) for i, p in enumerate(self.frames)]

    def mask_objects(self) -> list[Mask]:
        return [Mask(m) for m in self.masks]

    def truth(self, window_s: float = 60.0) -> BrSeries:
        """Ground-truth rate sampled at every frame time."""
        return BrSeries(self.times, self.scenario.rpm_at(self.times), window_s)


def _shift_rows(img: np.ndarray, offset: float) -> np.ndarray:
    """out[y] = img[y + offset], linear interpolation, clamped at the edges."""
    h = img.shape[0]
    src = np.clip(np.arange(h) + offset, 0.0, h - 1.0)
    r0 = np.floor(src).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    f = (src - r0)[:, None]
    return img[r0] * (1.0 - f) + img[r1] * f


def _shift_cols(img: np.ndarray, offset: float) -> np.ndarray:
    return _shift_rows(img.T, offset).T


def generate(sc: SynthScenario) -> SynthDataset:
    sc.validate()
    lay = layout(sc)
    h, w = sc.height, sc.width
    n = sc.n_frames
    times = np.arange(n) / sc.fps
    disp = sc.motion_amplitude * np.sin(sc.phase(times))

    (r0, r1), (c0, c1) = lay.chest_rows, lay.chest_cols
    canvas = np.full((h, w), BACKGROUND)
    canvas[r0:r1, c0:c1] = texture(r1 - r0, c1 - c0, sc.texture_seed, STREAM_CHEST)

    margin = int(math.ceil(sc.motion_amplitude)) + 2
    base_mask = np.zeros((h, w), dtype=bool)
    base_mask[max(r0 - margin, 0):min(r1 + margin, h), max(c0 - 2, 0):min(c1 + 2, w)] = True

    dist = sc.distractor
    if dist is not None:
        d0, d1 = lay.distractor_rows
        pad = int(math.ceil(dist.amplitude)) + 2
        dist_tex = texture(d1 - d0, w + 2 * pad, sc.texture_seed, STREAM_DISTRACTOR)
        base_mask[d0:d1, :] = True

    frames = np.empty((n, h, w), dtype=np.uint8)
    masks = np.empty((n, h, w), dtype=bool)
    npix = h * w
    for i, t in enumerate(times):
        img = _shift_rows(canvas, disp[i])
        if dist is not None:
            dx = dist.amplitude * math.sin(2.0 * math.pi * dist.frequency_hz * t)
            img[d0:d1] = _shift_cols(dist_tex, -dx)[:, pad:pad + w]
        if sc.noise_sigma > 0:
            img = img + sc.noise_sigma * normal(
                sc.texture_seed, STREAM_NOISE, np.arange(i * npix, (i + 1) * npix)).reshape(h, w)
        frames[i] = np.floor(np.clip(img, 0.0, 255.0) + 0.5).astype(np.uint8)

        if sc.mask_jitter:
            j = sc.mask_jitter
            u = uniform(sc.texture_seed, STREAM_JITTER, np.arange(4 * i, 4 * i + 4))
            off = np.floor(u * (2 * j + 1)).astype(int) - j
            m = base_mask.copy()
            top, bottom = max(r0 - margin + off[0], 0), min(r1 + margin + off[1], h)
            left, right = max(c0 - 2 + off[2], 0), min(c1 + 2 + off[3], w)
            m[:d0 if dist is not None else h] = False
            m[top:bottom, left:right] = True
            masks[i] = m
        else:
            masks[i] = base_mask
    return SynthDataset(sc, frames, masks, times, disp)


def write_reference_csv(path, times, values) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["time_s", "value"])
        for t, v in zip(times, values):
            wr.writerow([f"{t:.6f}", repr(float(v))])


def write_dataset(ds: SynthDataset, out_dir) -> Path:
    """Write ``frames/``, ``masks/`` (PGM), ``reference.csv`` and ``scenario.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_frame_sequence(out / "frames", ds.frames, "frame")
    write_frame_sequence(out / "masks", (m.astype(np.uint8) * 255 for m in ds.masks), "mask")
    write_reference_csv(out / "reference.csv", ds.times, ds.displacement)
    (out / "scenario.json").write_text(json.dumps(ds.scenario.to_dict(), indent=2) + "\n")
    return out
