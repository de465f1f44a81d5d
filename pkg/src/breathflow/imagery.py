"""Frame, mask and flow containers plus PGM / raw-stream ingestion.

Two on-disk frame formats are understood:

* a directory of binary PGM (``P5``) files, or colour PPM (``P6``) files that
  are converted to luminance, read in lexicographic filename order;
* a single raw stream file: a 16-byte header (``b"BSR1"``, then little-endian
  u32 width, height and frame count) followed by contiguous 8-bit planes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

RAW_MAGIC = b"BSR1"
RAW_HEADER = struct.Struct("<4sIII")
PNM_SUFFIXES = (".pgm", ".ppm", ".pnm")


class ImageryError(ValueError):
    """Base class for ingestion problems."""


class FrameLoadError(ImageryError):
    """A single frame or mask file is missing or unreadable."""


class SequenceError(ImageryError):
    """The sequence as a whole is inconsistent (empty, mixed sizes, counts)."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Frame:
    """Single-channel 8-bit image; ``pixels`` has shape (height, width)."""

    pixels: np.ndarray
    index: int = 0
    fps: float = 30.0

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 2:
            raise ImageryError(f"frame pixels must be 2-D, got shape {px.shape}")
        if not self.fps > 0:
            raise ImageryError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "pixels", _frozen(px.copy() if px is self.pixels else px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def time_s(self) -> float:
        return self.index / self.fps


@dataclass(frozen=True)
class Mask:
    """Binary body mask, True marks body/clothes pixels."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ImageryError(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @classmethod
    def full(cls, height: int, width: int, value: bool = True) -> "Mask":
        return cls(np.full((height, width), value, dtype=bool))


@dataclass(frozen=True)
class FlowField:
    """Dense displacement field in pixels/frame; x to the right, y down the rows."""

    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        vx = np.asarray(self.vx, dtype=np.float64)
        vy = np.asarray(self.vy, dtype=np.float64)
        if vx.shape != vy.shape or vx.ndim != 2:
            raise ImageryError(f"flow components disagree: {vx.shape} vs {vy.shape}")
        if not (np.isfinite(vx).all() and np.isfinite(vy).all()):
            raise ImageryError("flow field contains non-finite values")
        object.__setattr__(self, "vx", _frozen(vx.copy() if vx is self.vx else vx))
        object.__setattr__(self, "vy", _frozen(vy.copy() if vy is self.vy else vy))

    @property
    def width(self) -> int:
        return self.vx.shape[1]

    @property
    def height(self) -> int:
        return self.vx.shape[0]

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        z = np.zeros((height, width))
        return cls(z, z.copy())


def check_same_shape(a, b, what: str = "image") -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise ImageryError(
            f"{what} dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}")


# --- colour conversion -------------------------------------------------------

def rgb_to_luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luma with integer weights, rounded half up."""
    rgb = np.asarray(rgb, dtype=np.uint32)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


# --- PNM ---------------------------------------------------------------------

def _pnm_header(data: bytes) -> tuple[bytes, list[int], int]:
    """Return magic, [width, height, maxval] and the offset of the raster."""
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise ValueError("truncated header")
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    pos += 1
    try:
        values = [int(t) for t in tokens[1:]]
    except ValueError:
        raise ValueError(f"non-numeric header field in {tokens[1:]!r}") from None
    return tokens[0], values, pos


def decode_pnm(data: bytes) -> np.ndarray:
    """Decode a binary PGM/PPM byte string into an (h, w) luminance array."""
    magic, (width, height, maxval), offset = _pnm_header(data)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    if not 0 < maxval <= 255:
        raise ValueError(f"only 8-bit PNM supported (maxval={maxval})")
    channels = 1 if magic == b"P5" else 3
    size = width * height * channels
    raster = data[offset:offset + size]
    if len(raster) != size:
        raise ValueError(f"raster truncated: {len(raster)} of {size} bytes")
    arr = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width).copy()
    return rgb_to_luminance(arr.reshape(height, width, 3))


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FrameLoadError(f"cannot read {path.name}: {exc.strerror}") from exc
    try:
        return decode_pnm(data)
    except ValueError as exc:
        raise FrameLoadError(f"corrupt image {path.name}: {exc}") from exc


def write_pgm(path, pixels: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(pixels))


# --- raw stream --------------------------------------------------------------

def write_raw_stream(path, planes: Iterable[np.ndarray]) -> None:
    planes = [np.ascontiguousarray(p, dtype=np.uint8) for p in planes]
    if not planes:
        raise SequenceError("no frames")
    h, w = planes[0].shape
    for i, p in enumerate(planes):
        if p.shape != (h, w):
            raise SequenceError(f"frame {i} is {p.shape[1]}x{p.shape[0]}, expected {w}x{h}")
    with open(path, "wb") as fh:
        fh.write(RAW_HEADER.pack(RAW_MAGIC, w, h, len(planes)))
        for p in planes:
            fh.write(p.tobytes())


def read_raw_stream(path) -> np.ndarray:
    """Return all planes of a raw stream as a (count, h, w) uint8 array."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FrameLoadError(f"cannot read {path.name}: {exc.strerror}") from exc
    if len(data) < RAW_HEADER.size:
        raise FrameLoadError(f"{path.name}: stream header truncated")
    magic, w, h, count = RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise FrameLoadError(f"{path.name}: bad magic {magic!r}")
    plane = w * h
    body = data[RAW_HEADER.size:]
    if len(body) < plane * count:
        got = len(body) // plane if plane else 0
        raise FrameLoadError(f"{path.name}: frame {got} truncated ({count} declared)")
    return np.frombuffer(body[:plane * count], dtype=np.uint8).reshape(count, h, w)


def is_raw_stream(path) -> bool:
    path = Path(path)
    if not path.is_file():
        return False
    with open(path, "rb") as fh:
        return fh.read(4) == RAW_MAGIC


# --- sequences ---------------------------------------------------------------

def _image_files(directory: Path) -> list[Path]:
    return sorted(
        (p for p in directory.iterdir() if p.suffix.lower() in PNM_SUFFIXES),
        key=lambda p: p.name)


def _load_planes(path) -> tuple[list[np.ndarray], list[str]]:
    path = Path(path)
    if is_raw_stream(path):
        planes = read_raw_stream(path)
        return list(planes), [f"{path.name}[{i}]" for i in range(len(planes))]
    if not path.is_dir():
        raise FrameLoadError(f"no such frame source: {path}")
    files = _image_files(path)
    return [read_pgm(f) for f in files], [f.name for f in files]


def _check_uniform(planes: Sequence[np.ndarray], names: Sequence[str]) -> None:
    if not planes:
        raise SequenceError("no frames")
    shape = planes[0].shape
    for plane, name in zip(planes, names):
        if plane.shape != shape:
            raise SequenceError(
                f"dimension mismatch at {name}: {plane.shape[1]}x{plane.shape[0]}, "
                f"expected {shape[1]}x{shape[0]}")


def load_frame_sequence(path, fps: float) -> list[Frame]:
    """Load an ordered frame sequence from a PNM directory or raw stream."""
    if not fps > 0:
        raise SequenceError(f"fps must be positive, got {fps}")
    planes, names = _load_planes(path)
    _check_uniform(planes, names)
    return [Frame(p, index=i, fps=fps) for i, p in enumerate(planes)]


def load_mask_sequence(path, width: int, height: int, count: int) -> list[Mask]:
    """Load one mask per frame; any nonzero pixel is body."""
    planes, names = _load_planes(path)
    if len(planes) != count:
        raise SequenceError(f"mask count mismatch: {len(planes)} != {count}")
    for plane, name in zip(planes, names):
        if plane.shape != (height, width):
            raise SequenceError(
                f"dimension mismatch at {name}: {plane.shape[1]}x{plane.shape[0]}, "
                f"expected {width}x{height}")
    return [Mask(p > 0) for p in planes]


def write_frame_sequence(directory, planes: Iterable[np.ndarray], prefix: str = "frame") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, p in enumerate(planes):
        target = directory / f"{prefix}_{i:06d}.pgm"
        write_pgm(target, p)
        paths.append(target)
    return paths


def frames_duration(frames: Sequence[Frame]) -> float:
    """Recording length in seconds (frame count over fps)."""
    if not frames:
        return 0.0
    return len(frames) / frames[0].fps

