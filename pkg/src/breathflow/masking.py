"""Temporal mask stabilisation and mask application."""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy import ndimage

from .defaults import MASK_WINDOW
from .imagery import Frame, ImageryError, Mask, check_same_shape

FALLBACK_THRESHOLD = 8
FALLBACK_DILATION = 5


class TemporalMaskWindow:
    """Rolling intersection of the most recent ``capacity`` masks.

    The current mask is part of the window. Until ``capacity`` masks have been
    pushed, the intersection covers whatever is buffered.
    """

    def __init__(self, capacity: int = MASK_WINDOW):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.buffer: deque[np.ndarray] = deque(maxlen=capacity)
        self._shape: tuple[int, int] | None = None

    def __len__(self):
        return len(self.buffer)

    def push_and_intersect(self, mask: Mask) -> Mask:
        shape = mask.bits.shape
        if self._shape is None:
            self._shape = shape
        elif shape != self._shape:
            raise ImageryError(
                f"mask dimensions differ: {shape[1]}x{shape[0]} vs "
                f"{self._shape[1]}x{self._shape[0]}")
        self.buffer.append(mask.bits)
        out = np.logical_and.reduce(np.stack(self.buffer), axis=0)
        return Mask(out)


def push_and_intersect(window: TemporalMaskWindow, mask: Mask) -> Mask:
    return window.push_and_intersect(mask)


def stabilize_masks(masks, capacity: int = MASK_WINDOW) -> list[Mask]:
    window = TemporalMaskWindow(capacity)
    return [window.push_and_intersect(m) for m in masks]


def apply_mask(frame: Frame, mask: Mask) -> Frame:
    """Black out every pixel outside the mask."""
    check_same_shape(frame, mask, "frame/mask")
    pixels = np.where(mask.bits, frame.pixels, np.uint8(0))
    return Frame(pixels, index=frame.index, fps=frame.fps)


def fallback_segment(prev: Frame, curr: Frame, threshold: int = FALLBACK_THRESHOLD,
                     dilation: int = FALLBACK_DILATION) -> Mask:
    """Motion-energy mask: pixels whose luminance changed by at least
    ``threshold``, grown by a (2*dilation+1) square."""
    check_same_shape(prev, curr, "frame")
    if not 1 <= threshold <= 255:
        raise ValueError(f"threshold must be in [1, 255], got {threshold}")
    if dilation < 0:
        raise ValueError(f"dilation must be >= 0, got {dilation}")
    diff = np.abs(curr.pixels.astype(np.int16) - prev.pixels.astype(np.int16))
    bits = diff >= threshold
    if dilation and bits.any():
        bits = ndimage.binary_dilation(
            bits, structure=np.ones((2 * dilation + 1,) * 2, dtype=bool))
    return Mask(bits)


def fallback_masks(frames, threshold: int = FALLBACK_THRESHOLD,
                   dilation: int = FALLBACK_DILATION) -> list[Mask]:
    """One fallback mask per frame; the first frame reuses the second's mask."""
    if len(frames) < 2:
        return [Mask.full(f.height, f.width) for f in frames]
    masks = [fallback_segment(a, b, threshold, dilation) for a, b in zip(frames, frames[1:])]
    return [masks[0]] + masks
