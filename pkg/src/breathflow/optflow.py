"""Dense two-frame optical flow by polynomial expansion (Farnebäck style).

Every pixel neighbourhood is approximated by a quadratic

    f(x) ~ x^T A x + b^T x + c

fitted by Gaussian-weighted least squares. A pure translation ``d`` turns
``b`` into ``b - 2 A d`` while leaving ``A`` unchanged, so the displacement
follows from the two expansions. Estimates are refined coarse to fine on an
image pyramid and regularised by Gaussian-averaging the per-pixel normal
equations.

Coordinates: ``x`` runs along columns, ``y`` down the rows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy import ndimage

from .imagery import FlowField, Frame, ImageryError

FLOW_MAGIC = b"BFL1"
FLOW_HEADER = struct.Struct("<4sIII")

# Normal matrices with det / trace^2 below this are treated as singular.
_SINGULAR_RATIO = 1e-6


@dataclass(frozen=True)
class FlowParams:
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    window_radius: int = 7
    iterations: int = 3
    poly_radius: int = 5
    poly_sigma: float = 1.1

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if not 0 < self.pyramid_scale < 1:
            raise ValueError("pyramid_scale must lie in (0, 1)")
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.poly_radius < 1:
            raise ValueError("poly_radius must be >= 1")
        if not self.poly_sigma > 0:
            raise ValueError("poly_sigma must be positive")

    @property
    def border(self) -> int:
        """Width of the frame border excluded from accuracy evaluation."""
        return 2 * (self.poly_radius + self.window_radius)


@dataclass(frozen=True)
class PolyExpansion:
    """Per-pixel quadratic coefficients; every field has the image shape.

    ``a12`` is the off-diagonal entry of the symmetric matrix A, i.e. half
    the coefficient of the ``x*y`` term.
    """

    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    c: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.c.shape

    def stack(self) -> np.ndarray:
        """Fields needed by the flow solver, shape (5, h, w)."""
        return np.stack([self.a11, self.a12, self.a22, self.bx, self.by])


def _as_float(img) -> np.ndarray:
    if isinstance(img, Frame):
        img = img.pixels
    return np.asarray(img, dtype=np.float64)


def _gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _blur(arr: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    """Separable Gaussian over the last two axes, edge replication."""
    k = _gaussian_kernel(sigma, radius)
    out = ndimage.correlate1d(arr, k, axis=-1, mode="nearest")
    return ndimage.correlate1d(out, k, axis=-2, mode="nearest")


def _poly_basis(radius: int, sigma: float):
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (t / sigma) ** 2)
    # basis order: 1, x, y, x^2, y^2, xy
    ys, xs = np.meshgrid(t, t, indexing="ij")
    basis = np.stack([np.ones_like(xs), xs, ys, xs * xs, ys * ys, xs * ys]).reshape(6, -1)
    w = np.outer(g, g).ravel()
    gram = (basis * w) @ basis.T
    return g, t, np.linalg.inv(gram)


def polynomial_expansion(frame, poly_radius: int = 5, poly_sigma: float = 1.1) -> PolyExpansion:
    """Fit ``c + b.x + x^T A x`` around every pixel.

    The weighted least-squares problem has a constant Gram matrix when the
    border is handled by edge replication, so the fit reduces to six separable
    correlations followed by one 6x6 linear map.
    """
    img = _as_float(frame)
    n = 2 * poly_radius + 1
    if img.ndim != 2 or img.shape[0] < n or img.shape[1] < n:
        raise ImageryError(
            f"image {img.shape[1]}x{img.shape[0]} smaller than {n}x{n} expansion neighbourhood")
    g, t, ginv = _poly_basis(poly_radius, poly_sigma)
    k0, k1, k2 = g, g * t, g * t * t

    def corr(arr, k, axis):
        return ndimage.correlate1d(arr, k, axis=axis, mode="nearest")

    # along rows (y) first, then columns (x)
    r0, r1, r2 = corr(img, k0, 0), corr(img, k1, 0), corr(img, k2, 0)
    m = np.stack([
        corr(r0, k0, 1),   # 1
        corr(r0, k1, 1),   # x
        corr(r1, k0, 1),   # y
        corr(r0, k2, 1),   # x^2
        corr(r2, k0, 1),   # y^2
        corr(r1, k1, 1),   # xy
    ])
    coef = np.tensordot(ginv, m, axes=1)
    return PolyExpansion(
        a11=coef[3], a12=0.5 * coef[5], a22=coef[4],
        bx=coef[1], by=coef[2], c=coef[0])


def _bilinear(fields: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample (k, h, w) fields at float coordinates, clamped to the image."""
    h, w = fields.shape[-2:]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    flat = fields.reshape(fields.shape[:-2] + (h * w,))
    r0, r1 = y0 * w, y1 * w

    def take(idx):
        return np.take(flat, idx, axis=-1)

    top = take(r0 + x0) * (1.0 - fx) + take(r0 + x1) * fx
    bot = take(r1 + x0) * (1.0 - fx) + take(r1 + x1) * fx
    return top * (1.0 - fy) + bot * fy


def _resize(arr: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize of the last two axes (pixel-centre aligned)."""
    h, w = arr.shape[-2:]
    if (h, w) == (new_h, new_w):
        return arr.copy()
    ys = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    xs = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _bilinear(arr, yy, xx).astype(arr.dtype, copy=False)


def pyramid_shapes(shape: tuple[int, int], params: FlowParams) -> list[tuple[int, int]]:
    """Level sizes from full resolution downward.

    Levels whose size would fall below the expansion neighbourhood are
    dropped, so small images get fewer levels than requested.
    """
    n = 2 * params.poly_radius + 1
    shapes = [tuple(shape)]
    for _ in range(params.pyramid_levels - 1):
        h, w = shapes[-1]
        nh = int(round(h * params.pyramid_scale))
        nw = int(round(w * params.pyramid_scale))
        if nh < n or nw < n:
            break
        shapes.append((nh, nw))
    return shapes


def build_pyramid(img, params: FlowParams) -> list[np.ndarray]:
    img = _as_float(img)
    sigma = 0.5 / params.pyramid_scale
    radius = max(1, int(np.ceil(3 * sigma)))
    levels = [img]
    for nh, nw in pyramid_shapes(img.shape, params)[1:]:
        levels.append(_resize(_blur(levels[-1], sigma, radius), nh, nw))
    return levels


def expand_pyramid(img, params: FlowParams) -> list[np.ndarray]:
    """Polynomial expansion of every pyramid level, as (5, h, w) stacks."""
    return [polynomial_expansion(level, params.poly_radius, params.poly_sigma).stack()
            .astype(np.float32) for level in build_pyramid(img, params)]


@numba.njit(cache=True)
def _normal_equations(e0, e1, dx, dy):  # pragma: no cover - compiled
    h, w = dx.shape
    out = np.empty((5, h, w), dtype=np.float32)
    for i in range(h):
        for j in range(w):
            # bilinear sample of the second expansion at the displaced point
            y = min(max(i + dy[i, j], 0.0), h - 1.0)
            x = min(max(j + dx[i, j], 0.0), w - 1.0)
            y0 = int(np.floor(y))
            x0 = int(np.floor(x))
            y1 = min(y0 + 1, h - 1)
            x1 = min(x0 + 1, w - 1)
            fy = y - y0
            fx = x - x0
            w00 = (1.0 - fy) * (1.0 - fx)
            w01 = (1.0 - fy) * fx
            w10 = fy * (1.0 - fx)
            w11 = fy * fx
            s0 = (e1[0, y0, x0] * w00 + e1[0, y0, x1] * w01
                  + e1[0, y1, x0] * w10 + e1[0, y1, x1] * w11)
            s1 = (e1[1, y0, x0] * w00 + e1[1, y0, x1] * w01
                  + e1[1, y1, x0] * w10 + e1[1, y1, x1] * w11)
            s2 = (e1[2, y0, x0] * w00 + e1[2, y0, x1] * w01
                  + e1[2, y1, x0] * w10 + e1[2, y1, x1] * w11)
            s3 = (e1[3, y0, x0] * w00 + e1[3, y0, x1] * w01
                  + e1[3, y1, x0] * w10 + e1[3, y1, x1] * w11)
            s4 = (e1[4, y0, x0] * w00 + e1[4, y0, x1] * w01
                  + e1[4, y1, x0] * w10 + e1[4, y1, x1] * w11)
            a11 = 0.5 * (e0[0, i, j] + s0)
            a12 = 0.5 * (e0[1, i, j] + s1)
            a22 = 0.5 * (e0[2, i, j] + s2)
            # the right-hand side carries the current displacement, so the
            # solve yields the total displacement rather than an increment
            hx = -0.5 * (s3 - e0[3, i, j]) + a11 * dx[i, j] + a12 * dy[i, j]
            hy = -0.5 * (s4 - e0[4, i, j]) + a12 * dx[i, j] + a22 * dy[i, j]
            out[0, i, j] = a11 * a11 + a12 * a12
            out[1, i, j] = a12 * (a11 + a22)
            out[2, i, j] = a12 * a12 + a22 * a22
            out[3, i, j] = a11 * hx + a12 * hy
            out[4, i, j] = a12 * hx + a22 * hy
    return out


def _update_flow(e0: np.ndarray, e1: np.ndarray, dx: np.ndarray, dy: np.ndarray,
                 params: FlowParams) -> tuple[np.ndarray, np.ndarray]:
    normal = _normal_equations(e0, e1, dx, dy)
    g11, g12, g22, h1, h2 = _blur(normal, params.window_radius / 2.0, params.window_radius)

    det = g11 * g22 - g12 * g12
    trace = g11 + g22
    ok = det > _SINGULAR_RATIO * trace * trace
    safe = np.where(ok, det, np.float32(1.0))
    new_dx = np.where(ok, (g22 * h1 - g12 * h2) / safe, np.float32(0.0))
    new_dy = np.where(ok, (g11 * h2 - g12 * h1) / safe, np.float32(0.0))
    return new_dx, new_dy


def flow_from_expansions(pyr0: list[np.ndarray], pyr1: list[np.ndarray], params: FlowParams,
                         initial: FlowField | None = None) -> FlowField:
    """Coarse-to-fine flow from two precomputed expansion pyramids."""
    nlev = min(len(pyr0), len(pyr1))
    dx = dy = None
    for lvl in reversed(range(nlev)):
        e0, e1 = pyr0[lvl], pyr1[lvl]
        h, w = e0.shape[-2:]
        if dx is None:
            if initial is not None:
                scale = params.pyramid_scale ** lvl
                init = _resize(np.stack([initial.vx, initial.vy]).astype(np.float32), h, w)
                dx, dy = init[0] * np.float32(scale), init[1] * np.float32(scale)
            else:
                dx = np.zeros((h, w), np.float32)
                dy = np.zeros((h, w), np.float32)
        else:
            up = _resize(np.stack([dx, dy]), h, w) / np.float32(params.pyramid_scale)
            dx, dy = up[0], up[1]
        for _ in range(params.iterations):
            dx, dy = _update_flow(e0, e1, dx, dy, params)
    return FlowField(dx, dy)


def estimate_flow(prev, curr, params: FlowParams | None = None,
                  initial: FlowField | None = None) -> FlowField:
    """Flow from ``prev`` to ``curr``: ``curr(p + d(p)) ~ prev(p)``."""
    params = params or FlowParams()
    a, b = _as_float(prev), _as_float(curr)
    if a.shape != b.shape:
        raise ImageryError(f"frame dimensions differ: {a.shape[::-1]} vs {b.shape[::-1]}")
    if initial is not None and initial.vx.shape != a.shape:
        raise ImageryError("initial flow does not match frame dimensions")
    return flow_from_expansions(expand_pyramid(a, params), expand_pyramid(b, params),
                                params, initial)


def interior(arr: np.ndarray, border: int) -> np.ndarray:
    if border <= 0:
        return arr
    return arr[..., border:-border, border:-border]


def write_flow(path, flow: FlowField) -> None:
    """Dump as ``BFL1`` header (magic, u32 width, height, plane count = 2)
    followed by little-endian float32 vx and vy planes."""
    with open(path, "wb") as fh:
        fh.write(FLOW_HEADER.pack(FLOW_MAGIC, flow.width, flow.height, 2))
        fh.write(flow.vx.astype("<f4").tobytes())
        fh.write(flow.vy.astype("<f4").tobytes())


def read_flow(path) -> FlowField:
    data = Path(path).read_bytes()
    magic, w, h, count = FLOW_HEADER.unpack_from(data)
    if magic != FLOW_MAGIC or count != 2:
        raise ImageryError(f"{path}: not a flow dump")
    planes = np.frombuffer(data[FLOW_HEADER.size:], dtype="<f4")
    if planes.size != 2 * w * h:
        raise ImageryError(f"{path}: flow dump truncated")
    planes = planes.reshape(2, h, w)
    return FlowField(planes[0].astype(np.float64), planes[1].astype(np.float64))
