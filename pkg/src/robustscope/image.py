"""Float RGB image type and shared raster helpers (blur, HSV, resampling)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

LUMA_601 = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True)
class Image:
    """RGB float32 grid in [0,1], stored [H, W, 3]."""

    rgb: np.ndarray

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ShapeError(f"image must be [H,W,3], got {self.rgb.shape}")
        object.__setattr__(self, "rgb", np.ascontiguousarray(self.rgb, dtype=np.float32))

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    def clamped(self) -> "Image":
        return Image(np.clip(self.rgb, 0.0, 1.0))

    def to_chw(self) -> np.ndarray:
        return np.ascontiguousarray(self.rgb.transpose(2, 0, 1))

    @staticmethod
    def from_chw(chw: np.ndarray) -> "Image":
        return Image(np.asarray(chw).transpose(1, 2, 0))

    @staticmethod
    def flat(height: int, width: int, color) -> "Image":
        rgb = np.empty((height, width, 3), dtype=np.float32)
        rgb[:] = np.asarray(color, dtype=np.float32)
        return Image(rgb)

    def to_uint8(self) -> np.ndarray:
        return np.round(np.clip(self.rgb, 0.0, 1.0) * 255.0).astype(np.uint8)

    @staticmethod
    def from_uint8(arr: np.ndarray) -> "Image":
        return Image(arr.astype(np.float32) / 255.0)


def luma(rgb: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma, [..., 3] -> [...]."""
    return rgb @ LUMA_601


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1D kernel sampled at integer offsets over radius round(3*sigma), sum 1."""
    radius = max(1, int(round(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def gaussian_blur(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect padding; [H,W] or [H,W,C] float."""
    if sigma <= 0:
        return arr.copy()
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    out = arr.astype(np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (r, r)
        padded = np.pad(out, pad, mode="reflect")
        acc = np.zeros_like(out)
        for i, w in enumerate(k):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(i, i + out.shape[axis])
            acc += w * padded[tuple(sl)]
        out = acc
    return out.astype(arr.dtype)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB->HSV on [...,3] arrays, h/s/v in [0,1]."""
    rgb = rgb.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    choices = [
        np.stack([v, t, p], axis=-1),
        np.stack([q, v, p], axis=-1),
        np.stack([p, v, t], axis=-1),
        np.stack([p, q, v], axis=-1),
        np.stack([t, p, v], axis=-1),
        np.stack([v, p, q], axis=-1),
    ]
    out = np.choose(i[..., None], choices)
    return out


def resize_nearest(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor resize of [H,W,...]: source index floor(i*sh/dh)."""
    sh, sw = arr.shape[:2]
    ys = (np.arange(height) * sh) // height
    xs = (np.arange(width) * sw) // width
    return arr[ys][:, xs]


def box_downsample(arr: np.ndarray) -> np.ndarray:
    """Halve both spatial dims by 2x2 box averaging (edge row/col clamped)."""
    h, w = arr.shape[:2]
    if h == 1 and w == 1:
        return arr.copy()
    nh, nw = max(1, h // 2), max(1, w // 2)
    ys = 2 * np.arange(nh)[:, None]
    xs = 2 * np.arange(nw)[None, :]
    y1 = np.minimum(ys + 1, h - 1)
    x1 = np.minimum(xs + 1, w - 1)
    acc = (arr[ys, xs].astype(np.float64) + arr[y1, xs]
           + arr[ys, x1] + arr[y1, x1])
    return (acc / 4.0).astype(arr.dtype)


def build_mip_pyramid(tex: np.ndarray) -> list[np.ndarray]:
    """Full pyramid down to 1x1 via repeated 2x2 box filtering."""
    levels = [np.ascontiguousarray(tex, dtype=np.float32)]
    while levels[-1].shape[0] > 1 or levels[-1].shape[1] > 1:
        levels.append(box_downsample(levels[-1]))
    return levels


def sample_bilinear_wrap(tex: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear texture sample with wrap addressing; u,v in texture UV space."""
    h, w = tex.shape[:2]
    x = u * w - 0.5
    y = v * h - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0w, x1w = x0 % w, (x0 + 1) % w
    y0w, y1w = y0 % h, (y0 + 1) % h
    c00 = tex[y0w, x0w]
    c10 = tex[y0w, x1w]
    c01 = tex[y1w, x0w]
    c11 = tex[y1w, x1w]
    top = c00 * (1 - fx) + c10 * fx
    bot = c01 * (1 - fx) + c11 * fx
    return top * (1 - fy) + bot * fy
