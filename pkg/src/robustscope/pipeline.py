"""Post-processing chain applied to the rendered frame.

Stage order is fixed: color -> frequency -> spatial -> attack overlay. Every
stage is the identity at its neutral parameters, and the driver short-circuits
neutral stages so the all-neutral pipeline returns its input bitwise.

The patch shuffle uses a splitmix64 generator with a Fisher-Yates walk
(j = next() % (i+1), i descending); both are documented in docs/formats.md so
the permutation is reproducible outside this codebase.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, StateError
from .image import Image, gaussian_blur, hsv_to_rgb, luma, resize_nearest, rgb_to_hsv

_SM64_MASK = (1 << 64) - 1


class SplitMix64:
    """64-bit splitmix generator (finalizer constants from the reference design)."""

    def __init__(self, seed: int):
        self._state = seed & _SM64_MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _SM64_MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _SM64_MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _SM64_MASK
        return z ^ (z >> 31)


def shuffle_permutation(n: int, seed: int) -> list[int]:
    """Fisher-Yates permutation of range(n) driven by SplitMix64."""
    rng = SplitMix64(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


# ---------------------------------------------------------------------------
# color
# ---------------------------------------------------------------------------

def apply_color(img: Image, fade_to_black: float, hue_shift: float,
                saturation: float, contrast: float) -> Image:
    """Contrast (about mid-gray), hue rotation, desaturation, fade, in order."""
    rgb = img.rgb.astype(np.float64)
    if contrast != 1.0:
        rgb = (rgb - 0.5) * contrast + 0.5
        rgb = np.clip(rgb, 0.0, 1.0)
    if hue_shift != 0.0:
        hsv = rgb_to_hsv(np.clip(rgb, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + hue_shift / 360.0) % 1.0
        rgb = hsv_to_rgb(hsv)
    if saturation != 1.0:
        y = luma(rgb.astype(np.float32)).astype(np.float64)[..., None]
        rgb = y + (rgb - y) * saturation
    if fade_to_black != 0.0:
        rgb = rgb * (1.0 - fade_to_black)
    return Image(np.clip(rgb, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# frequency
# ---------------------------------------------------------------------------

def frequency_split(img: Image, split_sigma: float) -> tuple[Image, np.ndarray]:
    """Two-band decomposition: low = Gaussian(img), high = img - low (signed)."""
    if split_sigma <= 0:
        raise StateError(f"split_sigma must be > 0, got {split_sigma}")
    low = gaussian_blur(img.rgb, split_sigma)
    high = img.rgb - low
    return Image(low), high


def frequency_recombine(low: Image, high: np.ndarray, low_gain: float,
                        high_gain: float) -> Image:
    out = low_gain * low.rgb.astype(np.float64) + high_gain * high.astype(np.float64)
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# spatial
# ---------------------------------------------------------------------------

def _grid_bounds(n: int, k: int) -> list[tuple[int, int]]:
    edges = [int(round(i * n / k)) for i in range(k + 1)]
    return [(edges[i], edges[i + 1]) for i in range(k)]


def patch_shuffle(img: Image, k: int, seed: int) -> Image:
    """Permute a k x k cell grid; unequal cells are nearest-neighbor resized.

    Cell index g = row * k + col; destination cell g receives the content of
    source cell perm[g].
    """
    h, w = img.height, img.width
    if not (1 <= k <= min(h, w)):
        raise StateError(f"patch_k must be in [1, {min(h, w)}], got {k}")
    if k == 1:
        return img
    rows = _grid_bounds(h, k)
    cols = _grid_bounds(w, k)
    perm = shuffle_permutation(k * k, seed)
    out = np.empty_like(img.rgb)
    for dst in range(k * k):
        src = perm[dst]
        dy0, dy1 = rows[dst // k]
        dx0, dx1 = cols[dst % k]
        sy0, sy1 = rows[src // k]
        sx0, sx1 = cols[src % k]
        cell = img.rgb[sy0:sy1, sx0:sx1]
        if cell.shape[:2] != (dy1 - dy0, dx1 - dx0):
            cell = resize_nearest(cell, dy1 - dy0, dx1 - dx0)
        out[dy0:dy1, dx0:dx1] = cell
    return Image(out)


def attack_overlay(img: Image, delta: np.ndarray, alpha: float,
                   image_fade: float) -> Image:
    """Blend toward mid-gray by image_fade, then add alpha * delta, clamped."""
    if delta.shape != img.rgb.shape:
        raise ShapeError(f"delta shape {delta.shape} != image {img.rgb.shape}")
    out = (img.rgb.astype(np.float64) * (1.0 - image_fade)
           + 0.5 * image_fade + alpha * delta.astype(np.float64))
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def run_pipeline(img: Image, state, delta: np.ndarray | None = None) -> Image:
    """Apply color -> frequency -> spatial -> attack overlay per SceneState.

    Stages at neutral parameters are skipped entirely, so the all-neutral
    pipeline is a bitwise identity.
    """
    out = img
    if not state.color_neutral():
        out = apply_color(out, state.fade_to_black, state.hue_shift,
                          state.saturation, state.contrast)
    if not state.frequency_neutral():
        low, high = frequency_split(out, state.split_sigma)
        out = frequency_recombine(low, high, state.low_gain, state.high_gain)
    if not state.spatial_neutral():
        out = patch_shuffle(out, state.patch_k, state.shuffle_seed)
    if delta is not None and (state.attack_alpha != 0.0 or state.attack_image_fade != 0.0):
        out = attack_overlay(out, delta, state.attack_alpha, state.attack_image_fade)
    return out
