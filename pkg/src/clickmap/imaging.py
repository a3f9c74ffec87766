"""Stimulus preparation: blur, bubble compositing, heatmap overlays, PNG I/O.

Images are numpy float64 arrays with values in [0, 1], shaped (h, w) for
grayscale or (h, w, 3) for RGB. Conversions to and from 8-bit PNG happen
only at the file boundary.
"""
from __future__ import annotations

import hashlib
import math
import os
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import PngImagePlugin

from .errors import DimensionMismatchError, ValidationError


def _as_image(arr) -> np.ndarray:
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[-1] != 3):
        raise DimensionMismatchError(
            f"expected (h, w) or (h, w, 3) image, got shape {img.shape}"
        )
    return img


def _half_kernel(sigma: float) -> np.ndarray:
    # Taps for offsets 0..R with R = ceil(3*sigma), normalized so the full
    # mirrored kernel sums to exactly 1 and w[+r] == w[-r] bitwise.
    radius = math.ceil(3.0 * sigma)
    r = np.arange(radius + 1, dtype=np.float64)
    taps = np.exp(-(r * r) / (2.0 * sigma * sigma))
    full = np.concatenate([taps[:0:-1], taps])
    return taps / full.sum()


def _blur_axis(img: np.ndarray, half: np.ndarray, axis: int) -> np.ndarray:
    radius = len(half) - 1
    pad = [(0, 0)] * img.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(img, pad, mode="edge")

    def window(offset):
        index = [slice(None)] * img.ndim
        index[axis] = slice(radius + offset, radius + offset + img.shape[axis])
        return padded[tuple(index)]

    # Accumulate symmetric pairs: the +r and -r windows are added before
    # scaling, so mirroring the input mirrors the output bit for bit.
    out = half[0] * window(0)
    for r in range(1, radius + 1):
        out += half[r] * (window(-r) + window(r))
    return out


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge replication.

    Kernel support is ceil(3*sigma) taps per side, renormalized to unit
    sum. ``sigma=0`` is the identity. Output mirrors exactly: blurring a
    flipped image equals flipping the blurred image, with no float slack.
    """
    img = _as_image(img)
    if sigma < 0:
        raise ValidationError(["sigma must be >= 0"])
    if sigma == 0:
        return img.copy()
    half = _half_kernel(sigma)
    return _blur_axis(_blur_axis(img, half, 1), half, 0)


def composite_bubble(sharp, blurred, cx: float, cy: float, radius: float) -> np.ndarray:
    """Reveal a sharp disc of ``radius`` at (cx, cy) over the blurred image.

    A pixel belongs to the bubble when its center lies within ``radius``
    of the bubble center, boundary included.
    """
    sharp = _as_image(sharp)
    blurred = _as_image(blurred)
    if sharp.shape != blurred.shape:
        raise DimensionMismatchError(
            f"sharp {sharp.shape} and blurred {blurred.shape} differ"
        )
    if not radius > 0:
        raise ValidationError(["bubble radius must be > 0"])
    h, w = sharp.shape[:2]
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius
    if sharp.ndim == 3:
        inside = inside[:, :, None]
    return np.where(inside, sharp, blurred)


def _to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def _heat_ramp(v: np.ndarray) -> np.ndarray:
    # Black -> red -> yellow -> white; every channel (and the luminance)
    # is nondecreasing in v.
    r = np.clip(3.0 * v, 0.0, 1.0)
    g = np.clip(3.0 * v - 1.0, 0.0, 1.0)
    b = np.clip(3.0 * v - 2.0, 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def render_heatmap(values, base, alpha: float = 0.6) -> np.ndarray:
    """Overlay a scalar map on its stimulus for visual inspection.

    The map is max-normalized, run through a monotone color ramp, and
    blended over the grayscale stimulus with per-pixel opacity
    ``alpha * normalized_value``, so regions that drew no attention show
    the unobscured photograph.
    """
    values = np.asarray(values, dtype=np.float64)
    base = _as_image(base)
    if values.shape != base.shape[:2]:
        raise DimensionMismatchError(
            f"map {values.shape} does not match image {base.shape[:2]}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(["alpha must be in [0, 1]"])
    peak = values.max()
    norm = values / peak if peak > 0 else np.zeros_like(values)
    gray = np.repeat(_to_gray(base)[:, :, None], 3, axis=2)
    weight = (alpha * norm)[:, :, None]
    return (1.0 - weight) * gray + weight * _heat_ramp(norm)


def load_image(path) -> np.ndarray:
    """Read a PNG (or other Pillow-readable file) into a [0, 1] float array."""
    with PILImage.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(img, path, text: dict | None = None) -> None:
    """Write a [0, 1] float array as an 8-bit PNG.

    ``text`` entries become tEXt chunks (written in sorted key order so
    identical inputs give identical bytes).
    """
    img = _as_image(img)
    quantized = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    mode = "L" if quantized.ndim == 2 else "RGB"
    pnginfo = None
    if text:
        pnginfo = PngImagePlugin.PngInfo()
        for key in sorted(text):
            pnginfo.add_text(key, text[key])
    PILImage.fromarray(quantized, mode=mode).save(path, format="PNG", pnginfo=pnginfo)


def blurred_variant(src_path, sigma: float, cache_dir) -> Path:
    """Blur ``src_path`` at ``sigma`` once, caching the PNG on disk.

    The cache key covers the source bytes and the sigma, so edited images
    or changed parameters get fresh entries. The file is written to a
    temporary name and renamed into place, so a concurrent reader never
    sees a partial PNG.
    """
    src_path = Path(src_path)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256()
    digest.update(src_path.read_bytes())
    digest.update(repr(float(sigma)).encode("ascii"))
    target = cache_dir / f"{src_path.stem}-{digest.hexdigest()[:16]}.png"
    if target.exists():
        return target
    blurred = gaussian_blur(load_image(src_path), sigma)
    tmp = target.with_name(f"{target.name}.tmp-{os.getpid()}")
    save_image(blurred, tmp)
    os.replace(tmp, target)
    return target
