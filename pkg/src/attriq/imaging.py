"""Image decoding and backend-agnostic preprocessing.

Resizing is plain bilinear interpolation at pixel centers (half-pixel
convention, edge-clamped) without any cropping, so the aspect ratio is
distorted to the backend's input size. Interpolation runs in float64; the
normalization applied afterwards is (pixel/255 - mean) / scale per channel.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import UndecodableImage


def decode_image(data: bytes) -> np.ndarray:
    """Decode PNG/JPEG/TIFF bytes into an RGB uint8 array (H, W, 3)."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
            array = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise UndecodableImage(f"cannot decode image: {exc}") from exc
    if array.ndim != 3 or array.shape[0] == 0 or array.shape[1] == 0:
        raise UndecodableImage("decoded image has zero extent")
    return array


def load_image(path: str | Path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UndecodableImage(f"cannot read {path}: {exc}") from exc
    return decode_image(data)


def _sample_positions(out_size: int, in_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edge-clamped source indices and fractional weights for one axis."""
    positions = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    lo = np.floor(positions).astype(int)
    frac = positions - lo
    lo_clamped = np.clip(lo, 0, in_size - 1)
    hi_clamped = np.clip(lo + 1, 0, in_size - 1)
    # outside the image the nearest edge pixel is used with full weight
    frac = np.where(lo < 0, 0.0, frac)
    frac = np.where(lo + 1 > in_size - 1, 0.0, frac)
    return lo_clamped, hi_clamped, frac


def resize_bilinear(image: np.ndarray, width: int, height: int) -> np.ndarray:
    """Resize an (H, W, C) or (H, W) array bilinearly; returns float64."""
    source = np.asarray(image, dtype=np.float64)
    squeeze = source.ndim == 2
    if squeeze:
        source = source[:, :, None]
    in_h, in_w = source.shape[:2]

    y_lo, y_hi, fy = _sample_positions(height, in_h)
    x_lo, x_hi, fx = _sample_positions(width, in_w)

    top = source[y_lo][:, x_lo] * (1.0 - fx)[None, :, None] + source[y_lo][:, x_hi] * fx[None, :, None]
    bottom = source[y_hi][:, x_lo] * (1.0 - fx)[None, :, None] + source[y_hi][:, x_hi] * fx[None, :, None]
    result = top * (1.0 - fy)[:, None, None] + bottom * fy[:, None, None]
    return result[:, :, 0] if squeeze else result


def preprocess(
    image: np.ndarray,
    width: int,
    height: int,
    mean: tuple[float, float, float],
    scale: tuple[float, float, float],
    channel_order: str = "rgb",
) -> np.ndarray:
    """Produce the (height, width, 3) normalized float32 input tensor."""
    resized = resize_bilinear(image, width, height)
    if channel_order == "bgr":
        resized = resized[:, :, ::-1]
    elif channel_order != "rgb":
        raise ValueError(f"unsupported channel order {channel_order!r}")
    mean_arr = np.asarray(mean, dtype=np.float64)
    scale_arr = np.asarray(scale, dtype=np.float64)
    normalized = (resized / 255.0 - mean_arr) / scale_arr
    return normalized.astype(np.float32)
