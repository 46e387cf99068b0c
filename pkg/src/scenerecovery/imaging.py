"""Image representation, PNG IO, and order-statistics primitives.

Images are plain numpy arrays in HWC layout with float values in [0, 1]
(RGB, 3 channels). Network feature maps use torch BCHW tensors; the
conversion helpers live here so every module agrees on the conventions.
"""

from __future__ import annotations

import math
import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import BadWindow, DomainError, EmptyInput, FormatError, ShapeMismatch

__all__ = [
    "load_image",
    "save_image",
    "load_depth",
    "save_depth",
    "percentile",
    "clamp01",
    "require_hwc",
    "hwc_to_bchw",
    "bchw_to_hwc",
]


def require_hwc(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check HWC RGB layout and return the array unchanged."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatch(f"{name} must be HxWx3, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeMismatch(f"{name} has empty spatial dims: {img.shape}")
    return img


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Load an RGB PNG as an HWC float32 array scaled to [0, 1].

    8-bit values map to v/255 (16-bit to v/65535). Missing files raise
    FileNotFoundError; files that decode to anything but an RGB raster
    raise FormatError.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise FormatError(f"cannot decode {path}: {exc}") from None
    if mode != "RGB":
        raise FormatError(f"{path}: expected RGB raster, got mode {mode!r}")
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"{path}: unsupported sample dtype {arr.dtype}")
    return (arr.astype(np.float32) / scale).reshape(arr.shape[0], arr.shape[1], 3)


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Clamp to [0, 1], quantize to 8 bit (round half up), write a PNG."""
    img = require_hwc(img)
    q = np.floor(clamp01(img).astype(np.float64) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q, mode="RGB").save(path, format="PNG")


def load_depth(path: str | os.PathLike) -> np.ndarray:
    """Load a single-channel PNG depth map as HxW float32 in [0, 1]."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such depth map: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise FormatError(f"cannot decode {path}: {exc}") from None
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected single-channel raster, got mode {mode!r}")
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype in (np.uint16, np.int32, np.uint32):
        scale = 65535.0
    else:
        raise FormatError(f"{path}: unsupported depth dtype {arr.dtype}")
    return arr.astype(np.float32) / scale


def save_depth(depth: np.ndarray, path: str | os.PathLike) -> None:
    """Write an HxW array in [0, 1] as a 16-bit single-channel PNG."""
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise ShapeMismatch(f"depth must be HxW, got shape {depth.shape}")
    q = np.floor(np.clip(depth, 0.0, 1.0).astype(np.float64) * 65535.0 + 0.5)
    Image.fromarray(q.astype(np.uint16)).save(path, format="PNG")


def percentile(values: np.ndarray, p: float) -> float:
    """Nearest-rank percentile: the value at rank ceil(p*N) of the sorted array.

    p = 0 maps to the minimum, p = 1 to the maximum. No interpolation, so
    the result is always an element of `values` and ties are deterministic.
    """
    flat = np.asarray(values).ravel()
    if flat.size == 0:
        raise EmptyInput("percentile of an empty array")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"percentile fraction must lie in [0, 1], got {p}")
    n = flat.size
    # tiny guard so p*n that is an exact integer in real arithmetic does not
    # get bumped to the next rank by float round-off
    rank = max(int(math.ceil(p * n - 1e-9)), 1)
    rank = min(rank, n)
    return float(np.partition(flat, rank - 1)[rank - 1])


def clamp01(img: np.ndarray) -> np.ndarray:
    """Elementwise min(max(x, 0), 1)."""
    return np.clip(img, 0.0, 1.0)


def hwc_to_bchw(img: np.ndarray) -> np.ndarray:
    """HxWxC image to 1xCxHxW batch."""
    img = require_hwc(img)
    return np.transpose(img, (2, 0, 1))[None, ...]


def bchw_to_hwc(batch: np.ndarray) -> np.ndarray:
    """1xCxHxW batch back to HxWxC."""
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[0] != 1:
        raise ShapeMismatch(f"expected a single-image BCHW batch, got {batch.shape}")
    return np.transpose(batch[0], (1, 2, 0))


def odd_window(window: int) -> int:
    """Validate an odd window side length >= 1."""
    if not isinstance(window, (int, np.integer)) or window < 1 or window % 2 == 0:
        raise BadWindow(f"window must be a positive odd integer, got {window}")
    return int(window)
