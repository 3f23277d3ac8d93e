"""Thin PNG/JPEG helpers around Pillow.

Float images live in [0, 1]; 8-bit output uses round-half-up so the
k/255 grid round-trips exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataValidationError


def to_uint8(arr: np.ndarray) -> np.ndarray:
    """value*255, rounded half-up, clipped to [0, 255]."""
    scaled = np.floor(np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5)
    return scaled.astype(np.uint8)


def load_rgb(path) -> np.ndarray:
    """Decode an image file to (H, W, 3) float32 in [0, 1]."""
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise DataValidationError(f"cannot decode image {path}: {exc}") from exc
    return rgb / 255.0


def load_gray(path) -> np.ndarray:
    """Decode an image file to (H, W) uint8 grayscale."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DataValidationError(f"cannot decode image {path}: {exc}") from exc


def save_gray(path, arr01: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(arr01), mode="L").save(path)


def save_rgb(path, arr01: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(arr01), mode="RGB").save(path)


def resize_rgb(img01: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of an (H, W, 3) float image in [0, 1]."""
    im = Image.fromarray(to_uint8(img01), mode="RGB")
    im = im.resize((width, height), Image.BILINEAR)
    return np.asarray(im, dtype=np.float32) / 255.0


def resize_mask(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor resize of a uint8 mask; values are copied, never mixed."""
    im = Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L")
    im = im.resize((width, height), Image.NEAREST)
    return np.asarray(im, dtype=np.uint8)
