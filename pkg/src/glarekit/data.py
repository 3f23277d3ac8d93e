"""Dataset scanning, loading, and the synthetic glare corpus.

On-disk layout:

    <root>/images/<id>.(png|jpg|jpeg)
    <root>/masks/<id>.png          8-bit grayscale, 255 = glare

An optional ``<root>/manifest.json`` overrides the stem pairing with a
list of ``{"id": ..., "image": ..., "mask": ...}`` records (paths
relative to the root).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataValidationError
from . import pngio

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
DEFAULT_RESOLUTION = (256, 256)
MASK_CUT = 128  # 8-bit values >= this are glare; tolerates lossy label artifacts

# The synthetic generator rejects samples outside this glare-pixel share.
MIN_GLARE_FRACTION = 0.005
MAX_GLARE_FRACTION = 0.30


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image_path: Path
    mask_path: Path


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry]
    resolution: tuple[int, int] = DEFAULT_RESOLUTION

    def __len__(self):
        return len(self.entries)


@dataclass
class SamplePair:
    """One image with its binary glare mask, in training geometry."""

    id: str
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    mask: np.ndarray  # (H, W) uint8 in {0, 1}


def scan_dataset(root, resolution=DEFAULT_RESOLUTION) -> DatasetManifest:
    """Pair images with masks by filename stem, sorted lexicographically.

    Raises :class:`DataValidationError` naming every orphan image or
    mask, and when no samples are found.
    """
    root = Path(root)
    images_dir = root / "images"
    masks_dir = root / "masks"
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise DataValidationError(f"{root} must contain images/ and masks/ directories")

    override = root / "manifest.json"
    if override.is_file():
        entries = _entries_from_manifest(root, override)
    else:
        images = {
            p.stem: p
            for p in images_dir.iterdir()
            if p.suffix.lower() in IMAGE_SUFFIXES
        }
        masks = {p.stem: p for p in masks_dir.iterdir() if p.suffix.lower() == ".png"}
        orphan_images = sorted(set(images) - set(masks))
        orphan_masks = sorted(set(masks) - set(images))
        if orphan_images or orphan_masks:
            parts = []
            if orphan_images:
                parts.append(f"images without masks: {', '.join(orphan_images)}")
            if orphan_masks:
                parts.append(f"masks without images: {', '.join(orphan_masks)}")
            raise DataValidationError("; ".join(parts))
        entries = [
            ManifestEntry(stem, images[stem], masks[stem]) for stem in sorted(images)
        ]
    if not entries:
        raise DataValidationError(f"no samples found under {root}")
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise DataValidationError(f"duplicate sample ids under {root}")
    return DatasetManifest(root=root, entries=entries, resolution=tuple(resolution))


def _entries_from_manifest(root: Path, override: Path) -> list[ManifestEntry]:
    try:
        records = json.loads(override.read_text())
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"cannot parse {override}: {exc}") from exc
    entries = []
    for rec in records:
        try:
            entry = ManifestEntry(str(rec["id"]), root / rec["image"], root / rec["mask"])
        except (KeyError, TypeError) as exc:
            raise DataValidationError(f"bad manifest record {rec!r} in {override}") from exc
        for p in (entry.image_path, entry.mask_path):
            if not p.is_file():
                raise DataValidationError(f"manifest references missing file {p}")
        entries.append(entry)
    return sorted(entries, key=lambda e: e.id)


def load_pair(entry: ManifestEntry, resolution=DEFAULT_RESOLUTION) -> SamplePair:
    """Decode and resize one sample: bilinear for the image,
    nearest-neighbor then a 128 cut for the mask."""
    h, w = resolution
    try:
        with Image.open(entry.image_path) as im:
            im = im.convert("RGB")
            if im.size != (w, h):
                im = im.resize((w, h), Image.BILINEAR)
            image = np.asarray(im, dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DataValidationError(f"cannot decode image {entry.image_path}: {exc}") from exc
    try:
        with Image.open(entry.mask_path) as im:
            im = im.convert("L")
            if im.size != (w, h):
                im = im.resize((w, h), Image.NEAREST)
            mask = (np.asarray(im, dtype=np.uint8) >= MASK_CUT).astype(np.uint8)
    except (OSError, ValueError) as exc:
        raise DataValidationError(f"cannot decode mask {entry.mask_path}: {exc}") from exc
    return SamplePair(entry.id, image, mask)


def load_all(manifest: DatasetManifest) -> list[SamplePair]:
    return [load_pair(e, manifest.resolution) for e in manifest.entries]


def save_dataset(samples, root) -> None:
    """Write samples in the standard layout (masks as 0/255 PNGs)."""
    root = Path(root)
    for s in samples:
        pngio.save_rgb(root / "images" / f"{s.id}.png", s.image)
        pngio.save_gray(root / "masks" / f"{s.id}.png", s.mask.astype(np.float64))


def _hsv_to_rgb(h, s, v):
    """Vectorized hexcone HSV -> RGB, all channels in [0, 1]."""
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def _smooth_noise(rng, h, w, cells):
    """Low-frequency value noise: a random coarse grid upsampled bilinearly."""
    grid = rng.uniform(0.0, 1.0, size=(cells + 1, cells + 1))
    ys = np.linspace(0.0, cells, h)
    xs = np.linspace(0.0, cells, w)
    y0 = np.minimum(ys.astype(np.int64), cells - 1)
    x0 = np.minimum(xs.astype(np.int64), cells - 1)
    ty = (ys - y0)[:, None]
    tx = (xs - x0)[None, :]
    g00 = grid[np.ix_(y0, x0)]
    g01 = grid[np.ix_(y0, x0 + 1)]
    g10 = grid[np.ix_(y0 + 1, x0)]
    g11 = grid[np.ix_(y0 + 1, x0 + 1)]
    return (1 - ty) * ((1 - tx) * g00 + tx * g01) + ty * ((1 - tx) * g10 + tx * g11)


def _glare_alpha(rng, h, w):
    """Opacity layer of 1-3 radial glare blobs, some with a linear streak.

    Blobs use a flat-top (super-Gaussian) falloff: a saturated plateau
    with a steep but smooth shoulder, like a clipped highlight.
    """
    yy, xx = np.mgrid[0:h, 0:w]
    alpha = np.zeros((h, w))
    scale = min(h, w)
    for _ in range(int(rng.integers(1, 4))):
        cy = rng.uniform(0.15, 0.85) * h
        cx = rng.uniform(0.15, 0.85) * w
        sigma = rng.uniform(0.05, 0.11) * scale
        shoulder = rng.uniform(2.0, 4.0)  # exponent on the squared radius
        q = ((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2)
        alpha = np.maximum(alpha, np.exp(-(q**shoulder)))
        if rng.random() < 0.5:
            theta = rng.uniform(0.0, np.pi)
            u = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
            v = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
            qs = u**2 / (2.0 * (5.0 * sigma) ** 2) + v**2 / (2.0 * (0.4 * sigma) ** 2)
            streak = 0.92 * np.exp(-(qs**shoulder))
            alpha = np.maximum(alpha, streak)
    return np.clip(alpha, 0.0, 1.0)


def _one_synthetic(rng, h, w):
    hue = _smooth_noise(rng, h, w, int(rng.integers(2, 5))) * 0.9
    sat = 0.35 + 0.5 * _smooth_noise(rng, h, w, int(rng.integers(3, 7)))
    val = 0.15 + 0.45 * _smooth_noise(rng, h, w, int(rng.integers(3, 7)))
    background = _hsv_to_rgb(hue, sat, val)

    alpha = _glare_alpha(rng, h, w)
    tint = rng.uniform(0.96, 1.0)
    glare_color = np.array([1.0, 1.0, tint])
    image = background * (1.0 - alpha)[..., None] + glare_color * alpha[..., None]
    mask = (alpha > 0.5).astype(np.uint8)
    return np.clip(image, 0.0, 1.0).astype(np.float32), mask


def synthesize_glare(seed: int, count: int, resolution=(128, 128)) -> list[SamplePair]:
    """Deterministic procedural corpus: textured colored backgrounds with
    bright desaturated glare blobs and streaks.

    Every sample is regenerated until its glare share lies in
    [0.5%, 30%] of the pixels.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    h, w = resolution
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(count):
        while True:
            image, mask = _one_synthetic(rng, h, w)
            frac = mask.mean()
            if MIN_GLARE_FRACTION <= frac <= MAX_GLARE_FRACTION:
                break
        samples.append(SamplePair(f"synth_{i:04d}", image, mask))
    return samples
