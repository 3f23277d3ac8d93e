"""Photometric image representations used as network inputs.

All functions operate on numpy arrays with these conventions:

* an RGB image is ``(H, W, 3)`` float in ``[0, 1]``,
* an HSV image is ``(H, W, 3)`` float with H, S, V each in ``[0, 1]``,
* a scalar map is ``(H, W)`` float,
* plane sets stack representations channel-first as ``(C, H, W)``.

Internally everything is computed in float64; :func:`build_plane_set`
downcasts to float32 because that is what training consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# Fixed per-branch channel counts and the deterministic plane ordering.
PLANE_ORDER = ("RGB", "HSV", "G", "C")
PLANE_CHANNELS = {"RGB": 3, "HSV": 3, "G": 3, "C": 1}


@dataclass(frozen=True)
class ContrastParams:
    """Windowing parameters for the local contrast map.

    ``window_n`` spans columns and ``window_m`` spans rows; both must be
    odd so the window is centered.  ``luminance_floor`` is fixed by the
    map definition and guards the denominator against tiny means.
    """

    window_n: int = 17
    window_m: int = 17
    stride_k: int = 4
    luminance_floor: float = 10.0

    def __post_init__(self):
        for name in ("window_n", "window_m"):
            w = getattr(self, name)
            if w < 3 or w % 2 == 0:
                raise ConfigurationError(f"{name} must be odd and >= 3, got {w}")
        if self.stride_k < 1:
            raise ConfigurationError(f"stride_k must be >= 1, got {self.stride_k}")


@dataclass
class PlaneEntry:
    name: str
    channels: int
    data: np.ndarray  # (channels, H, W)


@dataclass
class PixelPlaneSet:
    """Ordered, named representation planes sharing one geometry."""

    combo_id: str
    entries: list[PlaneEntry] = field(default_factory=list)

    @property
    def names(self):
        return tuple(e.name for e in self.entries)

    @property
    def total_channels(self):
        return sum(e.channels for e in self.entries)

    @property
    def geometry(self):
        return self.entries[0].data.shape[1:]


def parse_combo(combo_id: str) -> tuple[str, ...]:
    """Validate a combo id like ``"RGB+G"`` and return its plane names
    in the fixed ``PLANE_ORDER``."""
    parts = combo_id.split("+")
    if not parts or any(p not in PLANE_CHANNELS for p in parts):
        raise ConfigurationError(
            f"unknown combo {combo_id!r}; parts must be drawn from {sorted(PLANE_CHANNELS)}"
        )
    if len(set(parts)) != len(parts):
        raise ConfigurationError(f"combo {combo_id!r} repeats a plane name")
    return tuple(name for name in PLANE_ORDER if name in parts)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> HSV with all channels in [0, 1] (H = degrees/360).

    Achromatic pixels (S = 0, including black) get H = 0.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc

    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)

    safe = np.where(delta > 0, delta, 1.0)
    h = np.select(
        [r == maxc, g == maxc],
        [(g - b) / safe, 2.0 + (b - r) / safe],
        default=4.0 + (r - g) / safe,
    )
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def luminance(v_plane: np.ndarray) -> np.ndarray:
    """Power-law luminance of the value channel expressed on a 0-255 scale."""
    v = np.asarray(v_plane, dtype=np.float64)
    return (0.02874 * v) ** 2.2


def _lattice(n: int, k: int) -> np.ndarray:
    """Stride-k sample coordinates in [0, n), always including n - 1."""
    idx = np.arange(0, n, k)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def _window_stats_at(l_plane, params, rows, cols):
    """Sample std and mean of clipped centered windows at given centers.

    Uses integral images; the plane is shifted by its global mean before
    the squared sums to keep the variance numerically stable.
    """
    a = np.asarray(l_plane, dtype=np.float64)
    h, w = a.shape
    if a.size < 2:
        raise ValueError("window statistics need an image with at least 2 pixels")
    half_r = params.window_m // 2
    half_c = params.window_n // 2

    shift = a.mean()
    b = a - shift

    ii1 = np.zeros((h + 1, w + 1))
    ii1[1:, 1:] = np.cumsum(np.cumsum(b, axis=0), axis=1)
    ii2 = np.zeros((h + 1, w + 1))
    ii2[1:, 1:] = np.cumsum(np.cumsum(b * b, axis=0), axis=1)

    r0 = np.clip(rows - half_r, 0, None)
    r1 = np.minimum(rows + half_r, h - 1) + 1
    c0 = np.clip(cols - half_c, 0, None)
    c1 = np.minimum(cols + half_c, w - 1) + 1

    def box(ii):
        return ii[np.ix_(r1, c1)] - ii[np.ix_(r0, c1)] - ii[np.ix_(r1, c0)] + ii[np.ix_(r0, c0)]

    count = (r1 - r0)[:, None] * (c1 - c0)[None, :]
    s1 = box(ii1)
    s2 = box(ii2)

    var = (s2 - s1 * s1 / count) / (count - 1)
    std = np.sqrt(np.maximum(var, 0.0))
    mean = s1 / count + shift
    return std, mean


def window_stats(l_plane: np.ndarray, params: ContrastParams):
    """Full-resolution clipped-window sample std and mean of a scalar map."""
    h, w = np.asarray(l_plane).shape
    return _window_stats_at(l_plane, params, np.arange(h), np.arange(w))


def contrast_map(l_plane: np.ndarray, params: ContrastParams = ContrastParams()) -> np.ndarray:
    """Local contrast: windowed std of luminance over its floored mean.

    Windows are clipped at image borders and the std divisor is the
    actual pixel count minus one.  Values are >= 0 and may exceed 1.
    """
    std, mean = window_stats(l_plane, params)
    return std / np.maximum(params.luminance_floor, mean)


def contrast_map_strided(l_plane: np.ndarray, params: ContrastParams = ContrastParams()) -> np.ndarray:
    """Contrast map computed exactly on a stride-k lattice and bilinearly
    interpolated back to full resolution.

    With ``stride_k == 1`` the output is bitwise equal to
    :func:`contrast_map`.
    """
    a = np.asarray(l_plane, dtype=np.float64)
    h, w = a.shape
    rows = _lattice(h, params.stride_k)
    cols = _lattice(w, params.stride_k)
    std, mean = _window_stats_at(a, params, rows, cols)
    coarse = std / np.maximum(params.luminance_floor, mean)
    return _bilinear_expand(coarse, rows, cols, h, w)


def _interp_axis0(values, lattice, n):
    if len(lattice) == 1:
        return np.repeat(values, n, axis=0)
    pos = np.arange(n)
    seg = np.clip(np.searchsorted(lattice, pos, side="right") - 1, 0, len(lattice) - 2)
    lo = lattice[seg]
    hi = lattice[seg + 1]
    t = ((pos - lo) / (hi - lo)).reshape((n,) + (1,) * (values.ndim - 1))
    return (1.0 - t) * values[seg] + t * values[seg + 1]


def _bilinear_expand(coarse, rows, cols, h, w):
    full_rows = _interp_axis0(coarse, rows, h)
    return _interp_axis0(full_rows.T, cols, w).T


def rescale(arr: np.ndarray) -> np.ndarray:
    """Joint min-max normalization over all channels and pixels.

    A constant input maps to all zeros.
    """
    a = np.asarray(arr, dtype=np.float64)
    lo = a.min()
    hi = a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def photometric_map(rgb: np.ndarray, s_plane: np.ndarray, c_map: np.ndarray) -> np.ndarray:
    """Per-channel product of RGB, (1 - saturation) and (1 - contrast),
    jointly rescaled to [0, 1].

    The contrast factor is clamped to [0, 1] here so the product stays
    nonnegative; the contrast map itself is stored unclamped.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    s = np.asarray(s_plane, dtype=np.float64)
    c = np.clip(np.asarray(c_map, dtype=np.float64), 0.0, 1.0)
    prod = rgb * ((1.0 - s) * (1.0 - c))[..., None]
    return rescale(prod)


def compute_planes(rgb: np.ndarray, names, params: ContrastParams = ContrastParams()):
    """Compute the named representations (plus their prerequisites) for one
    RGB image.  Returns a dict name -> channel-first float64 raster."""
    names = set(names)
    unknown = names - set(PLANE_CHANNELS)
    if unknown:
        raise ConfigurationError(f"unknown plane names {sorted(unknown)}")
    rgb = np.asarray(rgb, dtype=np.float64)
    out = {}
    if "RGB" in names:
        out["RGB"] = rgb.transpose(2, 0, 1)

    hsv = None
    if names & {"HSV", "C", "G"}:
        hsv = rgb_to_hsv(rgb)
    if "HSV" in names:
        out["HSV"] = hsv.transpose(2, 0, 1)

    c_map = None
    if names & {"C", "G"}:
        lum = luminance(hsv[..., 2] * 255.0)
        c_map = contrast_map_strided(lum, params)
    if "C" in names:
        out["C"] = c_map[None, :, :]
    if "G" in names:
        out["G"] = photometric_map(rgb, hsv[..., 1], c_map).transpose(2, 0, 1)
    return out


def build_plane_set(rgb: np.ndarray, combo_id: str, params: ContrastParams = ContrastParams()) -> PixelPlaneSet:
    """Assemble the float32 plane set for one combo, entries ordered
    RGB, HSV, G, C."""
    names = parse_combo(combo_id)
    planes = compute_planes(rgb, names, params)
    entries = [
        PlaneEntry(name, PLANE_CHANNELS[name], planes[name].astype(np.float32))
        for name in names
    ]
    return PixelPlaneSet(combo_id=combo_id, entries=entries)
