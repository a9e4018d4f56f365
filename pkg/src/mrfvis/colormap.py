"""Color coding of embeddings and rendering of dictionary maps.

3-D embeddings are mapped affinely into the CIE L*a*b* space (D65 white
point) and converted to sRGB with per-channel gamut clipping. 2-D
embeddings use a four-anchor bilinear colormap in the style of published
2-D schemes: the unit square blends red (top-left), yellow (top-right),
blue (bottom-left) and green (bottom-right) corner colors of similar
lightness, which yields a monotone hue sweep along every edge.

Dictionary maps paint each (t1, t2) grid cell with its atom's color; the
t2 > t1 region is left white. Rendering is pure and byte-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import ParameterGrid
from .errors import DomainError
from .hsne.embed import Embedding

# Lab target box: generous spread while staying mostly inside sRGB gamut.
LAB_L_RANGE = (20.0, 90.0)
LAB_A_RANGE = (-60.0, 60.0)
LAB_B_RANGE = (-60.0, 60.0)

# Anchor corners of the 2-D map, chosen with similar lightness so that
# position, not brightness, carries the information.
ANCHOR_TOP_LEFT = np.array([0.84, 0.12, 0.12])  # red
ANCHOR_TOP_RIGHT = np.array([0.90, 0.84, 0.16])  # yellow
ANCHOR_BOTTOM_LEFT = np.array([0.14, 0.26, 0.84])  # blue
ANCHOR_BOTTOM_RIGHT = np.array([0.16, 0.72, 0.20])  # green

# D65 reference white and the sRGB conversion matrix (IEC 61966-2-1).
_WHITE = np.array([0.95047, 1.0, 1.08883])
_XYZ_TO_RGB = np.array(
    [
        [3.2404542, -1.5371385, -0.4985314],
        [-0.9692660, 1.8760108, 0.0415560],
        [0.0556434, -0.2040259, 1.0572252],
    ]
)
_RGB_TO_XYZ = np.linalg.inv(_XYZ_TO_RGB)

SCATTER_SIZE = 640
SCATTER_MARGIN = 32
SCATTER_MARKER_RADIUS = 2
# Fixed orthographic view used for 3-D scatters.
SCATTER_AZIMUTH_DEG = 30.0
SCATTER_ELEVATION_DEG = 20.0


@dataclass
class ColorAssignment:
    """One sRGB triple in [0,1]^3 per atom, aligned with grid atom order."""

    rgb: np.ndarray

    def __post_init__(self):
        self.rgb = np.ascontiguousarray(self.rgb, dtype=np.float64)
        if self.rgb.ndim != 2 or self.rgb.shape[1] != 3:
            raise DomainError("rgb must be (n, 3)")
        if self.rgb.min() < 0.0 or self.rgb.max() > 1.0:
            raise DomainError("rgb channels must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.rgb.shape[0]


@dataclass
class DictionaryMapImage:
    """(t1, t2) raster: t1 grows left to right, t2 bottom to top; white = unsampled."""

    pixels: np.ndarray  # (H, W, 3) uint8
    b1: float


def _lab_f_inv(t: np.ndarray) -> np.ndarray:
    delta = 6.0 / 29.0
    return np.where(t > delta, t**3, 3.0 * delta**2 * (t - 4.0 / 29.0))


def _lab_f(t: np.ndarray) -> np.ndarray:
    delta = 6.0 / 29.0
    return np.where(t > delta**3, np.cbrt(t), t / (3.0 * delta**2) + 4.0 / 29.0)


def lab_to_srgb(lab: np.ndarray) -> np.ndarray:
    """CIE L*a*b* (D65) to sRGB in [0,1]; out-of-gamut channels are clipped."""
    lab = np.atleast_2d(np.asarray(lab, dtype=np.float64))
    fy = (lab[:, 0] + 16.0) / 116.0
    fx = fy + lab[:, 1] / 500.0
    fz = fy - lab[:, 2] / 200.0
    xyz = np.stack([_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)], axis=1) * _WHITE
    linear = xyz @ _XYZ_TO_RGB.T
    srgb = np.where(
        linear <= 0.0031308,
        12.92 * linear,
        1.055 * np.sign(linear) * np.abs(linear) ** (1.0 / 2.4) - 0.055,
    )
    return np.clip(srgb, 0.0, 1.0)


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Inverse of `lab_to_srgb` for in-gamut colors."""
    rgb = np.atleast_2d(np.asarray(rgb, dtype=np.float64))
    linear = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _RGB_TO_XYZ.T / _WHITE
    fx, fy, fz = _lab_f(xyz[:, 0]), _lab_f(xyz[:, 1]), _lab_f(xyz[:, 2])
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=1)


def _normalize_bbox(points: np.ndarray) -> np.ndarray:
    """Map each axis affinely onto [0, 1]; zero-extent axes sit at 0.5."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = hi - lo
    out = np.empty_like(points)
    for d in range(points.shape[1]):
        if span[d] > 0.0:
            out[:, d] = (points[:, d] - lo[d]) / span[d]
        else:
            out[:, d] = 0.5
    return out


def colors_lab3(e: Embedding) -> ColorAssignment:
    """Map a 3-D embedding's bounding box onto the Lab target box."""
    if e.dim != 3:
        raise DomainError(f"colors_lab3 requires a 3-D embedding, got dim={e.dim}")
    unit = _normalize_bbox(e.points)
    lab = np.empty_like(unit)
    for d, (lo, hi) in enumerate((LAB_L_RANGE, LAB_A_RANGE, LAB_B_RANGE)):
        lab[:, d] = lo + unit[:, d] * (hi - lo)
    return ColorAssignment(rgb=lab_to_srgb(lab))


def colors_2d(e: Embedding) -> ColorAssignment:
    """Bilinear four-anchor blend over the embedding's unit-square bbox."""
    if e.dim != 2:
        raise DomainError(f"colors_2d requires a 2-D embedding, got dim={e.dim}")
    unit = _normalize_bbox(e.points)
    u = unit[:, 0][:, None]
    v = unit[:, 1][:, None]
    rgb = (
        (1.0 - u) * (1.0 - v) * ANCHOR_BOTTOM_LEFT
        + u * (1.0 - v) * ANCHOR_BOTTOM_RIGHT
        + (1.0 - u) * v * ANCHOR_TOP_LEFT
        + u * v * ANCHOR_TOP_RIGHT
    )
    return ColorAssignment(rgb=np.clip(rgb, 0.0, 1.0))


def colors_for(e: Embedding) -> ColorAssignment:
    return colors_lab3(e) if e.dim == 3 else colors_2d(e)


def render_dictionary_map(grid: ParameterGrid, c: ColorAssignment, b1: float = 1.0) -> DictionaryMapImage:
    """Paint each sampled (t1, t2) cell of one b1 slice with its atom color."""
    if c.n != grid.n_atoms:
        raise DomainError(f"{c.n} colors for {grid.n_atoms} atoms")
    sl = grid.b1_slice(b1)
    w = grid.t1_values.size
    h = grid.t2_values.size
    pixels = np.full((h, w, 3), 255, dtype=np.uint8)
    atoms = grid.atoms[sl]
    colors = np.round(c.rgb[sl] * 255.0).astype(np.uint8)
    col = np.searchsorted(grid.t1_values, atoms[:, 0])
    row = h - 1 - np.searchsorted(grid.t2_values, atoms[:, 1])
    pixels[row, col] = colors
    return DictionaryMapImage(pixels=pixels, b1=float(grid.atoms[sl.start, 2]))


def _project(points: np.ndarray) -> np.ndarray:
    """2-D points pass through; 3-D points get a fixed orthographic view."""
    if points.shape[1] == 2:
        return points
    az = np.deg2rad(SCATTER_AZIMUTH_DEG)
    el = np.deg2rad(SCATTER_ELEVATION_DEG)
    rz = np.array([[np.cos(az), -np.sin(az), 0.0], [np.sin(az), np.cos(az), 0.0], [0.0, 0.0, 1.0]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, np.cos(el), -np.sin(el)], [0.0, np.sin(el), np.cos(el)]])
    rotated = points @ (rx @ rz).T
    return rotated[:, :2]


def render_scatter(e: Embedding, c: ColorAssignment, size: int = SCATTER_SIZE) -> np.ndarray:
    """Deterministic software-rastered scatter plot, (size, size, 3) uint8."""
    if c.n != e.n:
        raise DomainError(f"{c.n} colors for {e.n} points")
    canvas = np.full((size, size, 3), 255, dtype=np.uint8)
    if e.n == 0:
        return canvas
    flat = _project(e.points)
    unit = _normalize_bbox(flat)
    usable = size - 2 * SCATTER_MARGIN - 1
    px = np.round(SCATTER_MARGIN + unit[:, 0] * usable).astype(np.int64)
    py = np.round(size - 1 - SCATTER_MARGIN - unit[:, 1] * usable).astype(np.int64)
    rgb = np.round(c.rgb * 255.0).astype(np.uint8)
    r = SCATTER_MARKER_RADIUS
    for x, y, color in zip(px, py, rgb):
        canvas[max(y - r, 0) : y + r + 1, max(x - r, 0) : x + r + 1] = color
    return canvas
