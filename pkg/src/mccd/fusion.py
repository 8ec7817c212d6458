"""Hierarchical latent compositing.

One denoising step of the composed scene takes the per-branch latents
(complex prompt, one per object, background) and rebuilds a single latent:

1. resize each object's latent into its pixel box (bilinear),
2. weight object cells by a gaussian region mask centered in the box,
3. weight whole objects by eased depth (front layers dominate),
4. fuse overlapping boxes by weighted average,
5. compose the fused union over the background latent,
6. enhance object regions toward their channel maxima while suppressing
   the background toward the object minima,
7. smooth a band of cells around box edges with a gaussian kernel,
8. blend the result with the complex-prompt latent.

All functions are pure: inputs are never mutated and every output is a
fresh grid. Grids are indexed [channel, row, column]; a PixelBox spans
columns x0 .. x0+w-1 and rows y0 .. y0+h-1.

Cells covered by exactly one box take that box's latent value directly
(the weights cancel exactly); the weighted average only runs where boxes
genuinely overlap. Box sides flush with the grid border are not
transitions to background, so they contribute no smoothing band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ChannelMismatchError, DimensionMismatchError
from .latents import LatentGrid
from .scene import BoundingBox


@dataclass(frozen=True)
class FusionConfig:
    """Tunables of the compositing step.

    The defaults are the shipped operating point: enhancement strengths
    lambda_pos = lambda_neg = 0.2, smoothing kernel sigma = 1.0, and
    complex-branch blend weight mu = 0.8.
    """

    lambda_pos: float = 0.2
    lambda_neg: float = 0.2
    smooth_sigma: float = 1.0
    mu: float = 0.8
    alpha: float = 2.0
    kernel_radius: int = 3
    band_width: int = 4
    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.lambda_pos <= 1.0 or not 0.0 <= self.lambda_neg <= 1.0:
            raise ValueError("enhancement strengths must lie in [0, 1]")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("blend weight mu must lie in [0, 1]")
        if self.smooth_sigma <= 0.0:
            raise ValueError("smooth_sigma must be positive")
        if self.kernel_radius < 0 or self.band_width < 0:
            raise ValueError("kernel_radius and band_width must be >= 0")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class PixelBox:
    """Integer box on the latent grid; depth 0 is nearest the viewer."""

    x0: int
    y0: int
    w: int
    h: int
    depth: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"pixel box origin must be >= 0, got ({self.x0}, {self.y0})")
        if self.w < 1 or self.h < 1:
            raise ValueError(f"pixel box must span at least one cell, got {self.w}x{self.h}")

    def slices(self) -> tuple[slice, slice]:
        """(row slice, column slice) of the box on a grid."""
        return slice(self.y0, self.y0 + self.h), slice(self.x0, self.x0 + self.w)


@dataclass(frozen=True)
class GaussianMask:
    """Per-cell region weights of one box, each in (0, 1]."""

    box: PixelBox
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.shape != (self.box.h, self.box.w):
            raise DimensionMismatchError(
                f"mask shape {self.values.shape} does not match box {self.box.h}x{self.box.w}"
            )


@dataclass(frozen=True)
class PlacedLatent:
    """One object ready for fusion: resized latent, box, mask, depth weight."""

    latent: LatentGrid
    box: PixelBox
    mask: GaussianMask
    weight: float


@dataclass(frozen=True)
class FusedField:
    """Fusion output over the union of boxes.

    ``values`` is defined where ``mask`` is set and zero elsewhere.
    """

    values: np.ndarray
    mask: np.ndarray


def _round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def to_pixel_box(box: BoundingBox, grid_h: int, grid_w: int) -> PixelBox:
    """Map a normalized box onto grid cells.

    Coordinates round half away from zero; width and height keep at least
    one cell and the result is clamped inside the grid.
    """
    if grid_h < 1 or grid_w < 1:
        raise ValueError(f"grid dims must be >= 1, got {grid_h}x{grid_w}")
    x0 = _round_half_up(box.x * grid_w)
    y0 = _round_half_up(box.y * grid_h)
    w = max(1, _round_half_up(box.w * grid_w))
    h = max(1, _round_half_up(box.h * grid_h))
    x0 = min(max(x0, 0), grid_w - 1)
    y0 = min(max(y0, 0), grid_h - 1)
    w = min(w, grid_w - x0)
    h = min(h, grid_h - y0)
    return PixelBox(x0, y0, w, h, box.depth)


def resize_bilinear(grid: LatentGrid, out_h: int, out_w: int) -> LatentGrid:
    """Bilinear resize to (out_h, out_w), per channel.

    Sampling is align-corners-false: output cell centers map to
    (i + 0.5) * src / dst - 0.5 in source coordinates, with edge clamp.
    Resizing to the source dims returns the grid unchanged.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target dims must be >= 1, got {out_h}x{out_w}")
    if (out_h, out_w) == (grid.height, grid.width):
        return grid

    src = grid.data
    sy = (np.arange(out_h) + 0.5) * (grid.height / out_h) - 0.5
    sx = (np.arange(out_w) + 0.5) * (grid.width / out_w) - 0.5
    y0 = np.floor(sy)
    x0 = np.floor(sx)
    fy = sy - y0
    fx = sx - x0
    y0i = np.clip(y0.astype(np.int64), 0, grid.height - 1)
    y1i = np.clip(y0.astype(np.int64) + 1, 0, grid.height - 1)
    x0i = np.clip(x0.astype(np.int64), 0, grid.width - 1)
    x1i = np.clip(x0.astype(np.int64) + 1, 0, grid.width - 1)

    rows0 = src[:, y0i, :]
    rows1 = src[:, y1i, :]
    top = rows0[:, :, x0i] * (1.0 - fx) + rows0[:, :, x1i] * fx
    bottom = rows1[:, :, x0i] * (1.0 - fx) + rows1[:, :, x1i] * fx
    out = top * (1.0 - fy)[None, :, None] + bottom * fy[None, :, None]
    return LatentGrid(out)


def gaussian_mask(box: PixelBox) -> GaussianMask:
    """Region mask of a box: gaussian falloff from the box center.

    sigma = max(w, h) / 2 in cells; distances are measured from cell
    centers, so a 1x1 box gets the exact value 1.0.
    """
    sigma = max(box.w, box.h) / 2.0
    cy = box.h / 2.0
    cx = box.w / 2.0
    ys = np.arange(box.h) + 0.5
    xs = np.arange(box.w) + 0.5
    dist2 = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2
    return GaussianMask(box, np.exp(-dist2 / (2.0 * sigma * sigma)))


def depth_weight(depth: int, n: int, alpha: float) -> float:
    """Eased weight of a depth layer among n: sigmoid centered at the
    middle layer, strictly decreasing in depth. The midpoint depth
    (n - 1) / 2 gets exactly 0.5."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 1.0 / (1.0 + math.exp(alpha * (depth - (n - 1) / 2.0)))


def fuse_overlaps(
    placed: Sequence[PlacedLatent],
    grid_h: int,
    grid_w: int,
    *,
    epsilon: float = 1e-8,
) -> FusedField:
    """Fuse placed object latents over the union of their boxes.

    Cells covered by exactly one box copy that box's value (the weight
    cancels exactly). Cells covered by several boxes take the average
    weighted by depth weight times region mask. Where that total weight
    underflows epsilon, the cell falls back to the value of the covering
    box nearest the viewer (ties broken by input order).
    """
    if grid_h < 1 or grid_w < 1:
        raise ValueError(f"grid dims must be >= 1, got {grid_h}x{grid_w}")
    if not placed:
        return FusedField(
            values=np.zeros((0, grid_h, grid_w)), mask=np.zeros((grid_h, grid_w), dtype=bool)
        )

    channels = placed[0].latent.channels
    for p in placed:
        if p.latent.channels != channels:
            raise ChannelMismatchError(
                f"fused latents must share channels: {p.latent.channels} != {channels}"
            )
        if p.latent.shape[1:] != (p.box.h, p.box.w):
            raise DimensionMismatchError(
                f"latent {p.latent.shape[1:]} does not fill its box {p.box.h}x{p.box.w}"
            )
        if p.box.x0 + p.box.w > grid_w or p.box.y0 + p.box.h > grid_h:
            raise DimensionMismatchError(
                f"box at ({p.box.x0}, {p.box.y0}) size {p.box.w}x{p.box.h} "
                f"exceeds the {grid_h}x{grid_w} grid"
            )

    num = np.zeros((channels, grid_h, grid_w))
    den = np.zeros((grid_h, grid_w))
    count = np.zeros((grid_h, grid_w), dtype=np.int64)
    # Nearest covering box per cell, for single-cover copies and the
    # underflow fallback. Depth ties keep the earliest input.
    front_depth = np.full((grid_h, grid_w), np.iinfo(np.int64).max, dtype=np.int64)
    front_value = np.zeros((channels, grid_h, grid_w))

    for p in placed:
        rows, cols = p.box.slices()
        weighted = p.weight * p.mask.values
        num[:, rows, cols] += weighted[None, :, :] * p.latent.data
        den[rows, cols] += weighted
        count[rows, cols] += 1

        depth_region = front_depth[rows, cols]
        nearer = p.box.depth < depth_region
        value_region = front_value[:, rows, cols]
        value_region[:, nearer] = p.latent.data[:, nearer]
        front_value[:, rows, cols] = value_region
        depth_region[nearer] = p.box.depth
        front_depth[rows, cols] = depth_region

    covered = count > 0
    single = count == 1
    overlap = count > 1
    underflow = overlap & (den < epsilon)
    averaged = overlap & ~underflow

    values = np.zeros_like(num)
    values[:, single] = front_value[:, single]
    values[:, averaged] = num[:, averaged] / den[averaged]
    values[:, underflow] = front_value[:, underflow]
    return FusedField(values=values, mask=covered)


def compose(fused: FusedField, boxes: Sequence[PixelBox], background: LatentGrid) -> LatentGrid:
    """Lay the fused union over the background latent.

    Cells inside the union of boxes take fused values; every other cell
    keeps the background value bitwise.
    """
    grid_h, grid_w = background.height, background.width
    if fused.mask.shape != (grid_h, grid_w):
        raise DimensionMismatchError(
            f"fused field {fused.mask.shape} does not match background "
            f"{grid_h}x{grid_w}"
        )
    union = np.zeros((grid_h, grid_w), dtype=bool)
    for box in boxes:
        if box.x0 + box.w > grid_w or box.y0 + box.h > grid_h:
            raise DimensionMismatchError(
                f"box at ({box.x0}, {box.y0}) size {box.w}x{box.h} "
                f"exceeds the {grid_h}x{grid_w} grid"
            )
        rows, cols = box.slices()
        union[rows, cols] = True
    if not np.array_equal(union, fused.mask):
        raise ValueError("boxes do not match the fused field's coverage")

    out = background.data.copy()
    if union.any():
        if fused.values.shape[0] != background.channels:
            raise ChannelMismatchError(
                f"fused channels {fused.values.shape[0]} != background "
                f"channels {background.channels}"
            )
        out[:, union] = fused.values[:, union]
    return LatentGrid(out)


def regional_enhance(
    grid: LatentGrid,
    placements: Sequence[tuple[PixelBox, LatentGrid]],
    config: FusionConfig,
) -> LatentGrid:
    """Pull object regions toward their latent maxima, push background down.

    Boxes apply back-to-front (largest depth first). For each box, cells
    inside move toward that object's per-channel maximum by lambda_pos;
    cells outside every box move toward its per-channel minimum by
    lambda_neg. Updates are sequential, so later (nearer) boxes see the
    effect of earlier ones. Zero strengths leave the grid bitwise intact.
    """
    grid_h, grid_w = grid.height, grid.width
    out = grid.data.copy()
    union = np.zeros((grid_h, grid_w), dtype=bool)
    for box, resized in placements:
        if box.x0 + box.w > grid_w or box.y0 + box.h > grid_h:
            raise DimensionMismatchError(
                f"box at ({box.x0}, {box.y0}) size {box.w}x{box.h} "
                f"exceeds the {grid_h}x{grid_w} grid"
            )
        if resized.channels != grid.channels:
            raise ChannelMismatchError(
                f"object latent channels {resized.channels} != grid channels {grid.channels}"
            )
        rows, cols = box.slices()
        union[rows, cols] = True
    outside = ~union

    ordered = sorted(placements, key=lambda pair: pair[0].depth, reverse=True)
    for box, resized in ordered:
        rows, cols = box.slices()
        if config.lambda_pos != 0.0:
            peak = resized.data.max(axis=(1, 2))
            region = out[:, rows, cols]
            out[:, rows, cols] = region + config.lambda_pos * (peak[:, None, None] - region)
        if config.lambda_neg != 0.0 and outside.any():
            floor_ = resized.data.min(axis=(1, 2))
            bg = out[:, outside]
            out[:, outside] = bg - config.lambda_neg * (bg - floor_[:, None])
    return LatentGrid(out)


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """(2 radius + 1)^2 gaussian kernel, renormalized to unit sum."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    dist2 = offsets[None, :] ** 2 + offsets[:, None] ** 2
    kernel = np.exp(-dist2 / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)
    return kernel / kernel.sum()


def _perimeter_mask(boxes: Sequence[PixelBox], grid_h: int, grid_w: int) -> np.ndarray:
    """Cells on box sides that border something else on the grid.

    A side flush with the grid border is no transition to background and
    contributes nothing.
    """
    perim = np.zeros((grid_h, grid_w), dtype=bool)
    for box in boxes:
        x1 = box.x0 + box.w
        y1 = box.y0 + box.h
        if x1 > grid_w or y1 > grid_h:
            raise DimensionMismatchError(
                f"box at ({box.x0}, {box.y0}) size {box.w}x{box.h} "
                f"exceeds the {grid_h}x{grid_w} grid"
            )
        if box.x0 > 0:
            perim[box.y0:y1, box.x0] = True
        if x1 < grid_w:
            perim[box.y0:y1, x1 - 1] = True
        if box.y0 > 0:
            perim[box.y0, box.x0:x1] = True
        if y1 < grid_h:
            perim[y1 - 1, box.x0:x1] = True
    return perim


def band_mask(
    boxes: Sequence[PixelBox], grid_h: int, grid_w: int, band_width: int
) -> np.ndarray:
    """Cells within Chebyshev distance band_width of any box perimeter."""
    perim = _perimeter_mask(boxes, grid_h, grid_w)
    if band_width == 0 or not perim.any():
        return perim
    band = np.zeros_like(perim)
    for dy in range(-band_width, band_width + 1):
        src_y = slice(max(0, -dy), grid_h - max(0, dy))
        dst_y = slice(max(0, dy), grid_h - max(0, -dy))
        for dx in range(-band_width, band_width + 1):
            src_x = slice(max(0, -dx), grid_w - max(0, dx))
            dst_x = slice(max(0, dx), grid_w - max(0, -dx))
            band[dst_y, dst_x] |= perim[src_y, src_x]
    return band


def _convolve_replicate(data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2D convolution per channel with edge-replicate padding."""
    radius = kernel.shape[0] // 2
    _, grid_h, grid_w = data.shape
    if radius == 0:
        return data * kernel[0, 0]
    padded = np.pad(data, ((0, 0), (radius, radius), (radius, radius)), mode="edge")
    out = np.zeros_like(data)
    for i in range(kernel.shape[0]):
        for j in range(kernel.shape[1]):
            out += kernel[i, j] * padded[:, i : i + grid_h, j : j + grid_w]
    return out


def boundary_smooth(
    grid: LatentGrid, boxes: Sequence[PixelBox], config: FusionConfig
) -> LatentGrid:
    """Gaussian-smooth the band of cells around box perimeters.

    Cells farther than band_width (Chebyshev) from every box perimeter
    are bitwise unchanged. Convolution uses edge-replicate padding, so a
    constant field stays constant up to kernel-normalization rounding.
    """
    band = band_mask(boxes, grid.height, grid.width, config.band_width)
    if not band.any():
        return LatentGrid(grid.data)
    kernel = gaussian_kernel(config.smooth_sigma, config.kernel_radius)
    smoothed = _convolve_replicate(grid.data, kernel)
    out = grid.data.copy()
    out[:, band] = smoothed[:, band]
    return LatentGrid(out)


def blend(complex_latent: LatentGrid, smoothed: LatentGrid, mu: float) -> LatentGrid:
    """Final output: mu parts complex-prompt latent, (1 - mu) parts composed.

    mu = 1 and mu = 0 return the respective input bitwise.
    """
    if complex_latent.shape != smoothed.shape:
        raise DimensionMismatchError(
            f"blend inputs disagree: {complex_latent.shape} != {smoothed.shape}"
        )
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    if mu == 1.0:
        return LatentGrid(complex_latent.data)
    if mu == 0.0:
        return LatentGrid(smoothed.data)
    return LatentGrid(mu * complex_latent.data + (1.0 - mu) * smoothed.data)


def hcd_step(
    complex_latent: LatentGrid,
    objects: Sequence[tuple[LatentGrid, BoundingBox]],
    background: LatentGrid,
    config: FusionConfig | None = None,
) -> LatentGrid:
    """One full compositing step over same-shape branch latents.

    ``objects`` pairs each object's full-grid latent with its normalized
    box. With no objects the result is simply the blend of the complex
    and background latents.
    """
    cfg = config or FusionConfig()
    if complex_latent.shape != background.shape:
        raise DimensionMismatchError(
            f"complex {complex_latent.shape} != background {background.shape}"
        )
    grid_h, grid_w = background.height, background.width

    if not objects:
        return blend(complex_latent, background, cfg.mu)

    n = len(objects)
    placed: list[PlacedLatent] = []
    placements: list[tuple[PixelBox, LatentGrid]] = []
    for latent, box in objects:
        if latent.shape != background.shape:
            raise DimensionMismatchError(
                f"object latent {latent.shape} != grid {background.shape}"
            )
        pixel_box = to_pixel_box(box, grid_h, grid_w)
        resized = resize_bilinear(latent, pixel_box.h, pixel_box.w)
        placed.append(
            PlacedLatent(
                latent=resized,
                box=pixel_box,
                mask=gaussian_mask(pixel_box),
                weight=depth_weight(pixel_box.depth, n, cfg.alpha),
            )
        )
        placements.append((pixel_box, resized))

    boxes = [p.box for p in placed]
    fused = fuse_overlaps(placed, grid_h, grid_w, epsilon=cfg.epsilon)
    composed = compose(fused, boxes, background)
    enhanced = regional_enhance(composed, placements, cfg)
    smoothed = boundary_smooth(enhanced, boxes, cfg)
    return blend(complex_latent, smoothed, cfg.mu)
