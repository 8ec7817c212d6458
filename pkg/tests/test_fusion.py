"""Compositing operations against scalar oracles and analytic values."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mccd.errors import ChannelMismatchError, DimensionMismatchError
from mccd.fusion import (
    FusionConfig,
    GaussianMask,
    PixelBox,
    PlacedLatent,
    band_mask,
    blend,
    boundary_smooth,
    compose,
    depth_weight,
    fuse_overlaps,
    gaussian_kernel,
    gaussian_mask,
    hcd_step,
    regional_enhance,
    resize_bilinear,
    to_pixel_box,
)
from mccd.latents import LatentGrid
from mccd.scene import BoundingBox


def rand_grid(rng, channels, height, width, scale=1.0):
    return LatentGrid(rng.normal(size=(channels, height, width)) * scale)


def rand_box(rng, grid_h, grid_w, depth):
    w = int(rng.integers(1, grid_w + 1))
    h = int(rng.integers(1, grid_h + 1))
    x0 = int(rng.integers(0, grid_w - w + 1))
    y0 = int(rng.integers(0, grid_h - h + 1))
    return PixelBox(x0, y0, w, h, depth)


# -- to_pixel_box ----------------------------------------------------------------


def test_pixel_box_examples():
    assert to_pixel_box(BoundingBox(0.25, 0.5, 0.5, 0.5, 0), 16, 16) == PixelBox(4, 8, 8, 8, 0)
    # Tiny extents keep at least one cell.
    tiny = to_pixel_box(BoundingBox(0.5, 0.5, 0.01, 0.01, 1), 8, 8)
    assert (tiny.w, tiny.h) == (1, 1)
    # An origin rounding onto the far edge is pulled back inside.
    edge = to_pixel_box(BoundingBox(0.99, 0.99, 0.5, 0.5, 0), 8, 8)
    assert edge.x0 + edge.w <= 8 and edge.y0 + edge.h <= 8
    assert edge.w >= 1 and edge.h >= 1


def test_pixel_box_rounds_half_up():
    # 0.03125 * 16 = 0.5 rounds up to 1, so does w.
    box = to_pixel_box(BoundingBox(0.03125, 0.0, 0.03125, 0.5, 0), 16, 16)
    assert (box.x0, box.w) == (1, 1)


@settings(max_examples=100, deadline=None)
@given(
    x=st.floats(0, 1), y=st.floats(0, 1),
    w=st.floats(0, 1), h=st.floats(0, 1),
    grid=st.integers(4, 32),
)
def test_pixel_box_always_inside_grid(x, y, w, h, grid):
    box = to_pixel_box(BoundingBox(x, y, w, h, 0), grid, grid)
    assert 0 <= box.x0 <= grid - 1
    assert 1 <= box.w <= grid - box.x0
    assert 1 <= box.h <= grid - box.y0


# -- resize ----------------------------------------------------------------------


def test_resize_identity_is_bitwise():
    rng = np.random.default_rng(0)
    grid = rand_grid(rng, 2, 5, 7)
    assert resize_bilinear(grid, 5, 7) is grid


def test_resize_preserves_constant_fields():
    grid = LatentGrid(np.full((3, 4, 4), 2.5))
    out = resize_bilinear(grid, 9, 6)
    assert np.allclose(out.data, 2.5, atol=1e-12)


def test_resize_2x2_to_4x4_frozen():
    grid = LatentGrid([[[1.0, 2.0], [3.0, 4.0]]])
    out = resize_bilinear(grid, 4, 4)
    expected = [
        [1.00, 1.25, 1.75, 2.00],
        [1.50, 1.75, 2.25, 2.50],
        [2.50, 2.75, 3.25, 3.50],
        [3.00, 3.25, 3.75, 4.00],
    ]
    assert np.allclose(out.data[0], expected, atol=1e-12)


def test_resize_matches_oracle():
    rng = np.random.default_rng(1)
    for _ in range(30):
        c = int(rng.integers(1, 4))
        src_h, src_w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        out_h, out_w = int(rng.integers(1, 12)), int(rng.integers(1, 12))
        grid = rand_grid(rng, c, src_h, src_w)
        got = resize_bilinear(grid, out_h, out_w)
        want = oracles.resize_bilinear(oracles.from_array(grid.data), out_h, out_w)
        assert np.allclose(got.data, want, atol=1e-9)


def test_resize_stays_within_value_range():
    rng = np.random.default_rng(2)
    grid = rand_grid(rng, 1, 6, 6)
    out = resize_bilinear(grid, 13, 3)
    assert out.data.min() >= grid.data.min() - 1e-12
    assert out.data.max() <= grid.data.max() + 1e-12


# -- gaussian mask ----------------------------------------------------------------


def test_mask_single_cell_is_one():
    mask = gaussian_mask(PixelBox(3, 3, 1, 1, 0))
    assert mask.values[0, 0] == 1.0


def test_mask_corner_value_analytic():
    # 2x2 box: sigma = 1, corner cell center is (0.5, 0.5) away from the middle.
    mask = gaussian_mask(PixelBox(0, 0, 2, 2, 0))
    assert abs(mask.values[0, 0] - math.exp(-0.25)) < 1e-12
    assert np.allclose(mask.values, mask.values[0, 0], atol=1e-15)


def test_mask_center_is_max_and_axis_monotone():
    rng = np.random.default_rng(3)
    for _ in range(40):
        box = rand_box(rng, 16, 16, 0)
        values = gaussian_mask(box).values
        assert values.max() <= 1.0 + 1e-15
        assert values.min() > 0.0
        center_r = (box.h - 1) // 2
        center_c = (box.w - 1) // 2
        assert values[center_r, center_c] == values.max()
        # Weights never decrease walking toward the center along an axis.
        assert np.all(np.diff(values[center_r, : center_c + 1]) >= -1e-15)
        assert np.all(np.diff(values[: center_r + 1, center_c]) >= -1e-15)


def test_mask_matches_oracle():
    for w, h in [(1, 1), (2, 5), (7, 3), (16, 16)]:
        got = gaussian_mask(PixelBox(0, 0, w, h, 0)).values
        want = oracles.region_mask(w, h)
        assert np.allclose(got, want, atol=1e-12)


# -- depth weights ----------------------------------------------------------------


def test_depth_weight_spot_values():
    assert abs(depth_weight(0, 2, 2.0) - 0.7310585786300049) < 1e-12
    assert abs(depth_weight(1, 2, 2.0) - 0.2689414213699951) < 1e-12
    assert depth_weight(1, 3, 2.0) == 0.5
    assert depth_weight(0, 1, 2.0) == 0.5


# Bounds keep alpha * (n - 1) / 2 well under the ~37 where the sigmoid
# saturates to exactly 1.0 in doubles and strictness would be vacuous.
@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 8), alpha=st.floats(0.1, 4.0))
def test_depth_weight_strictly_decreasing(n, alpha):
    weights = [depth_weight(d, n, alpha) for d in range(n)]
    assert all(0.0 < w < 1.0 for w in weights)
    assert all(a > b for a, b in zip(weights, weights[1:]))


# -- fuse_overlaps ----------------------------------------------------------------


def place(latent, box):
    return PlacedLatent(
        latent=latent,
        box=box,
        mask=gaussian_mask(box),
        weight=depth_weight(box.depth, 2, 2.0),
    )


def test_single_box_copies_values_bitwise():
    rng = np.random.default_rng(4)
    box = PixelBox(2, 1, 3, 4, 0)
    latent = rand_grid(rng, 2, box.h, box.w)
    fused = fuse_overlaps([place(latent, box)], 8, 8)
    rows, cols = box.slices()
    assert np.array_equal(fused.values[:, rows, cols], latent.data)
    assert fused.mask.sum() == box.w * box.h


def test_identical_boxes_fuse_to_weighted_mean_frozen():
    a = LatentGrid([[[10.0, 20.0], [30.0, 40.0]]])
    b = LatentGrid([[[50.0, 60.0], [70.0, 80.0]]])
    box0 = PixelBox(3, 3, 2, 2, 0)
    box1 = PixelBox(3, 3, 2, 2, 1)
    fused = fuse_overlaps([place(a, box0), place(b, box1)], 8, 8)
    # Identical masks cancel: (w0 * 10 + w1 * 50) / (w0 + w1).
    assert abs(fused.values[0, 3, 3] - 20.757656854799805) < 1e-9
    assert abs(fused.values[0, 4, 4] - 50.757656854799805) < 1e-9


def test_equal_weight_overlap_is_plain_average():
    rng = np.random.default_rng(5)
    box_a = PixelBox(1, 1, 4, 4, 0)
    box_b = PixelBox(1, 1, 4, 4, 0)
    a, b = rand_grid(rng, 3, 4, 4), rand_grid(rng, 3, 4, 4)
    mask = gaussian_mask(box_a)
    fused = fuse_overlaps(
        [
            PlacedLatent(a, box_a, mask, 0.5),
            PlacedLatent(b, box_b, mask, 0.5),
        ],
        6,
        6,
    )
    rows, cols = box_a.slices()
    assert np.allclose(fused.values[:, rows, cols], (a.data + b.data) / 2, atol=1e-9)


def test_overlap_stays_inside_value_hull():
    rng = np.random.default_rng(6)
    for _ in range(25):
        boxes = [rand_box(rng, 10, 10, d) for d in range(3)]
        lats = [rand_grid(rng, 2, b.h, b.w) for b in boxes]
        placed = [
            PlacedLatent(l, b, gaussian_mask(b), depth_weight(b.depth, 3, 2.0))
            for l, b in zip(lats, boxes)
        ]
        fused = fuse_overlaps(placed, 10, 10)
        lo = min(l.data.min() for l in lats)
        hi = max(l.data.max() for l in lats)
        inside = fused.values[:, fused.mask]
        assert inside.min() >= lo - 1e-9
        assert inside.max() <= hi + 1e-9


def test_weight_underflow_falls_back_to_front_box():
    rng = np.random.default_rng(7)
    box_front = PixelBox(0, 0, 2, 2, 0)
    box_back = PixelBox(0, 0, 2, 2, 1)
    front, back = rand_grid(rng, 1, 2, 2), rand_grid(rng, 1, 2, 2)
    mask = gaussian_mask(box_front)
    fused = fuse_overlaps(
        [
            PlacedLatent(front, box_front, mask, 1e-20),
            PlacedLatent(back, box_back, mask, 1e-20),
        ],
        4,
        4,
    )
    assert np.array_equal(fused.values[:, :2, :2], front.data)


def test_fuse_matches_oracle():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        boxes = [rand_box(rng, 12, 12, d) for d in range(n)]
        placed = []
        oracle_placed = []
        for b in boxes:
            lat = rand_grid(rng, 2, b.h, b.w)
            mask = gaussian_mask(b)
            weight = depth_weight(b.depth, n, 2.0)
            placed.append(PlacedLatent(lat, b, mask, weight))
            oracle_placed.append(
                (
                    oracles.from_array(lat.data),
                    (b.x0, b.y0, b.w, b.h, b.depth),
                    [list(map(float, row)) for row in mask.values],
                    weight,
                )
            )
        fused = fuse_overlaps(placed, 12, 12)
        want_values, want_covered = oracles.fuse_overlaps(oracle_placed, 12, 12)
        assert np.array_equal(fused.mask, np.array(want_covered))
        assert np.allclose(fused.values, want_values, atol=1e-9)


def test_fuse_rejects_channel_mismatch():
    rng = np.random.default_rng(9)
    box = PixelBox(0, 0, 2, 2, 0)
    with pytest.raises(ChannelMismatchError):
        fuse_overlaps(
            [place(rand_grid(rng, 1, 2, 2), box), place(rand_grid(rng, 2, 2, 2), box)],
            4,
            4,
        )


def test_fuse_rejects_box_outside_grid():
    rng = np.random.default_rng(10)
    box = PixelBox(3, 3, 2, 2, 0)
    with pytest.raises(DimensionMismatchError):
        fuse_overlaps([place(rand_grid(rng, 1, 2, 2), box)], 4, 4)


# -- compose ----------------------------------------------------------------------


def test_compose_without_boxes_is_background_bitwise():
    rng = np.random.default_rng(11)
    background = rand_grid(rng, 2, 6, 6)
    fused = fuse_overlaps([], 6, 6)
    out = compose(fused, [], background)
    assert np.array_equal(out.data, background.data)


def test_compose_membership():
    rng = np.random.default_rng(12)
    for _ in range(20):
        background = rand_grid(rng, 2, 9, 9)
        n = int(rng.integers(1, 4))
        boxes = [rand_box(rng, 9, 9, d) for d in range(n)]
        placed = [
            PlacedLatent(rand_grid(rng, 2, b.h, b.w), b, gaussian_mask(b), 0.5) for b in boxes
        ]
        fused = fuse_overlaps(placed, 9, 9)
        out = compose(fused, boxes, background)
        assert np.array_equal(out.data[:, ~fused.mask], background.data[:, ~fused.mask])
        assert np.array_equal(out.data[:, fused.mask], fused.values[:, fused.mask])


def test_compose_full_frame_box_replaces_everything():
    rng = np.random.default_rng(13)
    background = rand_grid(rng, 1, 4, 4)
    box = PixelBox(0, 0, 4, 4, 0)
    latent = rand_grid(rng, 1, 4, 4)
    fused = fuse_overlaps([place(latent, box)], 4, 4)
    out = compose(fused, [box], background)
    assert np.array_equal(out.data, latent.data)


def test_compose_rejects_shape_mismatch():
    rng = np.random.default_rng(14)
    fused = fuse_overlaps([], 4, 4)
    with pytest.raises(DimensionMismatchError):
        compose(fused, [], rand_grid(rng, 1, 5, 5))


# -- regional enhancement ----------------------------------------------------------


def test_enhance_zero_strength_is_bitwise_identity():
    rng = np.random.default_rng(15)
    grid = rand_grid(rng, 2, 8, 8)
    box = PixelBox(1, 1, 3, 3, 0)
    resized = rand_grid(rng, 2, 3, 3)
    cfg = FusionConfig(lambda_pos=0.0, lambda_neg=0.0)
    out = regional_enhance(grid, [(box, resized)], cfg)
    assert np.array_equal(out.data, grid.data)


def test_enhance_constant_region_formula():
    grid = LatentGrid(np.zeros((1, 4, 4)))
    box = PixelBox(0, 0, 2, 2, 0)
    resized = LatentGrid(np.full((1, 2, 2), 3.0))
    cfg = FusionConfig(lambda_pos=0.2, lambda_neg=0.2)
    out = regional_enhance(grid, [(box, resized)], cfg)
    # Inside: v + 0.2 * (max - v) = 0 + 0.2 * 3. Outside: v - 0.2 * (v - min) = -0.6... no:
    # outside v=0, min=3 -> 0 - 0.2 * (0 - 3) = 0.6.
    assert np.allclose(out.data[0, :2, :2], 0.6, atol=1e-12)
    assert np.allclose(out.data[0, 2:, :], 0.6, atol=1e-12)


def test_enhance_matches_oracle():
    rng = np.random.default_rng(16)
    for _ in range(20):
        grid = rand_grid(rng, 2, 10, 10)
        n = int(rng.integers(1, 4))
        placements = []
        oracle_placements = []
        for d in range(n):
            b = rand_box(rng, 10, 10, d)
            resized = rand_grid(rng, 2, b.h, b.w)
            placements.append((b, resized))
            oracle_placements.append(
                ((b.x0, b.y0, b.w, b.h, b.depth), oracles.from_array(resized.data))
            )
        cfg = FusionConfig(lambda_pos=0.2, lambda_neg=0.2)
        got = regional_enhance(grid, placements, cfg)
        want = oracles.regional_enhance(
            oracles.from_array(grid.data), oracle_placements, 0.2, 0.2
        )
        assert np.allclose(got.data, want, atol=1e-9)


def test_enhance_rejects_channel_mismatch():
    rng = np.random.default_rng(17)
    grid = rand_grid(rng, 2, 4, 4)
    with pytest.raises(ChannelMismatchError):
        regional_enhance(
            grid, [(PixelBox(0, 0, 2, 2, 0), rand_grid(rng, 1, 2, 2))], FusionConfig()
        )


# -- smoothing ----------------------------------------------------------------------


def test_kernel_sums_to_one():
    for sigma, radius in [(1.0, 3), (0.5, 2), (2.0, 5), (1.0, 0)]:
        kernel = gaussian_kernel(sigma, radius)
        assert abs(kernel.sum() - 1.0) < 1e-12
        assert np.array_equal(kernel, kernel.T)
        assert np.array_equal(kernel, kernel[::-1, ::-1])


def test_band_excludes_flush_sides():
    # Box touching the left border: no band on that side beyond the box rows.
    full = band_mask([PixelBox(0, 0, 8, 8, 0)], 8, 8, 2)
    assert not full.any()
    partial = band_mask([PixelBox(0, 2, 4, 4, 0)], 8, 8, 0)
    # Flush left side contributes nothing; the right/top/bottom sides do.
    assert not partial[3, 0]
    assert partial[2, 0] and partial[5, 0]  # top/bottom rows span the box width
    assert partial[3, 3]


def test_smooth_constant_field_within_tolerance():
    grid = LatentGrid(np.full((2, 8, 8), 4.0))
    out = boundary_smooth(grid, [PixelBox(2, 2, 3, 3, 0)], FusionConfig())
    assert np.allclose(out.data, 4.0, atol=1e-12)


def test_smooth_leaves_far_cells_bitwise():
    rng = np.random.default_rng(18)
    grid = rand_grid(rng, 1, 16, 16)
    box = PixelBox(6, 6, 4, 4, 0)
    cfg = FusionConfig(band_width=2)
    out = boundary_smooth(grid, [box], cfg)
    band = band_mask([box], 16, 16, 2)
    assert np.array_equal(out.data[:, ~band], grid.data[:, ~band])
    assert not np.array_equal(out.data[:, band], grid.data[:, band])


def test_smooth_step_edge_frozen():
    field = np.zeros((1, 8, 8))
    field[0, 2:6, 2:6] = 1.0
    cfg = FusionConfig(smooth_sigma=1.0, kernel_radius=3, band_width=1)
    out = boundary_smooth(LatentGrid(field), [PixelBox(2, 2, 4, 4, 0)], cfg)
    assert abs(out.data[0, 1, 1] - 0.090285141596448) < 1e-12
    assert abs(out.data[0, 3, 3] - 0.878209490071068) < 1e-12
    assert abs(out.data[0, 3, 1] - 0.281583501225500) < 1e-12
    assert out.data[0, 0, 0] == 0.0  # outside the band


def test_smooth_matches_oracle():
    rng = np.random.default_rng(19)
    for _ in range(15):
        grid = rand_grid(rng, 2, 12, 12)
        n = int(rng.integers(1, 4))
        boxes = [rand_box(rng, 12, 12, d) for d in range(n)]
        cfg = FusionConfig(
            smooth_sigma=float(rng.uniform(0.5, 2.0)),
            kernel_radius=int(rng.integers(1, 4)),
            band_width=int(rng.integers(0, 4)),
        )
        got = boundary_smooth(grid, boxes, cfg)
        want = oracles.boundary_smooth(
            oracles.from_array(grid.data),
            [(b.x0, b.y0, b.w, b.h, b.depth) for b in boxes],
            cfg.smooth_sigma,
            cfg.kernel_radius,
            cfg.band_width,
        )
        assert np.allclose(got.data, want, atol=1e-9)


# -- blend ----------------------------------------------------------------------------


def test_blend_endpoints_bitwise():
    rng = np.random.default_rng(20)
    a, b = rand_grid(rng, 2, 4, 4), rand_grid(rng, 2, 4, 4)
    assert np.array_equal(blend(a, b, 1.0).data, a.data)
    assert np.array_equal(blend(a, b, 0.0).data, b.data)


def test_blend_spot_value():
    a = LatentGrid(np.full((1, 1, 1), 10.0))
    b = LatentGrid(np.full((1, 1, 1), 20.0))
    assert abs(blend(a, b, 0.8).data[0, 0, 0] - 12.0) < 1e-12


@settings(max_examples=50, deadline=None)
@given(mu=st.floats(0.0, 1.0))
def test_blend_idempotent_on_equal_inputs(mu):
    rng = np.random.default_rng(21)
    grid = rand_grid(rng, 1, 3, 3)
    out = blend(grid, grid, mu)
    assert np.allclose(out.data, grid.data, rtol=1e-12, atol=1e-15)


def test_blend_rejects_shape_mismatch():
    rng = np.random.default_rng(22)
    with pytest.raises(DimensionMismatchError):
        blend(rand_grid(rng, 1, 4, 4), rand_grid(rng, 1, 5, 4), 0.5)


# -- full step ----------------------------------------------------------------------


def test_step_without_objects_is_blend():
    rng = np.random.default_rng(23)
    complex_latent = rand_grid(rng, 2, 8, 8)
    background = rand_grid(rng, 2, 8, 8)
    out = hcd_step(complex_latent, [], background, FusionConfig(mu=0.8))
    want = 0.8 * complex_latent.data + 0.2 * background.data
    assert np.allclose(out.data, want, atol=1e-12)
    # mu = 1 collapses to the complex latent bitwise.
    out = hcd_step(complex_latent, [], background, FusionConfig(mu=1.0))
    assert np.array_equal(out.data, complex_latent.data)


def test_step_full_frame_object_passthrough():
    # mu = 0, zero enhancement: the object's resized latent comes through
    # bitwise. A full-frame box has no transition band to smooth.
    rng = np.random.default_rng(24)
    obj = rand_grid(rng, 2, 8, 8)
    background = rand_grid(rng, 2, 8, 8)
    complex_latent = rand_grid(rng, 2, 8, 8)
    cfg = FusionConfig(mu=0.0, lambda_pos=0.0, lambda_neg=0.0)
    out = hcd_step(complex_latent, [(obj, BoundingBox(0, 0, 1, 1, 0))], background, cfg)
    assert np.array_equal(out.data, obj.data)


def test_step_matches_oracle_pipeline():
    rng = np.random.default_rng(25)
    for _ in range(10):
        c = int(rng.integers(1, 4))
        grid_h = int(rng.integers(8, 17))
        grid_w = int(rng.integers(8, 17))
        complex_latent = rand_grid(rng, c, grid_h, grid_w)
        background = rand_grid(rng, c, grid_h, grid_w)
        n = int(rng.integers(1, 4))
        depths = rng.permutation(n)
        objects = []
        oracle_objects = []
        for i in range(n):
            latent = rand_grid(rng, c, grid_h, grid_w)
            x, y = float(rng.uniform(0, 0.8)), float(rng.uniform(0, 0.8))
            w, h = float(rng.uniform(0.1, 1 - x)), float(rng.uniform(0.1, 1 - y))
            box = BoundingBox(x, y, w, h, int(depths[i]))
            objects.append((latent, box))
            oracle_objects.append(
                (oracles.from_array(latent.data), (x, y, w, h, int(depths[i])))
            )
        got = hcd_step(complex_latent, objects, background, FusionConfig())
        want = oracles.hcd_step(
            oracles.from_array(complex_latent.data),
            oracle_objects,
            oracles.from_array(background.data),
        )
        assert np.allclose(got.data, want, atol=1e-9)


def test_step_output_always_finite():
    rng = np.random.default_rng(26)
    for _ in range(10):
        complex_latent = rand_grid(rng, 2, 8, 8, scale=100.0)
        background = rand_grid(rng, 2, 8, 8, scale=100.0)
        obj = rand_grid(rng, 2, 8, 8, scale=100.0)
        box = BoundingBox(
            float(rng.uniform(0, 0.5)), float(rng.uniform(0, 0.5)),
            float(rng.uniform(0.01, 0.5)), float(rng.uniform(0.01, 0.5)), 0,
        )
        out = hcd_step(complex_latent, [(obj, box)], background)
        assert np.all(np.isfinite(out.data))


def test_step_rejects_mismatched_branch_shapes():
    rng = np.random.default_rng(27)
    with pytest.raises(DimensionMismatchError):
        hcd_step(rand_grid(rng, 1, 8, 8), [], rand_grid(rng, 1, 6, 8))
    with pytest.raises(DimensionMismatchError):
        hcd_step(
            rand_grid(rng, 1, 8, 8),
            [(rand_grid(rng, 1, 4, 4), BoundingBox(0.1, 0.1, 0.5, 0.5, 0))],
            rand_grid(rng, 1, 8, 8),
        )


def test_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(mu=1.5)
    with pytest.raises(ValueError):
        FusionConfig(lambda_pos=-0.1)
    with pytest.raises(ValueError):
        FusionConfig(smooth_sigma=0.0)
    with pytest.raises(ValueError):
        FusionConfig(epsilon=0.0)
