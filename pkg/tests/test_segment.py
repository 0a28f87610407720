import numpy as np
import pytest

from svgretarget import raster, segment
from svgretarget.svgcore import SvgDoc

from scenes import circle_path, rect_path


def solid(h, w, color, alpha=None):
    img = np.zeros((h, w, 4 if alpha is not None else 3))
    img[:, :, :3] = color
    if alpha is not None:
        img[:, :, 3] = alpha
    return img


def test_two_disjoint_squares_transparent_background():
    img = np.zeros((64, 64, 4))
    img[10:20, 10:20] = [1, 0, 0, 1]
    img[40:56, 30:50] = [0, 0, 1, 1]
    comps = segment.connected_components(img, 0.02, 4)
    assert len(comps) == 2
    assert [c.area for c in comps] == [320, 100]      # sorted by area desc
    assert comps[0].centroid == (40.0, 48.0)
    assert comps[1].centroid == (15.0, 15.0)
    assert comps[1].mean_color == pytest.approx((1, 0, 0))


def test_solid_image_single_component():
    comps = segment.connected_components(solid(32, 48, (0.3, 0.6, 0.9)), 0.02, 4)
    assert len(comps) == 1
    assert comps[0].area == 32 * 48


def test_diagonal_touch_is_two_components():
    img = np.zeros((20, 20, 4))
    img[2:6, 2:6] = [1, 0, 0, 1]
    img[6:10, 6:10] = [1, 0, 0, 1]
    comps = segment.connected_components(img, 0.02, 2)
    assert len(comps) == 2


def test_fully_background_image_is_empty():
    assert segment.connected_components(np.zeros((16, 16, 4))) == []


def test_corner_key_background():
    img = solid(40, 40, (1.0, 1.0, 1.0))
    img[10:30, 10:30, :3] = [0.2, 0.4, 0.6]
    comps = segment.connected_components(img, 0.02, 4)
    assert len(comps) == 1
    assert comps[0].area == 400


def test_small_component_merges_into_color_nearest_neighbor():
    img = np.zeros((32, 32, 4))
    img[4:28, 4:16] = [1, 0, 0, 1]          # big red
    img[4:28, 18:30] = [0, 0, 1, 1]         # big blue
    img[14:16, 16:18] = [0.9, 0.1, 0.1, 1]  # small reddish bridging sliver
    comps = segment.connected_components(img, 0.02, min_area=10)
    assert len(comps) == 2
    red = next(c for c in comps if c.mean_color[0] > 0.5)
    assert red.area == 24 * 12 + 4          # sliver joined the red side


def test_small_isolated_component_dropped():
    img = np.zeros((32, 32, 4))
    img[4:20, 4:20] = [1, 0, 0, 1]
    img[26:28, 26:28] = [0, 1, 0, 1]        # isolated 4 px speck
    comps = segment.connected_components(img, 0.02, min_area=10)
    assert len(comps) == 1
    assert comps[0].area == 256


def test_component_masks_disjoint_and_bounded():
    img = np.zeros((48, 48, 4))
    img[2:20, 2:20] = [1, 0, 0, 1]
    img[25:40, 25:46] = [0, 1, 0, 1]
    img[5:12, 30:40] = [0, 0, 1, 1]
    comps = segment.connected_components(img, 0.02, 4)
    total = np.zeros((48, 48), dtype=int)
    for c in comps:
        total += c.mask
    assert total.max() <= 1
    assert total.sum() <= 48 * 48


def test_boundary_is_closed_unit_step_contour():
    img = np.zeros((32, 32, 4))
    img[8:20, 6:25] = [1, 0, 0, 1]
    comps = segment.connected_components(img, 0.02, 4)
    b = comps[0].boundary
    steps = np.linalg.norm(np.roll(b, -1, axis=0) - b, axis=1)
    assert np.allclose(steps, 1.0)
    assert len(np.unique(b, axis=0)) == len(b)     # no self-crossing vertices
    assert len(b) == 2 * (12 + 19)


def test_exemplar_segments_painter_order():
    big = rect_path(4, 4, 28, 28, (1, 0, 0), pid="big")
    small = rect_path(12, 12, 20, 20, (0, 1, 0), pid="small")
    doc = SvgDoc(32, 32, [big, small])
    lm = segment.exemplar_segments(doc, 32, 32)
    assert lm.labels[16, 16] == 1                  # top path owns the overlap
    assert lm.labels[6, 6] == 0
    assert lm.labels[0, 0] == -1
    counts = lm.label_counts(2)
    assert counts[1] == 8 * 8
    assert counts[0] == 24 * 24 - 8 * 8


def test_exemplar_segments_single_path():
    doc = SvgDoc(32, 32, [circle_path(16, 16, 10, (0, 0, 1), pid="c")])
    lm = segment.exemplar_segments(doc, 32, 32)
    labs = np.unique(lm.labels)
    assert set(labs.tolist()) <= {-1, 0}


def test_exemplar_segments_full_occlusion_flagged():
    below = rect_path(10, 10, 20, 20, (1, 0, 0), pid="hidden")
    above = rect_path(5, 5, 27, 27, (0, 1, 0), pid="cover")
    doc = SvgDoc(32, 32, [below, above])
    lm = segment.exemplar_segments(doc, 32, 32)
    counts = lm.label_counts(2)
    assert counts[0] == 0              # fully occluded path has no pixels
    assert counts[1] > 0


def test_label_count_bounded_by_paths():
    doc = SvgDoc(32, 32, [rect_path(2, 2, 10, 10, (1, 0, 0), pid="a"),
                          rect_path(12, 12, 20, 20, (0, 1, 0), pid="b")])
    lm = segment.exemplar_segments(doc, 32, 32)
    labs = lm.labels[lm.labels >= 0]
    assert labs.max() < len(doc.paths)


def test_flatten_flat_image_unchanged():
    img = solid(16, 16, (0.25, 0.5, 0.75))
    out = segment.flatten_colors(img, 0.02)
    assert np.array_equal(out, img)


def test_flatten_cuts_antialiased_ramp_at_half():
    # vertical edge with a blend ramp; true boundary between columns 15/16
    img = np.ones((16, 32, 3))
    img[:, :14] = [1, 0, 0]
    for j, a in enumerate([0.85, 0.6, 0.4, 0.15]):
        img[:, 14 + j] = [1, 1 - a, 1 - a]
    out = segment.flatten_colors(img, 0.02)
    assert np.allclose(out[:, :16], [1, 0, 0])
    assert np.allclose(out[:, 16:], [1, 1, 1])


def test_flatten_on_render_recovers_flat_regions():
    doc = SvgDoc(64, 64, [circle_path(32, 32, 18, (0.2, 0.5, 0.8), pid="c")])
    img, _ = raster.render(doc, 64, 64)
    flat = segment.flatten_colors(img, 0.02)
    vals = np.unique(flat.reshape(-1, 3), axis=0)
    assert len(vals) == 2
    comps = segment.connected_components(flat, 0.02, 4)
    assert len(comps) == 1
    assert comps[0].mean_color == pytest.approx((0.2, 0.5, 0.8))
    # the mask area matches the disk area to sub-percent accuracy
    assert abs(comps[0].area - np.pi * 18 ** 2) / (np.pi * 18 ** 2) < 0.01


def test_subpixel_boundary_recovers_true_edge():
    # rectangle with a fractional edge position
    doc = SvgDoc(64, 64, [rect_path(10.3, 12.7, 40.6, 30.2, (0.1, 0.2, 0.9),
                                    pid="r")])
    img, _ = raster.render(doc, 64, 64)
    flat = segment.flatten_colors(img, 0.02)
    comps = segment.connected_components(flat, 0.02, 4)
    refined = segment.subpixel_boundary(comps[0], img)
    # mid-edge samples (away from corners) sit on the true fractional
    # edge position within a tenth of a pixel
    left = refined[(np.abs(refined[:, 0] - 10.3) < 1.0)
                   & (refined[:, 1] > 16) & (refined[:, 1] < 27)]
    assert len(left) > 5
    assert abs(left[:, 0].mean() - 10.3) < 0.1
    top = refined[(np.abs(refined[:, 1] - 12.7) < 1.0)
                  & (refined[:, 0] > 15) & (refined[:, 0] < 36)]
    assert len(top) > 5
    assert abs(top[:, 1].mean() - 12.7) < 0.1


def test_colorize_labels_shapes():
    lm = segment.LabelMap(8, 8, np.full((8, 8), -1, dtype=np.int64))
    out = segment.colorize_labels(lm)
    assert out.shape == (8, 8, 3)
    assert np.allclose(out, 1.0)
