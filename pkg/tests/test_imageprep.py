import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from sigver.errors import ConfigError, DegenerateImageError, ShapeError
from sigver.imageprep import (PrepConfig, center_of_mass, center_on_canvas, compute_dataset_std, invert,
                              normalize_std, otsu_threshold, prepare_unscaled, preprocess, remove_background,
                              resize_with_crop)


def test_otsu_bimodal_example():
    img = np.array([[10] * 5 + [200] * 5] * 4, dtype=np.uint8)
    # any t in [10, 199] splits perfectly; the lowest maximizer wins
    assert otsu_threshold(img) == 10


def test_otsu_constant_image_rejected():
    with pytest.raises(DegenerateImageError):
        otsu_threshold(np.full((4, 4), 77, np.uint8))


@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(2, 12))))
def test_otsu_matches_exhaustive_property(img):
    if img.min() == img.max():
        return
    assert otsu_threshold(img) == oracles.otsu_exhaustive(img)


def test_remove_background_and_invert():
    img = np.array([[0, 100, 101, 255]], dtype=np.uint8)
    out = remove_background(img, 100)
    assert out.tolist() == [[0, 100, 255, 255]]
    assert invert(out).tolist() == [[255, 155, 0, 0]]


def test_raw_range_checked():
    with pytest.raises(ConfigError):
        remove_background(np.array([[300]]), 10)
    with pytest.raises(ShapeError):
        invert(np.zeros(5))


def test_center_of_mass_weighted():
    img = np.zeros((5, 5))
    img[1, 1] = 1.0
    img[3, 3] = 3.0
    assert center_of_mass(img) == pytest.approx((2.5, 2.5))
    with pytest.raises(DegenerateImageError):
        center_of_mass(np.zeros((3, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 9), st.integers(0, 9))
def test_centering_lands_within_one_pixel(h, w, r, c):
    img = np.zeros((h, w), np.uint8)
    img[min(r, h - 1), min(c, w - 1)] = 255
    canvas = center_on_canvas(img, 21, 31)
    assert canvas.shape == (21, 31)
    cr, cc = center_of_mass(canvas)
    assert abs(cr - 10) <= 1 and abs(cc - 15) <= 1


def test_centering_clips_instead_of_failing():
    img = np.zeros((10, 10), np.uint8)
    img[0, 0] = 255
    img[9, 9] = 1
    canvas = center_on_canvas(img, 10, 10)
    assert canvas[5, 5] == 255  # heavy pixel moved to the center
    assert canvas.sum() == 255  # light pixel pushed off the canvas


def test_center_on_canvas_rejects_oversized_image():
    with pytest.raises(ShapeError):
        center_on_canvas(np.ones((5, 5)), 4, 10)


def test_resize_identity_and_constant():
    img = np.arange(12, dtype=float).reshape(3, 4)
    assert np.array_equal(resize_with_crop(img, 3, 4), img)
    assert np.allclose(resize_with_crop(np.full((7, 9), 5.0), 4, 3), 5.0)


def test_resize_keeps_aspect_and_crops_center():
    # 4x8 -> 4x4: no scaling needed vertically, the middle 4 columns survive
    img = np.tile(np.arange(8, dtype=float), (4, 1))
    out = resize_with_crop(img, 4, 4)
    assert out.shape == (4, 4)
    assert np.array_equal(out[0], [2, 3, 4, 5])


def test_resize_downsample_averages_pairs():
    img = np.tile(np.array([0.0, 10.0]), (2, 4))  # 2x8
    out = resize_with_crop(img, 1, 4)
    assert np.allclose(out, 5.0)


def test_normalize_and_dataset_std():
    a, b = np.array([[0.0, 2.0]]), np.array([[4.0, 6.0]])
    assert compute_dataset_std([a, b]) == pytest.approx(np.std([0, 2, 4, 6]))
    assert np.array_equal(normalize_std(a, 2.0), [[0.0, 1.0]])
    with pytest.raises(ConfigError):
        normalize_std(a, 0.0)
    with pytest.raises(ConfigError):
        compute_dataset_std([])


def test_prep_config_validation():
    with pytest.raises(ConfigError):
        PrepConfig(mode="bogus")
    with pytest.raises(ConfigError):
        PrepConfig(target_h=0)
    with pytest.raises(ConfigError):
        PrepConfig(dataset_pixel_std=0)


def _signature(h=40, w=60):
    img = np.full((h, w), 240, np.uint8)
    img[15:25, 10:50] = 30
    return img


def test_full_pipeline_shape_and_background():
    cfg = PrepConfig(canvas_h=80, canvas_w=120, target_h=20, target_w=30, dataset_pixel_std=2.0)
    out = preprocess(_signature(), cfg)
    assert out.shape == (20, 30)
    assert out.min() == 0.0  # background becomes 0 after inversion
    assert out.max() <= 255 / 2.0
    unscaled = prepare_unscaled(_signature(), cfg)
    assert np.allclose(out, unscaled / 2.0)


def test_resize_only_mode_skips_canvas():
    cfg = PrepConfig(mode="resize-only", target_h=20, target_w=30)
    assert prepare_unscaled(_signature(), cfg).shape == (20, 30)


def test_blank_page_is_degenerate():
    with pytest.raises(DegenerateImageError):
        preprocess(np.full((10, 10), 250, np.uint8), PrepConfig(canvas_h=20, canvas_w=20, target_h=5, target_w=5))
