import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsight.perturb import apply_pitch, apply_roll, pitch_shift_px


def smooth_image(h=120, w=160):
    v, u = np.mgrid[0:h, 0:w]
    img = 127.5 + 60 * np.sin(u / 17.0) + 50 * np.cos(v / 13.0)
    return np.stack([img, img[::-1], 255 - img], axis=-1).astype(np.uint8)


@pytest.mark.parametrize("fy,deg,px", [(200, 1.5, 5), (2262, 1.5, 59), (200, -1.5, -5), (100, 0, 0)])
def test_pitch_shift(fy, deg, px):
    assert pitch_shift_px(fy, deg) == px


def test_pitch_zero_identity():
    img = smooth_image()
    np.testing.assert_array_equal(apply_pitch(img, 200, 0), img)


def test_pitch_moves_content_up_with_replication():
    img = np.arange(10)[:, None].repeat(3, axis=1)
    out = apply_pitch(img, 200, 1.5)  # 5 px
    np.testing.assert_array_equal(out[:, 0], [5, 6, 7, 8, 9, 9, 9, 9, 9, 9])
    out = apply_pitch(img, 200, -1.5)
    np.testing.assert_array_equal(out[:, 0], [0, 0, 0, 0, 0, 0, 1, 2, 3, 4])


@settings(max_examples=50, deadline=None)
@given(deg=st.floats(-10, 10), fy=st.floats(50, 500))
def test_pitch_inverse_away_from_border(deg, fy):
    img = smooth_image()
    s = abs(pitch_shift_px(fy, deg))
    back = apply_pitch(apply_pitch(img, fy, deg), fy, -deg)
    if s < img.shape[0] // 2:
        np.testing.assert_array_equal(back[s:img.shape[0] - s], img[s:img.shape[0] - s])
    assert back.shape == img.shape


def test_pitch_range():
    with pytest.raises(ValueError):
        apply_pitch(smooth_image(), 200, 45)


def test_roll_zero_identity():
    img = smooth_image()
    np.testing.assert_array_equal(apply_roll(img, 0), img)


def test_roll_round_trip_smooth():
    img = smooth_image()
    back = apply_roll(apply_roll(img, 5), -5).astype(np.float64)
    inner = (slice(20, -20), slice(20, -20))
    assert np.abs(back[inner] - img[inner].astype(np.float64)).mean() < 0.02 * 255


def test_roll_direction_counter_clockwise():
    img = np.zeros((101, 101), np.uint8)
    img[50, 90] = 255  # right of centre
    out = apply_roll(img, 90, labels=True)
    v, u = np.argwhere(out == 255)[0]
    assert (v, u) == (10, 50)  # rotated to above the centre


@settings(max_examples=30, deadline=None)
@given(deg=st.floats(-90, 90))
def test_roll_labels_closed(deg):
    labels = np.random.default_rng(0).choice(np.array([7, 8, 22, 23], np.uint8), (40, 60))
    out = apply_roll(labels, deg, labels=True)
    assert out.shape == labels.shape
    assert set(np.unique(out)) <= {7, 8, 22, 23}


def test_roll_range():
    with pytest.raises(ValueError):
        apply_roll(smooth_image(), 91)
