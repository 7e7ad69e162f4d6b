import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kphaseseg.core import (
    Image,
    Palette,
    ValidationError,
    check_assignment,
    is_assignment,
    new_image,
    one_hot,
    reconstruct,
)
from kphaseseg.pipeline import harden


def test_new_image_black_pixel():
    img = new_image(1, 1, [0, 0, 0])
    assert img.shape == (1, 1)
    assert np.array_equal(img.data, np.zeros((1, 1, 3)))


def test_new_image_uniform_gray():
    img = new_image(2, 2, [0.5] * 12)
    assert np.all(img.data == 0.5)
    assert img.data.dtype == np.float64


def test_new_image_out_of_range():
    with pytest.raises(ValidationError):
        new_image(1, 1, [1.5, 0, 0])


def test_new_image_dimension_mismatch():
    with pytest.raises(ValidationError):
        new_image(2, 2, [0.1] * 11)


def test_image_is_read_only():
    img = new_image(1, 2, [0.1] * 6)
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 0.3


def test_uint8_scaling():
    img = Image.from_uint8(np.full((1, 1, 3), 255, dtype=np.uint8))
    assert np.all(img.data == 1.0)
    assert np.array_equal(img.to_uint8(), np.full((1, 1, 3), 255))


@pytest.mark.parametrize(
    "colors",
    [
        [[0, 0, 0]],  # K < 2
        [[0, 0, 0], [0, 0, 0]],  # duplicates
        [[0, 0, 0], [1.2, 0, 0]],  # out of range
    ],
)
def test_palette_rejects_invalid(colors):
    with pytest.raises(ValidationError):
        Palette(colors)


def test_reconstruct_one_hot_selects_first_color():
    pal = Palette([[1, 0, 0], [0, 1, 0]])
    z = one_hot(np.zeros((3, 4), dtype=int), 2)
    u = reconstruct(z, pal)
    assert np.array_equal(u.data, np.broadcast_to([1.0, 0.0, 0.0], (3, 4, 3)))


def test_reconstruct_relaxed_pixel_is_mixture():
    pal = Palette([[1, 0, 0], [0, 0, 1]])
    z = np.full((2, 1, 1), 0.5)
    assert np.allclose(reconstruct(z, pal).data[0, 0], [0.5, 0.0, 0.5], atol=0)


def test_reconstruct_label_mismatch():
    pal = Palette([[1, 0, 0], [0, 0, 1]])
    with pytest.raises(ValidationError):
        reconstruct(np.full((3, 1, 1), 1 / 3), pal)


def test_check_assignment():
    assert is_assignment(np.full((4, 2, 2), 0.25))
    assert not is_assignment(np.full((4, 2, 2), 0.3))
    assert not is_assignment(np.full((2, 1, 1), 0.5), hard=True)
    z = one_hot(np.array([[0, 1]]), 2)
    assert check_assignment(z, hard=True) is not None
    bad = z.copy()
    bad[0, 0, 0] = -0.1
    bad[1, 0, 0] = 1.1
    assert not is_assignment(bad)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_reconstruct_is_linear(seed, alpha):
    rng = np.random.default_rng(seed)
    k = 3
    pal = Palette(rng.random((k, 3)))
    z1 = rng.random((k, 3, 4))
    z1 /= z1.sum(axis=0)
    z2 = one_hot(rng.integers(0, k, (3, 4)), k)
    mix = reconstruct(alpha * z1 + (1 - alpha) * z2, pal).data
    lin = alpha * reconstruct(z1, pal).data + (1 - alpha) * reconstruct(z2, pal).data
    assert np.max(np.abs(mix - lin)) <= 1e-12


def test_hardening_a_hard_field_is_identity():
    labels = np.random.default_rng(3).integers(0, 5, (6, 7))
    z = one_hot(labels, 5)
    assert np.array_equal(one_hot(harden(z), 5), z)
