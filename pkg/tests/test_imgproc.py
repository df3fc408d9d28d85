import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hexatrack import imgproc
from hexatrack.imgproc import (
    Frame,
    HsvColor,
    ImageError,
    abs_diff_threshold,
    connected_components,
    gaussian_blur,
    gaussian_kernel1d,
    morph_open_3x3,
    read_image,
    rgb_to_hsv,
    to_grayscale,
    write_image,
)


class TestGrayscale:
    def test_black(self):
        f = Frame(np.zeros((4, 5, 3), np.uint8))
        assert (to_grayscale(f) == 0).all()

    def test_white(self):
        f = Frame(np.full((4, 5, 3), 255, np.uint8))
        assert (to_grayscale(f) == 255).all()

    def test_weighted_sum(self):
        # round(0.299*100 + 0.587*50 + 0.114*200) = round(82.05) = 82
        px = np.full((2, 2, 3), (100, 50, 200), np.uint8)
        assert (to_grayscale(px) == 82).all()

    def test_rejects_wrong_shape(self):
        with pytest.raises(ImageError):
            to_grayscale(np.zeros((4, 5), np.uint8))


class TestRgbToHsv:
    def test_black(self):
        assert rgb_to_hsv((0, 0, 0)) == HsvColor(0, 0, 0)

    def test_pure_red(self):
        assert rgb_to_hsv((255, 0, 0)) == HsvColor(0, 255, 255)

    def test_gray_has_zero_saturation(self):
        assert rgb_to_hsv((128, 128, 128)) == HsvColor(0, 0, 128)


class TestGaussianBlur:
    def test_constant_preserved(self):
        img = np.full((20, 30), 77, np.uint8)
        out = gaussian_blur(img, 1.0)
        assert np.abs(out.astype(int) - 77).max() <= 1

    def test_impulse_decay_and_symmetry(self):
        img = np.zeros((21, 21), np.uint8)
        img[10, 10] = 255
        out = gaussian_blur(img, 1.0).astype(int)
        # oracle: the discrete kernel value at the center
        k = gaussian_kernel1d(1.0)
        center = k[len(k) // 2]
        assert out[10, 10] == pytest.approx(255 * center * center, abs=1)
        assert out[10, 10] < 255
        assert (out == out[::-1, :]).all() and (out == out[:, ::-1]).all()

    def test_impulse_sum_preserved(self):
        img = np.zeros((31, 31))
        img[15, 15] = 255.0
        out = gaussian_blur(img, 1.5)
        assert out.sum() == pytest.approx(255, rel=0.01)

    def test_kernel_radius(self):
        assert len(gaussian_kernel1d(1.0)) == 7  # radius ceil(3*1.0) = 3

    @pytest.mark.parametrize("sigma", [0.0, -1.0])
    def test_bad_sigma(self, sigma):
        with pytest.raises(ImageError):
            gaussian_blur(np.zeros((8, 8), np.uint8), sigma)


class TestAbsDiffThreshold:
    def test_identical_frames(self):
        a = np.random.default_rng(0).integers(0, 255, (10, 10)).astype(np.uint8)
        assert (abs_diff_threshold(a, a, 10) == 0).all()

    def test_above_threshold(self):
        a = np.full((5, 5), 200, np.uint8)
        b = np.full((5, 5), 100, np.uint8)
        assert (abs_diff_threshold(a, b, 50) == 255).all()

    def test_below_threshold(self):
        a = np.full((5, 5), 120, np.uint8)
        b = np.full((5, 5), 100, np.uint8)
        assert (abs_diff_threshold(a, b, 50) == 0).all()

    def test_dimension_mismatch(self):
        with pytest.raises(ImageError):
            abs_diff_threshold(np.zeros((4, 4), np.uint8), np.zeros((5, 5), np.uint8), 10)


class TestMorphOpen:
    def test_isolated_pixel_removed(self):
        img = np.zeros((9, 9), np.uint8)
        img[4, 4] = 255
        assert (morph_open_3x3(img) == 0).all()

    def test_solid_block_preserved(self):
        img = np.zeros((11, 11), np.uint8)
        img[3:8, 3:8] = 255
        out = morph_open_3x3(img)
        assert (out == img).all()

    def test_empty(self):
        assert (morph_open_3x3(np.zeros((6, 6), np.uint8)) == 0).all()

    def test_anti_extensive(self):
        rng = np.random.default_rng(1)
        img = (rng.random((30, 30)) > 0.6).astype(np.uint8) * 255
        out = morph_open_3x3(img)
        assert not (out & ~img).any()  # opening never adds foreground

    def test_idempotent_on_blocks(self):
        img = np.zeros((15, 15), np.uint8)
        img[2:9, 3:12] = 255
        once = morph_open_3x3(img)
        assert (morph_open_3x3(once) == once).all()


class TestConnectedComponents:
    def test_empty(self):
        assert connected_components(np.zeros((5, 5), np.uint8)) == []

    def test_two_isolated_pixels(self):
        img = np.zeros((12, 12), np.uint8)
        img[0, 0] = img[10, 10] = 255
        comps = connected_components(img)
        assert len(comps) == 2
        assert sorted(len(c) for c in comps) == [1, 1]

    def test_diagonal_is_connected(self):
        img = np.zeros((4, 4), np.uint8)
        img[0, 0] = img[1, 1] = 255
        comps = connected_components(img)
        assert len(comps) == 1
        assert len(comps[0]) == 2

    def test_partition(self):
        rng = np.random.default_rng(2)
        img = (rng.random((25, 25)) > 0.5).astype(np.uint8) * 255
        comps = connected_components(img)
        total = sum(len(c) for c in comps)
        assert total == int((img > 0).sum())
        seen = set()
        for c in comps:
            for x, y in c:
                assert (x, y) not in seen
                assert img[y, x] == 255
                seen.add((x, y))


@settings(max_examples=25, deadline=None)
@given(arrays(np.uint8, (16, 16)), arrays(np.uint8, (16, 16)))
def test_binary_outputs_are_binary(a, b):
    d = abs_diff_threshold(a, b, 30)
    assert set(np.unique(d)) <= {0, 255}
    m = morph_open_3x3(d)
    assert set(np.unique(m)) <= {0, 255}


class TestImageIo:
    @pytest.mark.parametrize("ext", ["pgm", "png"])
    def test_gray_roundtrip(self, tmp_path, ext):
        img = np.random.default_rng(0).integers(0, 256, (7, 9)).astype(np.uint8)
        p = tmp_path / f"g.{ext}"
        write_image(p, img)
        assert (read_image(p) == img).all()

    @pytest.mark.parametrize("ext", ["ppm", "png"])
    def test_color_roundtrip(self, tmp_path, ext):
        img = np.random.default_rng(1).integers(0, 256, (7, 9, 3)).astype(np.uint8)
        p = tmp_path / f"c.{ext}"
        write_image(p, Frame(img))
        assert (read_image(p) == img).all()
