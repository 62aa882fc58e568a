"""I/O, noise, metric, and patch-geometry behavior."""

import math

import numpy as np
import pytest
from PIL import Image as PILImage

from dct2net.image import (
    ImageFormatError,
    add_gaussian_noise,
    half_width,
    patch_index,
    psnr,
    quantize,
    read_image,
    reflect_pad,
    write_image,
)


class TestReflectPad:
    def test_mirror_without_edge_repeat(self):
        img = np.array([[1.0, 2.0], [3.0, 4.0]])
        expected = np.array(
            [
                [4.0, 3.0, 4.0, 3.0],
                [2.0, 1.0, 2.0, 1.0],
                [4.0, 3.0, 4.0, 3.0],
                [2.0, 1.0, 2.0, 1.0],
            ]
        )
        np.testing.assert_array_equal(reflect_pad(img, 1), expected)

    def test_border_zero_returns_unaliased_copy(self):
        img = np.ones((3, 3))
        out = reflect_pad(img, 0)
        np.testing.assert_array_equal(out, img)
        out[0, 0] = 5.0
        assert img[0, 0] == 1.0

    def test_center_preserved(self):
        img = np.arange(20.0).reshape(4, 5)
        out = reflect_pad(img, 2)
        np.testing.assert_array_equal(out[2:-2, 2:-2], img)

    def test_border_too_large_rejected(self):
        with pytest.raises(ValueError):
            reflect_pad(np.ones((3, 5)), 3)

    def test_negative_border_rejected(self):
        with pytest.raises(ValueError):
            reflect_pad(np.ones((3, 3)), -1)


class TestQuantize:
    def test_clamps_and_rounds_half_up(self):
        vals = np.array([-3.0, 0.49, 0.5, 1.5, 254.5, 255.7])
        np.testing.assert_array_equal(
            quantize(vals), np.array([0.0, 0.0, 1.0, 2.0, 255.0, 255.0])
        )

    def test_integers_fixed(self):
        vals = np.arange(256.0)
        np.testing.assert_array_equal(quantize(vals), vals)


class TestPsnr:
    def test_identical_is_infinite(self):
        img = np.random.default_rng(0).random((8, 8))
        assert psnr(img, img) == math.inf

    def test_matches_definition(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 10.0)
        assert psnr(a, b) == pytest.approx(10.0 * math.log10(255.0**2 / 100.0))

    def test_custom_peak(self):
        a = np.zeros((2, 2))
        b = np.ones((2, 2))
        assert psnr(a, b, peak=1.0) == pytest.approx(0.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))


class TestAddGaussianNoise:
    def test_deterministic_for_fixed_seed(self):
        img = np.zeros((16, 16))
        a = add_gaussian_noise(img, 25.0, 42)
        b = add_gaussian_noise(img, 25.0, 42)
        np.testing.assert_array_equal(a, b)

    def test_seed_sequence_accepted(self):
        img = np.zeros((4, 4))
        seq = np.random.SeedSequence((1, 2, 3))
        a = add_gaussian_noise(img, 5.0, seq)
        b = add_gaussian_noise(img, 5.0, np.random.SeedSequence((1, 2, 3)))
        np.testing.assert_array_equal(a, b)

    def test_sigma_zero_is_identity(self):
        img = np.random.default_rng(1).random((8, 8)) * 255
        np.testing.assert_array_equal(add_gaussian_noise(img, 0.0, 0), img)

    def test_moments(self):
        noise = add_gaussian_noise(np.zeros((200, 200)), 25.0, 3)
        assert abs(noise.mean()) < 0.5
        assert abs(noise.std() - 25.0) < 0.5

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            add_gaussian_noise(np.zeros((2, 2)), -1.0, 0)


class TestPatchGeometry:
    def test_half_width_values(self):
        assert half_width(3) == 1
        assert half_width(13) == 6

    @pytest.mark.parametrize("p", [2, 4, 1, 0, -3])
    def test_half_width_rejects_bad_sides(self, p):
        with pytest.raises(ValueError):
            half_width(p)

    @pytest.mark.parametrize("p", [3, 5, 7, 9, 13])
    def test_index_is_a_bijection(self, p):
        q = (p - 1) // 2
        seen = {patch_index(i, j, p) for i in range(-q, q + 1) for j in range(-q, q + 1)}
        assert seen == set(range(1, p * p + 1))

    def test_corner_and_center_positions(self):
        # (q, q) leads the vector, the center offset sits exactly mid-vector
        for p in (3, 13):
            q = (p - 1) // 2
            assert patch_index(q, q, p) == 1
            assert patch_index(-q, -q, p) == p * p
            assert patch_index(0, 0, p) == (p * p + 1) // 2

    def test_out_of_range_offset_rejected(self):
        with pytest.raises(ValueError):
            patch_index(2, 0, 3)


class TestReadWrite:
    @pytest.mark.parametrize("ext", ["png", "pgm", "pnm"])
    def test_round_trip(self, tmp_path, ext):
        img = np.random.default_rng(9).integers(0, 256, size=(11, 7)).astype(np.float64)
        path = str(tmp_path / f"img.{ext}")
        write_image(img, path)
        back = read_image(path)
        np.testing.assert_array_equal(back, img)
        assert back.dtype == np.float64

    def test_format_sniffed_from_magic_not_extension(self, tmp_path):
        img = np.full((3, 3), 7.0)
        pgm_path = str(tmp_path / "actually_pgm.png")
        write_image(img, str(tmp_path / "tmp.pgm"))
        (tmp_path / "tmp.pgm").rename(tmp_path / "actually_pgm.png")
        np.testing.assert_array_equal(read_image(pgm_path), img)

    def test_pgm_header_comments(self, tmp_path):
        raw = b"P5\n# a comment\n3 2\n# another\n255\n" + bytes(range(6))
        path = tmp_path / "c.pgm"
        path.write_bytes(raw)
        img = read_image(str(path))
        np.testing.assert_array_equal(img, np.arange(6.0).reshape(2, 3))

    def test_pgm_wrong_maxval_rejected(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P5\n2 2\n64\n\x00\x01\x02\x03")
        with pytest.raises(ImageFormatError):
            read_image(str(path))

    def test_pgm_truncated_raster_rejected(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(ImageFormatError):
            read_image(str(path))

    def test_color_png_rejected(self, tmp_path):
        path = tmp_path / "rgb.png"
        PILImage.new("RGB", (4, 4), (10, 20, 30)).save(path)
        with pytest.raises(ImageFormatError):
            read_image(str(path))

    def test_unknown_magic_rejected(self, tmp_path):
        path = tmp_path / "x.png"
        path.write_bytes(b"GIF89a....")
        with pytest.raises(ImageFormatError):
            read_image(str(path))

    def test_unsupported_output_extension_rejected(self, tmp_path):
        with pytest.raises(ImageFormatError):
            write_image(np.zeros((2, 2)), str(tmp_path / "out.tiff"))

    def test_write_quantizes(self, tmp_path):
        path = str(tmp_path / "q.png")
        write_image(np.array([[0.6, 300.0], [-5.0, 128.4]]), path)
        np.testing.assert_array_equal(
            read_image(path), np.array([[1.0, 255.0], [0.0, 128.0]])
        )
