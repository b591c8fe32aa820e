import numpy as np
import pytest

from aquasi.image import (
    GRAYSCALE_WEIGHTS,
    as_image,
    as_multichannel,
    channel_average,
    window,
)


class TestWindow:
    def test_full_interior_window(self):
        img = np.arange(9.0).reshape(3, 3)
        win = window(img, center=4, radius=1)
        assert win.size == 9
        assert np.array_equal(win.indices, np.arange(9))

    def test_corner_clipping(self):
        img = np.arange(9.0).reshape(3, 3)
        win = window(img, center=0, radius=1)
        assert win.size == 4
        assert np.array_equal(win.indices, [0, 1, 3, 4])

    def test_edge_midpoint_radius_2(self):
        # 5x5 image, center at the midpoint of the top edge: rows 0..2 are
        # in bounds (3 rows), all 5 columns are -> 15 members.
        img = np.zeros((5, 5))
        win = window(img, center=2, radius=2)
        assert win.size == 15

    def test_against_brute_force_enumeration(self):
        rng = np.random.default_rng(0)
        for h, w in [(1, 1), (2, 3), (4, 4), (7, 7), (5, 7)]:
            img = rng.random((h, w))
            for radius in (1, 2, 3):
                for center in range(h * w):
                    cy, cx = divmod(center, w)
                    expected = [
                        y * w + x
                        for y in range(cy - radius, cy + radius + 1)
                        for x in range(cx - radius, cx + radius + 1)
                        if 0 <= y < h and 0 <= x < w
                    ]
                    win = window(img, center, radius)
                    assert win.indices.tolist() == expected
                    assert np.array_equal(win.values, img.ravel()[expected])

    def test_out_of_range_center(self):
        img = np.zeros((3, 3))
        with pytest.raises(ValueError):
            window(img, 9, 1)
        with pytest.raises(ValueError):
            window(img, -1, 1)

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            window(np.zeros((3, 3)), 0, 0)


class TestChannelAverage:
    def test_single_channel_identity(self):
        rng = np.random.default_rng(1)
        img = rng.random((1, 4, 5))
        assert np.array_equal(channel_average(img, [1.0]), img[0])

    def test_constant_channels(self):
        mc = np.stack([np.ones((3, 3)), np.zeros((3, 3)), np.zeros((3, 3))])
        out = channel_average(mc, GRAYSCALE_WEIGHTS)
        assert np.allclose(out, 0.299, atol=0)

    def test_per_pixel_oracle(self):
        rng = np.random.default_rng(2)
        mc = rng.random((3, 4, 4))
        m = np.array(GRAYSCALE_WEIGHTS)
        out = channel_average(mc, m)
        for y in range(4):
            for x in range(4):
                expected = sum(m[c] * mc[c, y, x] for c in range(3))
                assert abs(out[y, x] - expected) < 1e-12

    def test_linearity(self):
        rng = np.random.default_rng(3)
        x = rng.random((3, 5, 5))
        y = rng.random((3, 5, 5))
        m = np.array([0.2, 0.5, 0.3])
        a, b = 1.7, -0.4
        lhs = channel_average(a * x + b * y, m)
        rhs = a * channel_average(x, m) + b * channel_average(y, m)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            channel_average(np.zeros((3, 2, 2)), [1.0, 2.0])

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ValueError):
            channel_average(np.zeros((2, 2, 2)), [0.0, 0.0])


class TestValidation:
    def test_rejects_non_finite(self):
        img = np.ones((3, 3))
        img[1, 1] = np.nan
        with pytest.raises(ValueError):
            as_image(img)
        with pytest.raises(ValueError):
            as_multichannel(img[None])

    def test_promotes_2d(self):
        mc = as_multichannel(np.zeros((4, 5)))
        assert mc.shape == (1, 4, 5)

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            as_image(np.zeros(4))
        with pytest.raises(ValueError):
            as_multichannel(np.zeros((2, 2, 2, 2)))
