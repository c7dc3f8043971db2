import numpy as np
import pytest

from gazekit.errors import InvalidInputError
from gazekit.imgproc import GrayImage, derivative_stack
from gazekit.isocenter import (
    CenterMap,
    accumulate_centermap,
    curvedness,
    displacement_field,
    isophote_curvature,
    locate_eye_center,
    mean_shift_refine,
)

from .synth import disk, disk_image, eye_crop


def smoothed_fd_oracle(img: np.ndarray, sigma: float):
    """Independent derivative oracle: dense Gaussian then central differences.

    Smoothing is direct summation over the full truncated kernel with edge
    clamping, not the separable path used by the implementation.
    """
    radius = int(np.ceil(3 * sigma))
    xs = np.arange(-radius, radius + 1)
    g1 = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel = np.outer(g1, g1)
    kernel /= kernel.sum()
    h, w = img.shape
    s = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for j in range(2 * radius + 1):
                for i in range(2 * radius + 1):
                    sy = min(max(y + j - radius, 0), h - 1)
                    sx = min(max(x + i - radius, 0), w - 1)
                    acc += img[sy, sx] * kernel[j, i]
            s[y, x] = acc
    lx = np.zeros_like(s)
    ly = np.zeros_like(s)
    lxx = np.zeros_like(s)
    lyy = np.zeros_like(s)
    lxy = np.zeros_like(s)
    lx[:, 1:-1] = (s[:, 2:] - s[:, :-2]) / 2
    ly[1:-1, :] = (s[2:, :] - s[:-2, :]) / 2
    lxx[:, 1:-1] = s[:, 2:] - 2 * s[:, 1:-1] + s[:, :-2]
    lyy[1:-1, :] = s[2:, :] - 2 * s[1:-1, :] + s[:-2, :]
    lxy[1:-1, 1:-1] = (s[2:, 2:] - s[2:, :-2] - s[:-2, 2:] + s[:-2, :-2]) / 4
    return s, lx, ly, lxx, lxy, lyy


def rim_mask(size, cx, cy, r, width=0.5):
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    return np.abs(np.hypot(xs - cx, ys - cy) - r) < width


class TestIsophoteCurvature:
    def test_dark_disk_rim_curvature_is_reciprocal_radius(self):
        r = 10.0
        img = disk_image(64, 31.5, 32.5, r)
        st = derivative_stack(img, 1.0)
        kappa = isophote_curvature(st).pixels
        rim = rim_mask(64, 31.5, 32.5, r)
        vals = np.abs(kappa[rim])
        assert abs(np.median(vals) - 1.0 / r) / (1.0 / r) < 0.10

    def test_dark_rim_sign_negative(self):
        img = disk_image(64, 32, 32, 9.0)
        st = derivative_stack(img, 1.0)
        kappa = isophote_curvature(st).pixels
        rim = rim_mask(64, 32, 32, 9.0)
        assert (kappa[rim] < 0).mean() >= 0.90

    def test_linear_ramp_zero_curvature(self):
        ys, xs = np.mgrid[0:20, 0:20].astype(float)
        st = derivative_stack(GrayImage((xs + 2 * ys) / 60.0), 1.0)
        kappa = isophote_curvature(st).pixels
        assert np.abs(kappa[4:-4, 4:-4]).max() < 1e-6

    def test_matches_finite_difference_oracle(self):
        rng = np.random.default_rng(4)
        ys, xs = np.mgrid[0:24, 0:24].astype(float)
        img = 0.5 + 0.25 * np.sin(xs / 4.0) * np.cos(ys / 5.0) + 0.1 * np.sin(
            (xs + ys) / 7.0
        )
        st = derivative_stack(GrayImage(img), 1.0)
        kappa = isophote_curvature(st).pixels
        _, lx, ly, lxx, lxy, lyy = smoothed_fd_oracle(img, 1.0)
        grad_sq = lx**2 + ly**2
        num = ly**2 * lxx - 2 * lx * lxy * ly + lx**2 * lyy
        with np.errstate(divide="ignore", invalid="ignore"):
            expected = np.where(grad_sq > 1e-8, -num / grad_sq**1.5, 0.0)
        inner = np.s_[5:-5, 5:-5]
        assert np.abs(kappa[inner] - expected[inner]).max() < 1e-2


class TestDisplacementField:
    def test_dark_disk_vectors_point_at_center_with_radius_length(self):
        r = 10.0
        img = disk_image(64, 32.0, 32.0, r)
        st = derivative_stack(img, 1.0)
        d = displacement_field(st)
        rim = rim_mask(64, 32.0, 32.0, r)
        mags = np.hypot(d[..., 0], d[..., 1])[rim]
        assert abs(np.median(mags) - r) / r < 0.15
        # Vote destinations cluster at the center.
        ys, xs = np.mgrid[0:64, 0:64].astype(float)
        tx = (xs + d[..., 0])[rim]
        ty = (ys + d[..., 1])[rim]
        assert abs(np.median(tx) - 32.0) < 1.0
        assert abs(np.median(ty) - 32.0) < 1.0

    def test_flat_image_all_zero(self):
        st = derivative_stack(GrayImage(np.full((12, 12), 0.4)), 1.0)
        assert np.all(displacement_field(st) == 0.0)

    def test_bright_disk_votes_removed_by_sign_filter(self):
        img = disk_image(64, 32, 32, 10.0, inside=0.9, outside=0.1)
        st = derivative_stack(img, 1.0)
        kappa = isophote_curvature(st).pixels
        rim = rim_mask(64, 32, 32, 10.0)
        assert (kappa[rim] > 0).mean() >= 0.90
        cmap = accumulate_centermap(st)
        assert cmap.votes.pixels[27:38, 27:38].max() == 0.0


class TestCurvedness:
    def test_constant_zero(self):
        st = derivative_stack(GrayImage(np.full((10, 10), 0.8)), 1.0)
        assert np.all(curvedness(st).pixels == 0.0)

    def test_ramp_near_zero_interior(self):
        ys, xs = np.mgrid[0:16, 0:16].astype(float)
        st = derivative_stack(GrayImage(xs / 20.0), 1.0)
        assert np.abs(curvedness(st).pixels[4:-4, 4:-4]).max() < 1e-9

    def test_disk_edge_is_maximal_and_matches_direct_eval(self):
        img = disk_image(48, 24, 24, 8.0)
        st = derivative_stack(img, 1.0)
        c = curvedness(st).pixels
        direct = np.sqrt(
            st.lxx.pixels**2 + 2 * st.lxy.pixels**2 + st.lyy.pixels**2
        )
        np.testing.assert_allclose(c, direct, atol=1e-12)
        ys, xs = np.unravel_index(c.argmax(), c.shape)
        dist = np.hypot(xs - 24.0, ys - 24.0)
        assert abs(dist - 8.0) < 2.0


class TestAccumulate:
    def test_dark_disk_peak_near_center(self):
        img = disk_image(64, 30.3, 34.6, 9.0)
        st = derivative_stack(img, 1.0)
        cmap = accumulate_centermap(st)
        iy, ix = np.unravel_index(cmap.votes.pixels.argmax(), cmap.votes.pixels.shape)
        assert np.hypot(ix - 30.3, iy - 34.6) <= 2.0

    def test_two_disks_two_maxima(self):
        arr = np.minimum(disk(96, 25, 30, 8.0), disk(96, 68, 60, 10.0))
        st = derivative_stack(GrayImage(arr), 1.0)
        votes = accumulate_centermap(st).votes.pixels
        for cx, cy in ((25, 30), (68, 60)):
            local = votes[cy - 12 : cy + 13, cx - 12 : cx + 13]
            iy, ix = np.unravel_index(local.argmax(), local.shape)
            assert np.hypot(ix - 12, iy - 12) <= 2.0

    def test_votes_nonnegative_and_mass_bounded(self):
        rng = np.random.default_rng(3)
        img = GrayImage(rng.random((32, 32)))
        st = derivative_stack(img, 1.0)
        cmap = accumulate_centermap(st)
        assert cmap.votes.pixels.min() >= 0.0
        assert cmap.votes.pixels.sum() <= curvedness(st).pixels.sum() + 1e-9


class TestMeanShift:
    def _cluster_map(self, cx, cy, size=40, sigma=2.0):
        ys, xs = np.mgrid[0:size, 0:size].astype(float)
        votes = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * sigma**2))
        return CenterMap(votes=GrayImage(votes))

    def test_converges_to_cluster_mode(self):
        cmap = self._cluster_map(18.4, 22.6)
        est = mean_shift_refine(cmap, (23.0, 19.0), window=15)
        assert np.hypot(est.x - 18.4, est.y - 22.6) < 0.5
        assert est.confidence > 0

    def test_impulse_is_fixed_point(self):
        votes = np.zeros((20, 20))
        votes[7, 11] = 1.0
        est = mean_shift_refine(CenterMap(votes=GrayImage(votes)), (11, 7), window=5)
        assert (est.x, est.y) == (11.0, 7.0)

    def test_zero_map_returns_seed(self):
        est = mean_shift_refine(
            CenterMap(votes=GrayImage(np.zeros((16, 16)))), (5.0, 6.0), window=7
        )
        assert (est.x, est.y, est.confidence) == (5.0, 6.0, 0.0)

    def test_small_window_rejected(self):
        with pytest.raises(InvalidInputError):
            mean_shift_refine(
                CenterMap(votes=GrayImage(np.zeros((8, 8)))), (4, 4), window=2
            )


class TestLocateEyeCenter:
    def test_synthetic_eye_within_one_pixel(self):
        rng = np.random.default_rng(21)
        img, cx, cy = eye_crop(rng, size=48, r=8.0)
        est = locate_eye_center(img, (4, 4, 40, 40))
        assert np.hypot(est.x - cx, est.y - cy) <= 1.0

    def test_perfect_disk_within_half_pixel(self):
        img = disk_image(64, 31.6, 32.4, 9.0)
        est = locate_eye_center(img, (8, 8, 48, 48))
        assert np.hypot(est.x - 31.6, est.y - 32.4) <= 0.5

    def test_uniform_roi_returns_center_with_zero_confidence(self):
        img = GrayImage(np.full((40, 40), 0.5))
        est = locate_eye_center(img, (4, 4, 32, 32))
        assert est.confidence == 0.0
        assert (est.x, est.y) == (4 + 31 / 2.0, 4 + 31 / 2.0)

    def test_linear_lighting_invariance(self):
        rng = np.random.default_rng(33)
        img, cx, cy = eye_crop(rng, size=48, r=9.0, noise=0.0)
        base = locate_eye_center(img, (4, 4, 40, 40))
        lifted = GrayImage(0.6 * img.pixels + 0.3)
        other = locate_eye_center(lifted, (4, 4, 40, 40))
        assert np.hypot(base.x - other.x, base.y - other.y) <= 0.5

    def test_rotation_by_90_degrees(self):
        rng = np.random.default_rng(8)
        img, cx, cy = eye_crop(rng, size=48, r=8.0, noise=0.0)
        base = locate_eye_center(img, (4, 4, 40, 40))
        rot = GrayImage(np.rot90(img.pixels))  # (x, y) -> (y, W-1-x)
        est = locate_eye_center(rot, (4, 4, 40, 40))
        assert np.hypot(est.x - base.y, est.y - (48 - 1 - base.x)) <= 1.0

    def test_roi_out_of_bounds_rejected(self):
        img = GrayImage(np.zeros((32, 32)))
        with pytest.raises(InvalidInputError):
            locate_eye_center(img, (20, 20, 16, 16))

    def test_roi_too_small_rejected(self):
        img = GrayImage(np.zeros((32, 32)))
        with pytest.raises(InvalidInputError):
            locate_eye_center(img, (0, 0, 15, 20))
