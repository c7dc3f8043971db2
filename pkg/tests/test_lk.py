import numpy as np
import pytest

from gazekit.errors import (
    InvalidInputError,
    RegistrationLostError,
    UndefinedDisparityError,
)
from gazekit.imgproc import GrayImage
from gazekit.lk import (
    TrackedFeature,
    extract_patch,
    register_1d,
    register_2d,
    track_sequence,
)

from .synth import bilinear_shift, smooth_texture


def bump(n=41, center=20.0, width=3.0):
    xs = np.arange(n, dtype=float)
    return np.exp(-0.5 * ((xs - center) / width) ** 2)


class TestRegister1D:
    def test_identical_curves_zero(self):
        f = bump()
        assert register_1d(f, f) == 0.0

    def test_shifted_bump(self):
        xs = np.arange(41, dtype=float)
        f = np.exp(-0.5 * ((xs - 20.0) / 3.0) ** 2)
        g = np.exp(-0.5 * ((xs + 1.5 - 20.0) / 3.0) ** 2)  # G(x) = F(x + 1.5)
        h = register_1d(f, g)
        assert h == pytest.approx(1.5, abs=0.05)

    def test_constant_curve_undefined(self):
        f = np.full(20, 0.3)
        with pytest.raises(UndefinedDisparityError):
            register_1d(f, f + 0.0)

    def test_too_short_rejected(self):
        with pytest.raises(InvalidInputError):
            register_1d([1.0, 2.0], [1.0, 2.0])

    def test_symmetry(self):
        xs = np.arange(51, dtype=float)
        f = np.exp(-0.5 * ((xs - 25.0) / 4.0) ** 2)
        g = np.exp(-0.5 * ((xs + 0.8 - 25.0) / 4.0) ** 2)
        fwd = register_1d(f, g)
        back = register_1d(g, f)
        assert fwd == pytest.approx(-back, abs=0.1)


class TestRegister2D:
    def test_same_frame_zero_disparity(self):
        rng = np.random.default_rng(0)
        frame = GrayImage(smooth_texture(rng, 40, 40))
        patch = extract_patch(frame, 20.0, 19.0, 15)
        d = register_2d(patch, frame, (20.0, 19.0))
        assert d.h == (0.0, 0.0)
        assert d.residual == pytest.approx(0.0, abs=1e-12)

    def test_known_translation_recovered(self):
        rng = np.random.default_rng(1)
        tex = smooth_texture(rng, 50, 50, sigma=1.5)
        moved = GrayImage(bilinear_shift(tex, 2.3, -1.1))
        patch = extract_patch(GrayImage(tex), 24.0, 25.0, 15)
        d = register_2d(patch, moved, (24.0, 25.0))
        assert np.hypot(d.h[0] - 2.3, d.h[1] + 1.1) < 0.1

    def test_constant_patch_lost(self):
        frame = GrayImage(np.full((40, 40), 0.5))
        patch = extract_patch(frame, 20.0, 20.0, 15)
        with pytest.raises(RegistrationLostError):
            register_2d(patch, frame, (20.0, 20.0))

    def test_window_leaving_frame_lost(self):
        rng = np.random.default_rng(2)
        frame = GrayImage(smooth_texture(rng, 30, 30))
        patch = extract_patch(frame, 15.0, 15.0, 15)
        with pytest.raises(RegistrationLostError):
            register_2d(patch, frame, (3.0, 15.0))

    def test_residual_non_increasing(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            tex = smooth_texture(rng, 48, 48, sigma=1.5)
            dx, dy = rng.uniform(-2, 2, 2)
            moved = GrayImage(bilinear_shift(tex, dx, dy))
            patch = extract_patch(GrayImage(tex), 23.0, 24.0, 15)
            d = register_2d(patch, moved, (23.0, 24.0))
            diffs = np.diff(d.residuals)
            assert np.all(diffs <= 1e-12)

    def test_subpixel_shift_consistency(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            tex = smooth_texture(rng, 48, 48, sigma=1.5)
            dx, dy = rng.uniform(-2, 2, 2)
            moved = GrayImage(bilinear_shift(tex, dx, dy))
            patch = extract_patch(GrayImage(tex), 23.0, 24.0, 15)
            d = register_2d(patch, moved, (23.0, 24.0))
            assert np.hypot(d.h[0] - dx, d.h[1] - dy) < 0.1

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        tex = smooth_texture(rng, 48, 48, sigma=1.5)
        moved = bilinear_shift(tex, 1.2, 0.7)
        p_fwd = extract_patch(GrayImage(tex), 23.0, 23.0, 15)
        p_back = extract_patch(GrayImage(moved), 23.0, 23.0, 15)
        fwd = register_2d(p_fwd, GrayImage(moved), (23.0, 23.0))
        back = register_2d(p_back, GrayImage(tex), (23.0, 23.0))
        assert np.hypot(fwd.h[0] + back.h[0], fwd.h[1] + back.h[1]) < 0.1

    def test_reduces_to_1d_on_axis_constant_image(self):
        # Constant along y up to a tiny transverse ramp that keeps the
        # normal matrix conditioned; the x-disparity must match the 1D
        # registration of the profile and the y-disparity stay near zero.
        rng = np.random.default_rng(6)
        n = 48
        profile = smooth_texture(rng, 1, n, sigma=1.5)[0]
        ys = np.arange(n, dtype=float)[:, None]
        img = np.tile(profile, (n, 1)) + 5e-3 * ys
        shift = 1.3
        moved = bilinear_shift(img, shift, 0.0)
        patch = extract_patch(GrayImage(img), 23.0, 23.0, 15)
        d = register_2d(patch, GrayImage(moved), (23.0, 23.0))

        # Same problem posed in 1D: the moved profile plays the role of the
        # frame, the original profile the role of the reference.
        xs = np.arange(n, dtype=float)
        profile_moved = np.interp(np.clip(xs - shift, 0, n - 1), xs, profile)
        h1 = register_1d(profile_moved, profile)
        assert d.h[0] == pytest.approx(shift, abs=0.1)
        assert h1 == pytest.approx(shift, abs=0.1)
        assert d.h[0] == pytest.approx(h1, abs=0.1)
        # The transverse axis carries almost no signal by construction, so
        # its component is only bounded, not pinned.
        assert abs(d.h[1]) < 0.5


class TestTrackSequence:
    def test_static_sequence_constant_position(self):
        rng = np.random.default_rng(7)
        frame = GrayImage(smooth_texture(rng, 40, 40))
        feat = TrackedFeature.from_frame(frame, 20.0, 21.0, 15)
        pts = track_sequence(feat, [frame] * 10)
        assert len(pts) == 10
        for p in pts:
            assert not p.lost
            assert np.hypot(p.x - 20.0, p.y - 21.0) < 1e-6

    def test_drift_one_pixel_per_frame(self):
        rng = np.random.default_rng(8)
        tex = smooth_texture(rng, 60, 60, sigma=1.8)
        frames = [GrayImage(bilinear_shift(tex, i * 1.0, 0.0)) for i in range(10)]
        feat = TrackedFeature.from_frame(frames[0], 24.0, 30.0, 15)
        pts = track_sequence(feat, frames)
        assert not pts[-1].lost
        assert np.hypot(pts[-1].x - 33.0, pts[-1].y - 30.0) < 0.5

    def test_feature_exiting_frame_goes_lost(self):
        rng = np.random.default_rng(9)
        tex = smooth_texture(rng, 50, 50, sigma=1.8)
        # 4 px/frame drift pushes the window out about halfway through.
        frames = [GrayImage(bilinear_shift(tex, i * 4.0, 0.0)) for i in range(10)]
        feat = TrackedFeature.from_frame(frames[0], 38.0, 25.0, 15)
        pts = track_sequence(feat, frames)
        statuses = [p.lost for p in pts]
        assert statuses[0] is False
        assert statuses[-1] is True
        first_lost = statuses.index(True)
        assert all(statuses[first_lost:])

    def test_empty_sequence_rejected(self):
        rng = np.random.default_rng(10)
        frame = GrayImage(smooth_texture(rng, 40, 40))
        feat = TrackedFeature.from_frame(frame, 20.0, 20.0, 15)
        with pytest.raises(InvalidInputError):
            track_sequence(feat, [])


class TestTrackedFeature:
    def test_even_patch_rejected(self):
        with pytest.raises(InvalidInputError):
            TrackedFeature(5.0, 5.0, GrayImage(np.zeros((6, 6))))

    def test_from_frame_near_border_rejected(self):
        rng = np.random.default_rng(11)
        frame = GrayImage(smooth_texture(rng, 30, 30))
        with pytest.raises(RegistrationLostError):
            TrackedFeature.from_frame(frame, 2.0, 15.0, 15)
