"""Decode/encode maps and the distortion model."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from mpcalib import (
    Distortion,
    Intrinsics,
    NoConvergence,
    PixelIndex,
    Pose,
    decode,
    decode_arrays,
    distort,
    encode,
    encode_arrays,
    rodrigues,
    undistort,
)
from conftest import REF


class TestDecode:
    def test_reference_camera_unit_indices(self, ref_intrinsics):
        r = decode(PixelIndex(1, 1, 0, 0), ref_intrinsics)
        assert (r.s, r.t) == (2.4e-4, 2.5e-4)
        assert np.allclose((r.x, r.y), (-0.32, -0.33))
        assert r.f == 1.0

    def test_reference_camera_mixed(self, ref_intrinsics):
        r = decode(PixelIndex(2, 3, 100, 50), ref_intrinsics)
        assert np.allclose((r.s, r.t, r.x, r.y), (4.8e-4, 7.5e-4, -0.12, -0.235))

    def test_unit_camera_passthrough(self):
        unit = Intrinsics(1, 1, 1, 1, 0, 0)
        r = decode(PixelIndex(3, -2, 0.5, 0.25), unit)
        assert (r.s, r.t, r.x, r.y) == (3, -2, 0.5, 0.25)

    def test_zero_pixel_lands_on_image_offset(self, ref_intrinsics):
        r = decode(PixelIndex(0, 0, 0, 0), ref_intrinsics)
        assert (r.s, r.t, r.x, r.y) == (0, 0, ref_intrinsics.u0, ref_intrinsics.v0)


class TestEncode:
    def test_round_trip(self, ref_intrinsics):
        rng = np.random.default_rng(7)
        i, j = rng.integers(-6, 7, (2, 200)).astype(float)
        u, v = rng.uniform(-300, 300, (2, 200))
        s, t, x, y = decode_arrays(i, j, u, v, ref_intrinsics)
        i2, j2, u2, v2 = encode_arrays(s, t, x, y, ref_intrinsics)
        for a, b in ((i, i2), (j, j2), (u, u2), (v, v2)):
            assert np.abs(a - b).max() < 1e-12 * max(1.0, np.abs(a).max())

    def test_image_offset_encodes_to_zero(self, ref_intrinsics):
        from mpcalib import Ray

        px = encode(Ray(0, 0, -0.32, -0.33, 1.0), ref_intrinsics)
        assert (px.i, px.j, px.u, px.v) == (0, 0, 0, 0)

    def test_rejects_respaced_ray(self, ref_intrinsics):
        from mpcalib import Ray

        with pytest.raises(ValueError):
            encode(Ray(0, 0, 0, 0, 2.0), ref_intrinsics)

    def test_x_at_offset_gives_zero_column(self, ref_intrinsics):
        _, _, u, _ = encode_arrays(0.0, 0.0, ref_intrinsics.u0, 0.0, ref_intrinsics)
        assert u == 0.0


class TestIntrinsicsValidation:
    def test_rejects_zero_scale(self):
        from mpcalib import InvalidIntrinsics

        with pytest.raises(InvalidIntrinsics):
            Intrinsics(0, 1e-4, 1e-3, 1e-3, 0, 0)

    def test_rejects_nan(self):
        from mpcalib import InvalidIntrinsics

        with pytest.raises(InvalidIntrinsics):
            Intrinsics(np.nan, 1e-4, 1e-3, 1e-3, 0, 0)

    def test_principal_point_px(self, ref_intrinsics):
        pu, pv = ref_intrinsics.principal_point_px
        assert np.allclose((pu, pv), (0.32 / 2.0e-3, 0.33 / 1.9e-3))
        # decoding the principal point recovers a centered image point
        _, _, x, y = decode_arrays(0, 0, pu, pv, ref_intrinsics)
        assert abs(x) < 1e-15 and abs(y) < 1e-15

    def test_array_round_trip(self, ref_intrinsics):
        again = Intrinsics.from_array(ref_intrinsics.as_array())
        assert again == ref_intrinsics


class TestDistortionModel:
    def test_zero_is_identity(self):
        x = np.linspace(-0.5, 0.5, 11)
        y = np.linspace(-0.3, 0.3, 11)
        xu, yu = undistort(x, y, 0.1, 0.2, Distortion())
        assert np.array_equal(xu, x) and np.array_equal(yu, y)

    def test_radial_example(self):
        xu, yu = undistort(0.5, 0.0, 0.0, 0.0, Distortion(k1=0.1))
        assert np.allclose((xu, yu), (0.5125, 0.0), rtol=0, atol=1e-15)

    def test_view_shift_example(self):
        xu, yu = undistort(0.0, 0.0, 0.3, 0.7, Distortion(k3=2.0))
        assert np.allclose((xu, yu), (0.6, 0.0), rtol=0, atol=1e-15)

    def test_radial_part_rotationally_symmetric(self):
        # with no view-shift terms the distorted radius depends only on r
        d = Distortion(k1=0.08, k2=-0.01)
        rng = np.random.default_rng(11)
        r = rng.uniform(0.05, 0.8, 50)
        for ri in r:
            angles = rng.uniform(0, 2 * np.pi, 8)
            xu, yu = undistort(ri * np.cos(angles), ri * np.sin(angles), 0, 0, d)
            radii = np.hypot(xu, yu)
            assert np.ptp(radii) < 1e-12 * radii.max()

    def test_distortion_validation(self):
        with pytest.raises(ValueError):
            Distortion(k1=np.inf)

    def test_is_zero(self):
        assert Distortion().is_zero
        assert not Distortion(k4=1e-9).is_zero

    def test_array_round_trip(self):
        d = Distortion(0.1, -0.02, 0.003, -0.0004)
        assert Distortion.from_array(d.as_array()) == d


class TestDistortInverse:
    def test_known_inverse(self):
        x, y = distort(0.5125, 0.0, 0.0, 0.0, Distortion(k1=0.1))
        assert abs(x - 0.5) < 1e-10 and abs(y) < 1e-10

    def test_round_trip_inside_basin(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            d = Distortion(
                k1=rng.uniform(-0.3, 0.3),
                k2=rng.uniform(-0.05, 0.05),
                k3=rng.uniform(-0.01, 0.01),
                k4=rng.uniform(-0.01, 0.01),
            )
            r = rng.uniform(0, 1.0)
            ang = rng.uniform(0, 2 * np.pi)
            x, y = r * np.cos(ang), r * np.sin(ang)
            s, t = rng.uniform(-0.01, 0.01, 2)
            xu, yu = undistort(x, y, s, t, d)
            xb, yb = distort(xu, yu, s, t, d)
            assert abs(xb - x) < 1e-10 and abs(yb - y) < 1e-10

    def test_severe_distortion_raises(self):
        # just above the fold of x*(1 - x^2); the damped iteration stalls
        with pytest.raises(NoConvergence):
            distort(0.386, 0.0, 0.0, 0.0, Distortion(k1=-1.0))


class TestPose:
    def test_matrix_and_apply(self):
        p = Pose(rotation=[0.0, 0.0, np.pi / 2], translation=[1.0, 2.0, 3.0])
        assert np.allclose(p.matrix(), rodrigues(np.array([0, 0, np.pi / 2])))
        moved = p.apply([[1.0, 0.0, 0.0]])
        assert np.allclose(moved, [[1.0, 3.0, 3.0]])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Pose(rotation=[0.0, 0.0, 0.0], translation=[np.nan, 0.0, 0.0])

    def test_frozen(self, ref_intrinsics):
        with pytest.raises(dataclasses.FrozenInstanceError):
            ref_intrinsics.ki = 1.0
