import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kinepipe.errors import DimensionError
from kinepipe.kinematics import CoordinateTrajectory
from kinepipe.metrics import (
    UndefinedCorrelationError,
    bland_altman,
    consistency_key_values,
    consistency_report,
    format_consistency,
    mad_degrees,
    mpjpe_mm,
    pearson_per_dof,
    pearson_r,
    smoothness,
    stage_convergence,
)

from oracles import bland_altman_loop, mad_loop, mpjpe_loop, pearson_loop, smoothness_loop

KINDS = ("translational", "revolute", "revolute", "revolute")
REV = np.array([k.startswith("revolute") for k in KINDS])


def traj(values, kinds=KINDS):
    return CoordinateTrajectory(np.asarray(values, dtype=float), kinds)


def rand_traj(rng, T=30, scale=1.0):
    return traj(rng.normal(size=(T, len(KINDS))) * scale)


finite = st.floats(-10, 10, allow_nan=False)
traj_values = arrays(np.float64, (12, len(KINDS)), elements=finite)


class TestMad:
    def test_identical(self, rng):
        A = rand_traj(rng)
        assert mad_degrees(A, A) == 0.0

    def test_constant_offset(self, rng):
        A = rand_traj(rng)
        B = traj(A.values + np.where(REV, math.radians(0.35), 5.0))
        assert mad_degrees(A, B) == pytest.approx(0.35, abs=1e-12)

    def test_wraps(self):
        A = traj(np.zeros((1, 4)))
        B = traj([[0.0, math.radians(359.0), math.radians(359.0), math.radians(359.0)]])
        assert mad_degrees(A, B) == pytest.approx(1.0, abs=1e-9)

    def test_oracle(self, rng):
        for _ in range(5):
            A, B = rand_traj(rng, scale=4), rand_traj(rng, scale=4)
            assert abs(mad_degrees(A, B) - mad_loop(A.values, B.values, REV)) <= 1e-9

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            mad_degrees(rand_traj(rng, 5), rand_traj(rng, 6))

    @settings(max_examples=50, deadline=None)
    @given(traj_values, traj_values, traj_values)
    def test_symmetric_and_triangle(self, a, b, c):
        A, B, C = traj(a), traj(b), traj(c)
        assert mad_degrees(A, B) == pytest.approx(mad_degrees(B, A), abs=1e-9)
        assert mad_degrees(A, C) <= mad_degrees(A, B) + mad_degrees(B, C) + 1e-9


class TestPearson:
    def test_self(self, rng):
        A = rand_traj(rng)
        assert pearson_r(A, A) == pytest.approx(1.0, abs=1e-12)

    def test_negated(self, rng):
        v = rng.normal(size=(40, 4))
        v -= v.mean(axis=0)
        assert pearson_r(traj(v), traj(-v)) == pytest.approx(-1.0, abs=1e-12)

    def test_oracle(self, rng):
        A = rand_traj(rng, T=200)
        B = traj(A.values + rng.normal(scale=0.05, size=A.values.shape))
        r = pearson_r(A, B)
        assert r > 0.99
        assert abs(r - pearson_loop(A.values, B.values)) <= 1e-12

    def test_zero_variance_excluded(self, rng):
        v = rng.normal(size=(20, 4))
        v[:, 2] = 1.0
        r = pearson_per_dof(traj(v), traj(v))
        assert np.isnan(r[2]) and np.all(r[[0, 1, 3]] == pytest.approx(1.0))
        assert pearson_r(traj(v), traj(v)) == pytest.approx(1.0)

    def test_all_constant(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson_r(traj(np.ones((5, 4))), traj(np.ones((5, 4))))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (12, 4), elements=st.floats(-5, 5)),
           arrays(np.float64, (12, 4), elements=st.floats(-5, 5)),
           st.floats(0.1, 10), st.floats(-5, 5))
    def test_affine_invariance(self, a, b, scale, shift):
        a = a + np.arange(12)[:, None]  # keep every column non-constant
        b = b - np.arange(12)[:, None] * 0.5
        r1 = pearson_r(traj(a), traj(b))
        r2 = pearson_r(traj(a * scale + shift), traj(b * scale + shift))
        assert r2 == pytest.approx(r1, abs=1e-9)


class TestMpjpe:
    def test_identical(self, rng):
        P = rng.normal(size=(4, 5, 3))
        assert mpjpe_mm(P, P) == 0.0

    def test_shift(self, rng):
        P = rng.normal(size=(4, 5, 3))
        assert mpjpe_mm(P, P + [0.010, 0, 0]) == pytest.approx(10.0, abs=1e-9)

    def test_oracle(self, rng):
        Pa, Pb = rng.normal(size=(6, 7, 3)), rng.normal(size=(6, 7, 3))
        assert abs(mpjpe_mm(Pa, Pb) - mpjpe_loop(Pa, Pb)) <= 1e-9

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            mpjpe_mm(np.zeros((2, 3, 3)), np.zeros((2, 4, 3)))

    @settings(max_examples=50, deadline=None)
    @given(*(arrays(np.float64, (3, 4, 3), elements=finite) for _ in range(3)))
    def test_symmetric_and_triangle(self, a, b, c):
        assert mpjpe_mm(a, b) == pytest.approx(mpjpe_mm(b, a), abs=1e-9)
        assert mpjpe_mm(a, c) <= mpjpe_mm(a, b) + mpjpe_mm(b, c) + 1e-9


class TestBlandAltman:
    def test_constant_offset(self, rng):
        A = rand_traj(rng)
        ba = bland_altman(A, traj(A.values + math.radians(0.5)))
        assert ba.mean_diff == pytest.approx(0.5, abs=1e-9)
        assert ba.sd_diff == pytest.approx(0.0, abs=1e-9)
        assert ba.loa_low == pytest.approx(0.5, abs=1e-9) and ba.loa_high == pytest.approx(0.5, abs=1e-9)

    def test_identical(self, rng):
        A = rand_traj(rng)
        ba = bland_altman(A, A)
        assert (ba.mean_diff, ba.sd_diff, ba.loa_low, ba.loa_high) == (0.0, 0.0, 0.0, 0.0)

    def test_oracle(self, rng):
        A = rand_traj(rng, T=50)
        B = traj(A.values + rng.normal(scale=0.02, size=A.values.shape))
        ba = bland_altman(A, B)
        ref = bland_altman_loop(A.values, B.values, REV)
        for got, want in zip((ba.mean_diff, ba.sd_diff, ba.loa_low, ba.loa_high), ref):
            assert abs(got - want) <= 1e-12
        assert ba.n == 50 * 3

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (8, 4), elements=st.floats(-1, 1)),
           arrays(np.float64, (8, 4), elements=st.floats(-1, 1)))
    def test_mean_and_bracket(self, a, b):
        ba = bland_altman(traj(a), traj(b))
        # small angles: no wrapping, so the mean is the plain B - A mean
        assert ba.mean_diff == pytest.approx(np.degrees(np.mean(b[:, REV] - a[:, REV])), abs=1e-9)
        assert ba.loa_low <= ba.mean_diff <= ba.loa_high


class TestSmoothness:
    def test_linear(self):
        t = np.arange(10.0)[:, None]
        rep = smoothness(traj(np.hstack([t * 0.3, t * -0.2, t * 0.2, t * 0.2])))
        assert rep.mean_abs_qdot_rad_per_frame == pytest.approx(0.2, abs=1e-12)
        assert rep.mean_abs_qdddot_rad_per_frame3 == pytest.approx(0.0, abs=1e-12)

    def test_constant(self):
        rep = smoothness(traj(np.ones((6, 4))))
        assert rep.mean_abs_qdot_rad_per_frame == 0 and rep.mean_abs_qdddot_rad_per_frame3 == 0

    def test_oracle(self, rng):
        Q = rand_traj(rng, T=25)
        rep = smoothness(Q)
        v, j = smoothness_loop(Q.values, REV)
        assert abs(rep.mean_abs_qdot_rad_per_frame - v) <= 1e-12
        assert abs(rep.mean_abs_qdddot_rad_per_frame3 - j) <= 1e-12

    def test_percent_change(self, rng):
        Q = rand_traj(rng, T=25)
        rep = smoothness(traj(Q.values * 0.5), reference=Q)
        assert rep.qdot_change_percent == pytest.approx(-50.0)
        assert rep.qdddot_change_percent == pytest.approx(-50.0)

    def test_too_short(self):
        with pytest.raises(DimensionError):
            smoothness(traj(np.zeros((3, 4))))


class _Fit:
    def __init__(self, Q, joints, sites):
        self.trajectory, self.joint_positions, self.site_positions = Q, joints, sites


class TestStageConvergence:
    def test_identical_everything(self, rng):
        det = rng.normal(size=(5, 6, 3))
        fit = _Fit(rand_traj(rng, 5), rng.normal(size=(5, 2, 3)), rng.normal(size=(5, 6, 3)))
        c = stage_convergence(det, det, fit, fit)
        assert (c.detection_mpjpe_mm, c.fitted_sites_mpjpe_mm, c.fitted_joints_mpjpe_mm, c.mad_deg) == (0, 0, 0, 0)

    def test_fits_agree_detections_differ(self, rng):
        det = rng.normal(size=(5, 6, 3))
        fit = _Fit(rand_traj(rng, 5), rng.normal(size=(5, 2, 3)), rng.normal(size=(5, 6, 3)))
        c = stage_convergence(det, det + 0.1, fit, fit)
        assert c.detection_mpjpe_mm > 0 and c.fitted_sites_mpjpe_mm == 0
        assert c.absorption_factor == float("inf")


class TestReport:
    def _pair(self, rng, name):
        A = rand_traj(rng, T=20)
        B = traj(A.values + rng.normal(scale=0.01, size=A.values.shape))
        pos = rng.normal(size=(20, 3, 3)), rng.normal(size=(20, 5, 3))
        return name, A, B, pos, (pos[0] + [0.001, 0, 0], pos[1])

    def test_report_fields(self, rng):
        rep = consistency_report([self._pair(rng, "s1"), self._pair(rng, "s2")])
        assert len(rep.per_sequence) == 2 and len(rep.per_sequence_bland_altman) == 2
        assert rep.mad_deg >= 0 and -1 <= rep.pearson_r <= 1
        assert rep.mpjpe_joints_mm == pytest.approx(1.0)
        assert rep.mpjpe_sites_mm == 0.0
        assert rep.bland_altman.n == 2 * 20 * 3
        assert rep.bland_altman.loa_low <= rep.bland_altman.mean_diff <= rep.bland_altman.loa_high

    def test_format_deterministic(self, rng):
        rep = consistency_report([self._pair(rng, "s1")])
        text = format_consistency(rep)
        assert text == format_consistency(rep)
        assert "s1" in text and "Bland-Altman" in text
        kv = consistency_key_values(rep)
        assert {"mad_deg", "pearson_r", "mpjpe_joints_mm", "seq.s1.mad_deg"} <= kv.keys()

    def test_empty(self):
        with pytest.raises(DimensionError):
            consistency_report([])
