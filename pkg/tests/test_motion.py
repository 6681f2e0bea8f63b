import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emotive.errors import EmptyTimestamps, EmptyValidMask, NonPositiveDepth, ShapeMismatch
from emotive.events import CameraIntrinsics, GroundTruth, RigidSceneConfig
from emotive.motion import (FlowField, MiDField, metrics, mid_label_from_depth, motion_in_depth_multiview,
                            motion_in_depth_single, normalized_scene_flow, optical_flow, transport_mid)
from emotive.nurbs import Trajectory, clamped_knots, rational_linear_trajectory, uniform_knots

UNIT = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)


def approaching_scene(points=((1.0, 0.0, 10.0),), velocity=(0.0, 0.0, -2.0), intr=UNIT):
    return RigidSceneConfig(points=points, velocity=velocity, duration=1.0, intrinsics=intr,
                            contrast_threshold=0.5, sensor=(64, 64))


def exact_trajectory(gt, knots=None):
    """Rational-linear trajectory reproducing each point's true image path, on a 1 x N grid."""
    knots = knots or uniform_knots(5, 3)
    D = gt.flow(1.0)
    r = gt.mid(1.0)
    assert np.allclose(r, r[0])
    return rational_linear_trajectory(D[None], float(r[0]), knots)


# --- optical flow ------------------------------------------------------------


def test_flow_at_zero_is_zero():
    traj = exact_trajectory(GroundTruth(approaching_scene()))
    f = optical_flow(traj, 0.0)
    assert not f.u.any() and not f.v.any()


def test_flow_follows_exact_path():
    gt = GroundTruth(approaching_scene(((1.0, -2.0, 10.0), (-3.0, 1.0, 10.0)), (0.4, 0.1, -2.0)))
    traj = exact_trajectory(gt)
    for tau in (0.2, 0.5, 1.0):
        np.testing.assert_allclose(optical_flow(traj, tau).stack()[0], gt.flow(tau), rtol=0, atol=1e-12)


def test_flow_upsampling_rescales_to_sensor_pixels():
    knots = uniform_knots(4, 3)
    ctrl = np.zeros((4, 2, 2, 2))
    ctrl[1:] = (1.0, 0.5)
    traj = Trajectory(ctrl, np.ones(4), knots)
    f = optical_flow(traj, 1.0, sensor=(8, 6))
    assert f.shape == (8, 6)
    np.testing.assert_allclose(f.u, 3.0, atol=1e-12)
    np.testing.assert_allclose(f.v, 2.0, atol=1e-12)


def test_flow_rejects_tau_outside_unit_interval():
    traj = Trajectory.zeros((1, 1), uniform_knots(4, 3))
    with pytest.raises(ValueError):
        optical_flow(traj, 1.5)


# --- motion in depth ---------------------------------------------------------


def test_single_view_exact_scene_gives_point_eight():
    traj = exact_trajectory(GroundTruth(approaching_scene()))
    mid = motion_in_depth_single(traj, 1.0)
    assert abs(mid.m[0, 0] - 0.8) <= 1e-9
    assert mid.valid.all()


def test_single_view_falls_back_to_y_axis():
    # point on the optical axis column: x displacement is zero, y carries the signal
    traj = exact_trajectory(GroundTruth(approaching_scene(((0.0, 1.0, 10.0),))))
    mid = motion_in_depth_single(traj, 1.0)
    assert abs(mid.m[0, 0] - 0.8) <= 1e-9 and mid.valid[0, 0]


def test_static_pixel_is_invalid_with_unit_ratio():
    traj = Trajectory.zeros((2, 3), uniform_knots(5, 3))
    mid = motion_in_depth_single(traj, 1.0)
    np.testing.assert_array_equal(mid.m, 1.0)
    assert not mid.valid.any()


def test_single_view_intermediate_time():
    gt = GroundTruth(approaching_scene(((2.0, -1.0, 10.0),)))
    traj = exact_trajectory(gt)
    for t1 in (0.25, 0.6):
        assert motion_in_depth_single(traj, t1).m[0, 0] == pytest.approx(gt.mid(t1)[0], abs=1e-9)


def test_multiview_four_views():
    traj = exact_trajectory(GroundTruth(approaching_scene()))
    mid = motion_in_depth_multiview(traj, [0.25, 0.5, 0.75, 1.0])
    assert abs(mid.m[0, 0] - 0.8) <= 1e-3


def test_multiview_single_timestamp_equals_single_view():
    gt = GroundTruth(approaching_scene(((1.0, 0.5, 10.0), (-2.0, 0.0, 10.0))))
    traj = exact_trajectory(gt)
    a = motion_in_depth_single(traj, 0.7)
    b = motion_in_depth_multiview(traj, [0.7])
    assert np.array_equal(a.m, b.m) and np.array_equal(a.valid, b.valid)


def test_multiview_skips_invalid_views_per_pixel():
    knots = uniform_knots(4, 3)
    traj = Trajectory.zeros((1, 2), knots)
    mid = motion_in_depth_multiview(traj, [0.5, 1.0])
    assert not mid.valid.any()
    np.testing.assert_array_equal(mid.m, 1.0)


def test_multiview_input_validation():
    traj = Trajectory.zeros((1, 1), uniform_knots(4, 3))
    with pytest.raises(EmptyTimestamps):
        motion_in_depth_multiview(traj, [])
    with pytest.raises(ValueError):
        motion_in_depth_multiview(traj, [0.5, 0.5])


def test_transport_same_time_is_identity():
    m = np.array([0.7, 1.3])
    assert transport_mid(m, 0.4, 0.4) is m


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_transport_composes(m, t1, t2, t3):
    two_step = transport_mid(transport_mid(m, t1, t2), t2, t3)
    assert abs(two_step - transport_mid(m, t1, t3)) <= 1e-12 * max(1.0, abs(m) * t3 / min(t1, t2))


# --- scene flow --------------------------------------------------------------


def test_scene_flow_matches_direct_projection():
    intr = CameraIntrinsics(100.0, 90.0, 32.0, 24.0)
    d = {"sensor": [48, 64], "intrinsics": {"fx": 100.0, "fy": 90.0, "cx": 32.0, "cy": 24.0},
         "plane": {"depth": 10.0, "rows": 3, "cols": 4, "margin": 10}, "velocity": [0.5, 0.2, -2.0],
         "duration": 1.0, "contrast_threshold": 0.5}
    gt = GroundTruth(RigidSceneConfig.from_dict(d))
    flow, mid, valid = gt.rasterize(1.0)
    s = normalized_scene_flow(FlowField.from_array(flow, valid), MiDField(mid, valid), intr)
    rows, cols, keep = gt.pixel_index()
    direct = (gt.scene_flow(1.0) @ intr.matrix.T) / gt.depth(0.0)[:, None]
    got = s.s[rows[keep], cols[keep]]
    np.testing.assert_allclose(got, direct[keep], rtol=0, atol=1e-6)
    assert s.valid.sum() == keep.sum()


def test_scene_flow_metric_round_trip():
    intr = CameraIntrinsics(50.0, 50.0, 3.0, 2.0)
    rng = np.random.default_rng(0)
    flow = FlowField(rng.normal(size=(4, 6)), rng.normal(size=(4, 6)), True)
    mid = MiDField(rng.uniform(0.5, 1.5, size=(4, 6)), True)
    depth = rng.uniform(2.0, 9.0, size=(4, 6))
    sf = normalized_scene_flow(flow, mid).to_metric(intr, depth)
    ys, xs = np.mgrid[0:4, 0:6]
    z1 = mid.m * depth
    x1 = (xs + flow.u - intr.cx) * z1 / intr.fx
    x0 = (xs - intr.cx) * depth / intr.fx
    np.testing.assert_allclose(sf[..., 0], x1 - x0, atol=1e-10)
    np.testing.assert_allclose(sf[..., 2], z1 - depth, atol=1e-10)


def test_scene_flow_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        normalized_scene_flow(FlowField(np.zeros((2, 2)), np.zeros((2, 2)), True), MiDField(np.ones((3, 2)), True))


# --- depth-warp labels -------------------------------------------------------


def test_label_constant_depth_zero_flow():
    mid = mid_label_from_depth(np.full((5, 5), 10.0), np.full((5, 5), 8.0), FlowField(np.zeros((5, 5)), np.zeros((5, 5)), True))
    np.testing.assert_allclose(mid.m, 0.8, atol=1e-15)
    assert mid.valid.all()


def test_label_samples_target_bilinearly():
    z1 = np.tile(np.arange(1.0, 9.0), (4, 1)) + 10.0
    flow = FlowField(np.full((4, 8), 0.5), np.zeros((4, 8)), True)
    mid = mid_label_from_depth(np.full((4, 8), 10.0), z1, flow, rel_threshold=1.0)
    assert mid.m[1, 2] == pytest.approx((13.0 + 14.0) / 2 / 10.0, abs=1e-12)
    assert not mid.valid[:, -1].any()  # pushed past the right edge


def test_label_masks_depth_discontinuities():
    z = np.full((6, 6), 10.0)
    z[:, 3:] = 20.0
    mid = mid_label_from_depth(z, z, FlowField(np.zeros((6, 6)), np.zeros((6, 6)), True), boundary_margin=1)
    assert mid.valid[:, 0].all()
    assert not mid.valid[:, 1:5].any()


def test_label_rejects_nonpositive_depth():
    with pytest.raises(NonPositiveDepth):
        mid_label_from_depth(np.zeros((2, 2)), np.ones((2, 2)), FlowField(np.zeros((2, 2)), np.zeros((2, 2)), True))


# --- metrics -----------------------------------------------------------------


def test_metrics_identical_fields():
    rng = np.random.default_rng(1)
    f = FlowField(rng.normal(size=(4, 4)), rng.normal(size=(4, 4)), True)
    m = MiDField(rng.uniform(0.5, 1.5, (4, 4)), True)
    r = metrics(f, f, m, m)
    assert (r.epe, r.f1, r.logmid, r.n_valid) == (0.0, 0.0, 0.0, 16)


def test_metrics_hand_values():
    gt = FlowField(np.zeros((2, 2)), np.zeros((2, 2)), True)
    pred = FlowField(np.full((2, 2), 3.0), np.full((2, 2), 4.0), True)
    gm = MiDField(np.ones((2, 2)), True)
    pm = MiDField(np.full((2, 2), math.exp(0.01)), True)
    r = metrics(pred, gt, pm, gm)
    assert r.epe == 5.0
    assert r.f1 == 100.0
    assert r.logmid == pytest.approx(100.0, rel=1e-12)


def test_metrics_outlier_needs_both_thresholds():
    # error 5 px but |gt| = 200 px, so 5 < 5% of 200 and the pixel is an inlier
    gt = FlowField(np.full((1, 2), 200.0), np.zeros((1, 2)), True)
    pred = FlowField(np.array([[205.0, 200.5]]), np.zeros((1, 2)), True)
    r = metrics(pred, gt)
    assert r.f1 == 0.0 and r.epe == pytest.approx(2.75)
    assert math.isnan(r.logmid)


def test_metrics_respect_valid_mask():
    gt = FlowField(np.zeros((1, 2)), np.zeros((1, 2)), [[True, False]])
    pred = FlowField(np.array([[1.0, 99.0]]), np.zeros((1, 2)), True)
    r = metrics(pred, gt)
    assert r.epe == 1.0 and r.n_valid == 1


def test_metrics_empty_mask():
    f = FlowField(np.zeros((2, 2)), np.zeros((2, 2)), False)
    with pytest.raises(EmptyValidMask):
        metrics(f, f)


def test_metrics_text_and_json():
    f = FlowField(np.zeros((1, 1)), np.zeros((1, 1)), True)
    r = metrics(f, f)
    assert r.to_text().splitlines()[0] == "epe=0.0"
    assert '"n_valid": 1' in r.to_json()


def test_nonuniform_knots_still_exact():
    gt = GroundTruth(approaching_scene(((1.5, -0.5, 10.0),)))
    traj = exact_trajectory(gt, clamped_knots(6, 3, [0.1, 0.7]))
    assert motion_in_depth_single(traj, 1.0).m[0, 0] == pytest.approx(0.8, abs=1e-9)


def test_transport_broadcasts_over_times():
    m = np.array([0.5, 0.5, 2.0])
    got = transport_mid(m, np.array([0.5, 0.2, 1.0]), np.array([1.0, 0.2, 0.5]))
    np.testing.assert_array_equal(got, [0.0, 0.5, 1.5])
