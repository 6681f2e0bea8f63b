"""Optical flow, motion in depth, normalized scene flow, depth-warp labels and metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyTimestamps, EmptyValidMask, NonPositiveDepth, ShapeMismatch
from .events import CameraIntrinsics
from .nurbs import Trajectory, eval_trajectory, eval_velocity

MID_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class FlowField:
    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        valid = np.broadcast_to(np.asarray(self.valid, dtype=bool), u.shape).copy()
        if u.shape != v.shape or u.ndim != 2:
            raise ShapeMismatch(f"u {u.shape} and v {v.shape} must be equal 2-D arrays")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_array(cls, uv, valid=True) -> "FlowField":
        uv = np.asarray(uv, dtype=np.float64)
        return cls(uv[..., 0], uv[..., 1], valid)

    @property
    def shape(self):
        return self.u.shape

    def stack(self) -> np.ndarray:
        return np.stack([self.u, self.v], axis=-1)


@dataclass(frozen=True, eq=False)
class MiDField:
    m: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "valid", np.broadcast_to(np.asarray(self.valid, dtype=bool), m.shape).copy())

    @property
    def shape(self):
        return self.m.shape


@dataclass(frozen=True, eq=False)
class NormalizedSceneFlow:
    """Depth-normalized scene flow ``K S_f / Z`` per pixel, shape ``(H, W, 3)``."""

    s: np.ndarray
    valid: np.ndarray

    def to_metric(self, intrinsics: CameraIntrinsics, depth) -> np.ndarray:
        """Recover 3D scene flow ``S_f = Z K^-1 s`` given the initial depth map."""
        kinv = np.linalg.inv(intrinsics.matrix)
        return np.asarray(depth, dtype=np.float64)[..., None] * (self.s @ kinv.T)


def upsample_grid(field, shape):
    """Bilinear resize of ``(h, w)`` onto ``shape`` with pixel-centre alignment and edge clamping."""
    h, w = field.shape
    H, W = shape
    ry = np.clip((np.arange(H) + 0.5) * h / H - 0.5, 0, h - 1)
    rx = np.clip((np.arange(W) + 0.5) * w / W - 0.5, 0, w - 1)
    gy, gx = np.meshgrid(ry, rx, indexing="ij")
    return ndimage.map_coordinates(field, [gy, gx], order=1, mode="nearest")


def optical_flow(traj: Trajectory, tau: float, sensor=None) -> FlowField:
    """Flow ``T(tau)``; upsampled (and rescaled to sensor pixels) when ``sensor`` exceeds the grid."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    f = eval_trajectory(traj, float(tau))
    u, v = f[..., 0], f[..., 1]
    if sensor is not None and tuple(sensor) != traj.grid_shape:
        sy, sx = sensor[0] / traj.grid_shape[0], sensor[1] / traj.grid_shape[1]
        u = upsample_grid(u, sensor) * sx
        v = upsample_grid(v, sensor) * sy
    return FlowField(u, v, np.ones(u.shape, dtype=bool))


def _mid_from_parts(disp, vel0, vel1, t1, eps):
    num = vel0 * t1 + disp
    den = vel1 * t1 + disp
    use_x = np.abs(den[..., 0]) >= eps
    use_y = ~use_x & (np.abs(den[..., 1]) >= eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        mx = num[..., 0] / den[..., 0]
        my = num[..., 1] / den[..., 1]
    m = np.where(use_x, mx, np.where(use_y, my, 1.0))
    valid = (use_x | use_y) & np.isfinite(m) & (m > 0)
    return np.where(valid, m, 1.0), valid


def motion_in_depth_single(traj: Trajectory, t1: float, eps: float = MID_EPS) -> MiDField:
    """Depth ratio ``Z(t1) / Z(0)`` from trajectory value and velocities.

    ``M = (T'(0) t1 + T(t1)) / (T'(t1) t1 + T(t1))`` on the x component, or
    on y where the x denominator is below ``eps``; pixels degenerate on both
    axes report ``M = 1`` and are marked invalid.
    """
    if not 0.0 < t1 <= 1.0:
        raise ValueError("t1 must lie in (0, 1]")
    disp = eval_trajectory(traj, float(t1))
    vel = eval_velocity(traj, np.array([0.0, float(t1)]))
    m, valid = _mid_from_parts(disp, vel[0], vel[1], float(t1), eps)
    return MiDField(m, valid)


def transport_mid(m, t_from, t_to):
    """Carry a depth ratio observed at ``t_from`` to ``t_to`` under constant depth velocity.

    Arguments broadcast; where the two times are equal ``m`` passes through
    unchanged (no rounding).
    """
    if np.ndim(t_from) == 0 and np.ndim(t_to) == 0 and t_from == t_to:
        return m
    t_from = np.asarray(t_from, dtype=np.float64)
    t_to = np.asarray(t_to, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    return np.where(t_from == t_to, m, (t_to / t_from) * (m - 1.0) + 1.0)


def motion_in_depth_multiview(traj: Trajectory, timestamps, eps: float = MID_EPS) -> MiDField:
    """Average single-view estimates at each timestamp after transporting them to the last one.

    Invalid single-view pixels are left out of the mean; a pixel invalid in
    every view reports ``M = 1`` and stays invalid.
    """
    ts = np.asarray(timestamps, dtype=np.float64).reshape(-1)
    if ts.size == 0:
        raise EmptyTimestamps("need at least one timestamp")
    if np.any(np.diff(ts) <= 0) or ts[0] <= 0 or ts[-1] > 1:
        raise ValueError("timestamps must be strictly increasing within (0, 1]")
    tk = float(ts[-1])
    disp = eval_trajectory(traj, ts)
    vel = eval_velocity(traj, np.concatenate([[0.0], ts]))
    acc = np.zeros(traj.grid_shape)
    cnt = np.zeros(traj.grid_shape)
    for i, ti in enumerate(ts):
        m, valid = _mid_from_parts(disp[i], vel[0], vel[i + 1], float(ti), eps)
        acc += np.where(valid, transport_mid(m, float(ti), tk), 0.0)
        cnt += valid
    ok = cnt > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.where(ok, acc / np.where(ok, cnt, 1.0), 1.0)
    ok &= m > 0
    return MiDField(np.where(ok, m, 1.0), ok)


def normalized_scene_flow(flow: FlowField, mid: MiDField, intrinsics: CameraIntrinsics | None = None) -> NormalizedSceneFlow:
    """``(M - 1) u + M (O_x, O_y, 0)`` with ``u = (x_pix, y_pix, 1)``.

    ``intrinsics`` is accepted for interface symmetry; the normalized form
    itself needs only pixel coordinates (see :meth:`NormalizedSceneFlow.to_metric`).
    """
    if flow.shape != mid.shape:
        raise ShapeMismatch(f"flow {flow.shape} vs mid {mid.shape}")
    h, w = flow.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    m = mid.m
    s = np.stack([(m - 1.0) * xs + m * flow.u, (m - 1.0) * ys + m * flow.v, m - 1.0], axis=-1)
    return NormalizedSceneFlow(s, flow.valid & mid.valid)


def _edges(labels):
    return (ndimage.maximum_filter(labels, size=3, mode="nearest")
            != ndimage.minimum_filter(labels, size=3, mode="nearest"))


def mid_label_from_depth(z0, z1, flow: FlowField, boundary_margin: int = 0, instance=None,
                         rel_threshold: float = 0.1) -> MiDField:
    """Motion-in-depth label ``Z1(x + flow(x)) / Z0(x)``.

    ``Z1`` is sampled bilinearly. A pixel is masked when the sample falls
    outside the image, when any of its four source cells sits where the
    3x3 depth range of ``Z1`` exceeds ``rel_threshold`` times the sampled
    depth, or when it lies within ``boundary_margin`` pixels of an instance
    edge (depth edges of ``Z0`` if no instance map is given).
    """
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if z0.shape != z1.shape or z0.shape != flow.shape:
        raise ShapeMismatch("depth maps and flow must share a shape")
    if np.any(z0 <= 0) or np.any(z1 <= 0):
        raise NonPositiveDepth("depth maps must be strictly positive")
    h, w = z0.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    tx, ty = xs + flow.u, ys + flow.v
    inside = np.isfinite(tx) & np.isfinite(ty) & (tx >= 0) & (tx <= w - 1) & (ty >= 0) & (ty <= h - 1)
    txc, tyc = np.where(inside, tx, 0.0), np.where(inside, ty, 0.0)
    z1w = ndimage.map_coordinates(z1, [tyc, txc], order=1, mode="nearest")
    rng = ndimage.maximum_filter(z1, size=3, mode="nearest") - ndimage.minimum_filter(z1, size=3, mode="nearest")
    x0 = np.clip(np.floor(txc).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(tyc).astype(int), 0, h - 1)
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    local = np.maximum.reduce([rng[y0, x0], rng[y0, x1], rng[y1, x0], rng[y1, x1]])
    straddle = local > rel_threshold * z1w
    if instance is not None:
        edges = _edges(np.asarray(instance))
    else:
        r0 = ndimage.maximum_filter(z0, size=3, mode="nearest") - ndimage.minimum_filter(z0, size=3, mode="nearest")
        edges = r0 > rel_threshold * z0
    if boundary_margin > 0 and edges.any():
        near = ndimage.binary_dilation(edges, iterations=int(boundary_margin))
    else:
        near = edges
    valid = inside & ~straddle & ~near & flow.valid
    return MiDField(np.where(valid, z1w / z0, 1.0), valid)


@dataclass(frozen=True)
class MetricsReport:
    epe: float
    f1: float
    logmid: float
    n_valid: int

    def to_text(self) -> str:
        return f"epe={self.epe!r}\nf1={self.f1!r}\nlogmid={self.logmid!r}\nn_valid={self.n_valid}\n"

    def to_json(self) -> str:
        # strict JSON has no NaN; an undefined metric becomes null
        doc = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(self).items()}
        return json.dumps(doc, sort_keys=True, allow_nan=False)


def metrics(pred_flow: FlowField, gt_flow: FlowField, pred_mid: MiDField | None = None,
            gt_mid: MiDField | None = None, valid=None) -> MetricsReport:
    """EPE, outlier percentage (error > 3 px and > 5% of |gt|) and log-mid (1e4 x mean |ln ratio|).

    ``valid`` defaults to ``gt_flow.valid``. log-mid is NaN when no MiD
    fields are given.
    """
    if pred_flow.shape != gt_flow.shape:
        raise ShapeMismatch(f"pred {pred_flow.shape} vs gt {gt_flow.shape}")
    mask = gt_flow.valid if valid is None else np.asarray(valid, dtype=bool)
    if mask.shape != gt_flow.shape:
        raise ShapeMismatch("valid mask shape differs from flow")
    if not mask.any():
        raise EmptyValidMask("no valid pixels to evaluate")
    err = np.hypot(pred_flow.u - gt_flow.u, pred_flow.v - gt_flow.v)[mask]
    mag = np.hypot(gt_flow.u, gt_flow.v)[mask]
    epe = float(err.mean())
    f1 = float(100.0 * np.mean((err > 3.0) & (err > 0.05 * mag)))
    logmid = float("nan")
    if pred_mid is not None and gt_mid is not None:
        if pred_mid.shape != gt_mid.shape or gt_mid.shape != gt_flow.shape:
            raise ShapeMismatch("MiD fields must match the flow shape")
        mm = mask & gt_mid.valid
        if not mm.any():
            raise EmptyValidMask("no valid pixels for motion in depth")
        logmid = float(1e4 * np.mean(np.abs(np.log(pred_mid.m[mm]) - np.log(gt_mid.m[mm]))))
    return MetricsReport(epe, f1, logmid, int(mask.sum()))
