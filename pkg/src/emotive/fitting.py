"""Trajectory estimation without learned networks.

Loss evaluators for refinement histories, a per-pixel least-squares fit of
control points to displacement samples, and the iterative refinement loop
whose update rule is pluggable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .correlation import CostPatch, CostPyramid, query_neighborhood
from .errors import GridTooShort, ShapeMismatch, SingularSystem
from .motion import FlowField, MiDField, optical_flow
from .nurbs import AdaptationResult, KnotVector, Trajectory, eval_trajectory, eval_velocity, rational_basis


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Observed displacements ``(dx, dy)`` of grid pixels at normalized times.

    ``pixels`` holds integer ``(row, col)`` pairs; one row per sample.
    """

    pixels: np.ndarray
    times: np.ndarray
    displacements: np.ndarray
    shape: tuple[int, int]
    weights: np.ndarray | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
        t = np.asarray(self.times, dtype=np.float64).reshape(-1)
        d = np.asarray(self.displacements, dtype=np.float64).reshape(-1, 2)
        if not (len(px) == len(t) == len(d)):
            raise ShapeMismatch("pixels, times and displacements need one row per sample")
        if not np.all(np.isfinite(d)):
            raise ValueError("displacements must be finite")
        h, w = self.shape
        if len(px) and (px[:, 0].min() < 0 or px[:, 0].max() >= h or px[:, 1].min() < 0 or px[:, 1].max() >= w):
            raise ShapeMismatch("sample pixel outside the grid")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "displacements", d)
        object.__setattr__(self, "shape", (int(h), int(w)))
        if self.weights is not None:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64).reshape(-1))

    @classmethod
    def from_dense(cls, times, displacements, valid=None) -> "CorrespondenceSet":
        """Build from ``(S, H, W, 2)`` displacements sampled at ``S`` shared times."""
        d = np.asarray(displacements, dtype=np.float64)
        s, h, w, _ = d.shape
        mask = np.ones((s, h, w), dtype=bool) if valid is None else np.broadcast_to(valid, (s, h, w))
        si, ri, ci = np.nonzero(mask)
        times = np.asarray(times, dtype=np.float64)
        return cls(np.stack([ri, ci], axis=1), times[si], d[si, ri, ci], (h, w))

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 0.8
    lam: float = 1e-7
    iters: int = 6


@dataclass(frozen=True, eq=False)
class FitDiagnostics:
    n_samples: np.ndarray  # (H, W)
    rank_deficient: np.ndarray  # (H, W) bool, before regularization
    residual_rms: np.ndarray  # (H, W), NaN where no samples

    def to_dict(self) -> dict:
        has = self.n_samples > 0
        res = self.residual_rms[has]
        return {
            "pixels_with_samples": int(has.sum()),
            "rank_deficient_pixels": int((self.rank_deficient & has).sum()),
            "residual_rms_max": float(res.max()) if res.size else 0.0,
            "residual_rms_mean": float(res.mean()) if res.size else 0.0,
        }


# ---------------------------------------------------------------------------
# losses


def _mean_valid(x, valid):
    return float(x[valid].mean()) if valid.any() else 0.0


def flow_loss(preds, gt: FlowField, gamma: float = 0.8, valid=None) -> float:
    """``sum_k gamma^(N-k) (mean|du| + mean|dv|)`` over valid pixels."""
    if not preds:
        raise ValueError("need at least one prediction")
    mask = gt.valid if valid is None else np.asarray(valid, dtype=bool) & gt.valid
    n = len(preds)
    total = 0.0
    for k, pr in enumerate(preds, start=1):
        if pr.shape != gt.shape:
            raise ShapeMismatch(f"prediction {pr.shape} vs ground truth {gt.shape}")
        term = _mean_valid(np.abs(pr.u - gt.u), mask) + _mean_valid(np.abs(pr.v - gt.v), mask)
        total += gamma ** (n - k) * term
    return total


def depth_loss(preds, gt: MiDField, gamma: float = 0.8, valid=None) -> float:
    """``sum_k gamma^(N-k) mean|dM|`` over valid pixels."""
    if not preds:
        raise ValueError("need at least one prediction")
    mask = gt.valid if valid is None else np.asarray(valid, dtype=bool) & gt.valid
    n = len(preds)
    total = 0.0
    for k, pr in enumerate(preds, start=1):
        if pr.shape != gt.shape:
            raise ShapeMismatch(f"prediction {pr.shape} vs ground truth {gt.shape}")
        total += gamma ** (n - k) * _mean_valid(np.abs(pr.m - gt.m), mask)
    return total


def temporal_regularizer(traj: Trajectory, t_grid) -> float:
    """Mean over pixels of ``sum_i |T'(t_{i+1}) - T'(t_i)|_1``."""
    g = np.asarray(t_grid, dtype=np.float64).reshape(-1)
    if len(g) < 2:
        raise GridTooShort("temporal regularizer needs at least two grid times")
    if np.any(np.diff(g) < 0):
        raise ValueError("t_grid must be sorted")
    vel = eval_velocity(traj, g)  # (T, H, W, 2)
    return float(np.abs(np.diff(vel, axis=0)).sum(axis=(0, 3)).mean())


def total_loss(flow_preds, gt_flow, mid_preds, gt_mid, traj, t_grid, cfg: LossConfig = LossConfig()) -> float:
    return (flow_loss(flow_preds, gt_flow, cfg.gamma) + depth_loss(mid_preds, gt_mid, cfg.gamma)
            + cfg.lam * temporal_regularizer(traj, t_grid))


# ---------------------------------------------------------------------------
# least squares


def fit_trajectory_lsq(corr: CorrespondenceSet, knots: KnotVector, weights, reg: float = 1e-6,
                       smooth: float = 0.0, smooth_grid=None, return_diagnostics: bool = False):
    """Fit control points ``P_1 .. P_{n-1}`` (``P_0`` pinned at zero) per pixel.

    For fixed knots and weights the curve is linear in the control points,
    so each pixel solves a small normal system. ``smooth`` adds
    ``sum ||T'(g_{i+1}) - T'(g_i)||^2`` over ``smooth_grid`` (default 17
    uniform times). The ridge ``reg * ||P||^2`` is added only on pixels whose
    system is rank-deficient, so well-posed pixels are solved without bias;
    pixels with no samples come out as zero.

    Raises:
        SingularSystem: a pixel with samples is rank-deficient and ``reg == 0``.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = knots.n_control
    k = n - 1
    h, wd = corr.shape
    npix = h * wd
    pix = corr.pixels[:, 0] * wd + corr.pixels[:, 1]
    sw = np.ones(len(corr)) if corr.weights is None else corr.weights
    A = np.zeros((len(corr), k))
    if len(corr):
        R, _ = rational_basis(knots, w, corr.times)
        A = R[:, 1:]
    G = np.zeros((npix, k, k))
    b = np.zeros((npix, k, 2))
    for i in range(k):
        for j in range(i, k):
            G[:, i, j] = np.bincount(pix, weights=sw * A[:, i] * A[:, j], minlength=npix)
            G[:, j, i] = G[:, i, j]
        for c in range(2):
            b[:, i, c] = np.bincount(pix, weights=sw * A[:, i] * corr.displacements[:, c], minlength=npix)
    count = np.bincount(pix, minlength=npix)
    if smooth > 0:
        grid = np.linspace(0.0, 1.0, 17) if smooth_grid is None else np.asarray(smooth_grid, dtype=np.float64)
        _, dR = rational_basis(knots, w, grid)
        D = np.diff(dR[:, 1:], axis=0)
        G = G + smooth * (D.T @ D)[None]
    scale = np.maximum(np.abs(G).max(axis=(1, 2)), 1e-300)
    eig_min = np.linalg.eigvalsh(G)[:, 0]
    deficient = eig_min <= 1e-12 * scale
    deficient |= count == 0
    if reg == 0:
        bad = deficient & (count > 0)
        if bad.any():
            r, c = divmod(int(np.flatnonzero(bad)[0]), wd)
            raise SingularSystem(f"rank-deficient system at pixel ({r}, {c}); use reg > 0")
    G[deficient] += max(reg, 1e-300) * np.eye(k)
    G[count == 0] = np.eye(k)
    b[count == 0] = 0.0
    P = np.linalg.solve(G, b)  # (npix, k, 2)
    ctrl = np.zeros((n, h, wd, 2))
    ctrl[1:] = P.reshape(h, wd, k, 2).transpose(2, 0, 1, 3)
    traj = Trajectory(ctrl, w, knots)
    if not return_diagnostics:
        return traj
    pred = np.einsum("sk,skc->sc", A, P[pix]) if len(corr) else np.zeros((0, 2))
    sq = np.bincount(pix, weights=((pred - corr.displacements) ** 2).sum(axis=1), minlength=npix)
    with np.errstate(invalid="ignore", divide="ignore"):
        rms = np.where(count > 0, np.sqrt(sq / np.maximum(count, 1)), np.nan)
    diag = FitDiagnostics(count.reshape(h, wd), deficient.reshape(h, wd), rms.reshape(h, wd))
    return traj, diag


# ---------------------------------------------------------------------------
# refinement


@dataclass(frozen=True, eq=False)
class CostPyramids:
    spatial: CostPyramid | None = None
    temporal: CostPyramid | None = None  # fused


@dataclass(frozen=True, eq=False)
class QueryFeatures:
    """Everything one refinement step sees.

    ``temporal`` patches belong to ``query_times`` (one per anchor whose
    block has a temporal cost); ``spatial`` patches sample the end-time
    displacement ``T(1)``.
    """

    temporal: CostPatch | None
    spatial: CostPatch | None
    query_times: np.ndarray
    control: np.ndarray

    @property
    def summary(self) -> np.ndarray:
        """Concatenated ``(H, W, d)`` feature: temporal patches, spatial patch, control state."""
        h, w = self.control.shape[1:3]
        parts = []
        if self.temporal is not None:
            parts.append(self.temporal.values.reshape(h, w, -1))
        if self.spatial is not None:
            parts.append(self.spatial.values.reshape(h, w, -1))
        parts.append(self.control.transpose(1, 2, 0, 3).reshape(h, w, -1))
        return np.concatenate(parts, axis=-1)


class Updater(Protocol):
    def __call__(self, features: QueryFeatures, traj: Trajectory) -> np.ndarray: ...


def patch_peak_offsets(patch: CostPatch, window: int = 2):
    """Sub-cell peak offset ``(dx, dy)`` of each level-0 patch and a confidence mask.

    The offset is the centroid of the positive values within ``window``
    cells of the arg-max. Patches with no positive value are not confident.
    """
    v = np.maximum(patch.level(0), 0.0)  # (H, W, Q, k, k)
    k = v.shape[-1]
    r = patch.radius
    flat = v.reshape(*v.shape[:-2], k * k)
    am = flat.argmax(axis=-1)
    ay, ax = np.divmod(am, k)
    d = np.arange(k)
    my = (np.abs(d[None, None, None, :] - ay[..., None]) <= window)[..., :, None]
    mx = (np.abs(d[None, None, None, :] - ax[..., None]) <= window)[..., None, :]
    vw = v * (my & mx)
    mass = vw.sum(axis=(-2, -1))
    ok = mass > 0
    safe = np.where(ok, mass, 1.0)
    dy = (vw.sum(axis=-1) * d).sum(axis=-1) / safe - r
    dx = (vw.sum(axis=-2) * d).sum(axis=-1) / safe - r
    return np.stack([dx, dy], axis=-1), ok


@dataclass
class PatchTargetUpdater:
    """Network-free stand-in for the recurrent update.

    Each query patch's peak gives a pseudo-correspondence (current
    displacement plus the peak offset). The control points minimizing the
    squared error to those samples are the target; the increment is a
    damped step ``step * (target - P)`` clipped to ``+-clip`` pixels. Pixels
    whose pseudo-samples do not determine the curve are left unchanged.
    """

    step: float = 0.5
    clip: float = 2.0
    window: int = 2

    def __call__(self, features: QueryFeatures, traj: Trajectory) -> np.ndarray:
        h, w = traj.grid_shape
        times, disps, oks = [], [], []
        if features.temporal is not None:
            cur = eval_trajectory(traj, features.query_times)  # (Q, H, W, 2)
            off, ok = patch_peak_offsets(features.temporal, self.window)
            for q in range(len(features.query_times)):
                times.append(features.query_times[q])
                disps.append(cur[q] + off[:, :, q])
                oks.append(ok[:, :, q])
        if features.spatial is not None:
            off, ok = patch_peak_offsets(features.spatial, self.window)
            times.append(1.0)
            disps.append(eval_trajectory(traj, 1.0) + off[:, :, 0])
            oks.append(ok[:, :, 0])
        if not times:
            return np.zeros_like(traj.control)
        corr = CorrespondenceSet.from_dense(np.array(times), np.stack(disps), np.stack(oks))
        target, diag = fit_trajectory_lsq(corr, traj.knots, traj.weights, reg=1e-6, return_diagnostics=True)
        good = ~diag.rank_deficient
        delta = np.clip(self.step * (target.control - traj.control), -self.clip, self.clip)
        delta = np.where(good[None, :, :, None], delta, 0.0)
        delta[0] = 0.0
        return delta


def _pixel_grid(shape):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.stack([xs, ys], axis=-1)


def refine_trajectory(traj0: Trajectory, pyramids: CostPyramids, adapt: AdaptationResult,
                      updater: Updater | Callable | None = None, cfg: LossConfig = LossConfig(),
                      radius: int = 4):
    """Iteratively update control points from trajectory-guided cost lookups.

    Every iteration samples the fused temporal pyramid at ``p + T(t_j)``
    for each anchor time whose block ``i_j >= 2`` (block 1 is the
    correlation reference) and the spatial pyramid at ``p + T(1)``, hands
    the patches to ``updater`` and adds its increment (control point 0 stays
    pinned). The flow ``T(1)`` after each iteration is recorded.

    Returns:
        ``(trajectory, history)`` with ``cfg.iters`` :class:`FlowField` entries.
    """
    updater = PatchTargetUpdater() if updater is None else updater
    grid = _pixel_grid(traj0.grid_shape)
    times = np.zeros(0)
    blocks = np.zeros(0, dtype=np.int64)
    if pyramids.temporal is not None:
        nb = pyramids.temporal.levels[0].shape[0]
        sel = (adapt.anchor_indices >= 2) & (adapt.anchor_indices <= nb + 1)
        times = np.asarray(adapt.anchor_times, dtype=np.float64)[sel]
        blocks = np.asarray(adapt.anchor_indices)[sel] - 2
    traj = traj0
    history = []
    for _ in range(cfg.iters):
        temporal = spatial = None
        if len(times):
            pos = grid[None] + eval_trajectory(traj, times)
            temporal = query_neighborhood(pyramids.temporal, pos, radius, blocks)
        if pyramids.spatial is not None:
            spatial = query_neighborhood(pyramids.spatial, grid + eval_trajectory(traj, 1.0), radius)
        feats = QueryFeatures(temporal, spatial, times, traj.control)
        delta = np.array(updater(feats, traj), dtype=np.float64)
        if delta.shape != traj.control.shape or not np.all(np.isfinite(delta)):
            raise ValueError("updater must return a finite increment shaped like the control points")
        delta[0] = 0.0
        traj = traj.with_control(traj.control + delta)
        history.append(optical_flow(traj, 1.0))
    return traj, history
