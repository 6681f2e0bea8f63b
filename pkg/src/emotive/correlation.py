"""Spatial and temporal correlation pyramids and trajectory-guided lookups."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FewerThanTwoBlocks, LevelMismatch, ShapeMismatch


class Axis(str, Enum):
    XY = "xy"
    HT = "ht"
    WT = "wt"


class CostKind(str, Enum):
    SPATIAL = "spatial"
    TEMPORAL_HT = "temporal_ht"
    TEMPORAL_WT = "temporal_wt"
    TEMPORAL_FUSED = "temporal_fused"


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """``D x H x W`` (axis XY) or ``D x S`` (axis HT / WT) features."""

    data: np.ndarray
    axis: Axis = Axis.XY
    block: int | None = None

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        want = 3 if Axis(self.axis) is Axis.XY else 2
        if d.ndim != want or d.shape[0] < 1:
            raise ShapeMismatch(f"{self.axis} features need {want} dims with D >= 1, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "axis", Axis(self.axis))

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class CostPyramid:
    """Correlation volumes, finest first.

    Level ``m`` shapes: SPATIAL ``(H, W, H >> m, W >> m)``; TEMPORAL_HT/WT
    ``(N_a - 1, S, S >> m)``; TEMPORAL_FUSED ``(N_a - 1, H, W, H >> m, W >> m)``.
    """

    levels: list
    kind: CostKind

    @property
    def n_levels(self) -> int:
        return len(self.levels)


@dataclass(frozen=True, eq=False)
class CostPatch:
    """``values`` has shape ``(H, W, n_queries, L * (2r + 1)^2)``.

    Each level contributes a ``(2r + 1)^2`` block, row-major over
    ``(dy, dx)`` with ``dy, dx`` running ``-r .. r``; blocks are ordered
    finest level first.
    """

    values: np.ndarray
    radius: int
    n_levels: int

    def level(self, m: int) -> np.ndarray:
        """Level ``m`` patches reshaped to ``(H, W, Q, 2r+1, 2r+1)``."""
        k = 2 * self.radius + 1
        v = self.values[..., m * k * k:(m + 1) * k * k]
        return v.reshape(*v.shape[:-1], k, k)


def avg_pool_2d(x: np.ndarray, k: int) -> np.ndarray:
    """Non-overlapping mean over the last two axes; remainders dropped."""
    if k == 1:
        return x
    h, w = x.shape[-2] // k, x.shape[-1] // k
    x = x[..., : h * k, : w * k]
    return x.reshape(*x.shape[:-2], h, k, w, k).mean(axis=(-3, -1))


def avg_pool_1d(x: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        return x
    s = x.shape[-1] // k
    return x[..., : s * k].reshape(*x.shape[:-1], s, k).mean(axis=-1)


def spatial_cost_pyramid(f_prev: FeatureMap, f_next: FeatureMap, levels: int = 2) -> CostPyramid:
    """All-pairs inner products of ``f_prev`` against ``f_next`` pooled by ``2^m``."""
    a, b = f_prev.data, f_next.data
    if f_prev.axis is not Axis.XY or f_next.axis is not Axis.XY or a.shape != b.shape:
        raise ShapeMismatch(f"spatial correlation needs matching XY features, got {a.shape} and {b.shape}")
    d = a.shape[0]
    out = []
    for m in range(levels):
        out.append(np.einsum("cij,ckl->ijkl", a, avg_pool_2d(b, 2 ** m)) / d)
    return CostPyramid(out, CostKind.SPATIAL)


def temporal_cost_pyramid(f_axis, levels: int = 2) -> CostPyramid:
    """Correlate the first temporal block against blocks ``2 .. N_a`` along one axis."""
    if len(f_axis) < 2:
        raise FewerThanTwoBlocks("temporal correlation needs at least two blocks")
    axes = {f.axis for f in f_axis}
    shapes = {f.data.shape for f in f_axis}
    if len(axes) != 1 or len(shapes) != 1 or Axis.XY in axes:
        raise ShapeMismatch("temporal blocks must share one axis (HT or WT) and shape")
    axis = axes.pop()
    ref = f_axis[0].data  # (D_t, S)
    rest = np.stack([f.data for f in f_axis[1:]])  # (N_a - 1, D_t, S)
    d = ref.shape[0]
    out = []
    for m in range(levels):
        out.append(np.einsum("ci,ncj->nij", ref, avg_pool_1d(rest, 2 ** m)) / d)
    kind = CostKind.TEMPORAL_HT if axis is Axis.HT else CostKind.TEMPORAL_WT
    return CostPyramid(out, kind)


def fuse_temporal(c_ht: CostPyramid, c_wt: CostPyramid) -> CostPyramid:
    """Outer product ``C_t[n, i, k, j, l] = C_ht[n, i, j] * C_wt[n, k, l]`` per level."""
    if c_ht.kind is not CostKind.TEMPORAL_HT or c_wt.kind is not CostKind.TEMPORAL_WT:
        raise ShapeMismatch("fuse_temporal expects an HT and a WT pyramid")
    if c_ht.n_levels != c_wt.n_levels:
        raise LevelMismatch(f"{c_ht.n_levels} vs {c_wt.n_levels} levels")
    out = []
    for a, b in zip(c_ht.levels, c_wt.levels):
        if a.shape[0] != b.shape[0]:
            raise LevelMismatch(f"block counts differ: {a.shape[0]} vs {b.shape[0]}")
        out.append(np.einsum("nij,nkl->nikjl", a, b))
    return CostPyramid(out, CostKind.TEMPORAL_FUSED)


def bilinear_sample(slices: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample ``slices[q]`` (shape ``(Q, h, w)``) at ``(x[q, k], y[q, k])``.

    Coordinates are in cell units; cells outside the slice read as zero.
    """
    q, h, w = slices.shape
    flat = slices.reshape(-1)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    base = (np.arange(q) * (h * w))[:, None]
    out = np.zeros(x.shape)
    for dy, dx, wt in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)),
                       (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
        xi, yi = x0 + dx, y0 + dy
        ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        idx = base + np.where(ok, yi * w + xi, 0)
        out = out + np.where(ok, wt * flat[idx], 0.0)
    return out


def query_neighborhood(pyr: CostPyramid, positions, radius: int = 4, blocks=None) -> CostPatch:
    """Sample ``(2r+1)^2`` neighbourhoods of each level around warped positions.

    Args:
        pyr: SPATIAL or TEMPORAL_FUSED pyramid.
        positions: ``(Q, H, W, 2)`` (or ``(H, W, 2)``) absolute ``(x, y)``
            target positions in level-0 cells.
        radius: neighbourhood radius ``r``.
        blocks: for TEMPORAL_FUSED, the stored block index (``0`` is block 2)
            sampled by each query.

    At level ``m`` the centre is ``p / 2^m`` and offsets stay in level-``m``
    cells.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim == 3:
        pos = pos[None]
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions must be finite")
    nq, h, w, _ = pos.shape
    fused = pyr.kind is CostKind.TEMPORAL_FUSED
    if fused:
        if blocks is None or len(blocks) != nq:
            raise ShapeMismatch("temporal queries need one block index per query")
        blocks = np.asarray(blocks, dtype=np.int64)
    elif pyr.kind is not CostKind.SPATIAL:
        raise ShapeMismatch(f"cannot query a {pyr.kind.value} pyramid; fuse it first")
    k = 2 * radius + 1
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    dy, dx = np.meshgrid(d, d, indexing="ij")
    dy, dx = dy.reshape(-1), dx.reshape(-1)
    parts = []
    for m, vol in enumerate(pyr.levels):
        if fused:
            if vol.shape[1:3] != (h, w):
                raise ShapeMismatch(f"positions grid {(h, w)} vs pyramid {vol.shape[1:3]}")
            slices = vol[blocks].reshape(nq * h * w, *vol.shape[3:])
        else:
            if vol.shape[:2] != (h, w):
                raise ShapeMismatch(f"positions grid {(h, w)} vs pyramid {vol.shape[:2]}")
            slices = np.broadcast_to(vol[None], (nq, *vol.shape)).reshape(nq * h * w, *vol.shape[2:])
        scale = 2.0 ** m
        cx = pos[..., 0].reshape(-1, 1) / scale + dx[None]
        cy = pos[..., 1].reshape(-1, 1) / scale + dy[None]
        vals = bilinear_sample(slices, cx, cy).reshape(nq, h, w, k * k)
        parts.append(vals)
    values = np.concatenate(parts, axis=-1).transpose(1, 2, 0, 3)
    return CostPatch(values, radius, pyr.n_levels)
