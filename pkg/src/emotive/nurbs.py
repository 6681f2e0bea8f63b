"""Clamped NURBS displacement trajectories.

Indices are 0-based throughout: control point ``i`` pairs with basis
function ``N_{i,p}`` over knots ``knots[i] .. knots[i + p + 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import IndexOutOfRange, TooFewBlocks, UnsortedInterior, WrongInteriorCount

KNOT_EPS = 1e-4


@dataclass(frozen=True, eq=False)
class KnotVector:
    knots: np.ndarray
    degree: int

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=np.float64).copy()
        k.setflags(write=False)
        object.__setattr__(self, "knots", k)
        p = int(self.degree)
        object.__setattr__(self, "degree", p)
        if p < 0:
            raise ValueError("degree must be >= 0")
        if len(k) < 2 * (p + 1):
            raise ValueError(f"clamped knot vector of degree {p} needs >= {2 * (p + 1)} knots")
        if np.any(np.diff(k) < 0):
            raise UnsortedInterior("knots must be non-decreasing")
        if np.any(k[: p + 1] != 0.0) or np.any(k[-(p + 1):] != 1.0):
            raise ValueError("knot vector must be clamped to [0, 1]")
        inner = k[p + 1: len(k) - p - 1]
        if np.any((inner <= 0.0) | (inner >= 1.0)):
            raise ValueError("interior knots must lie strictly inside (0, 1)")

    @property
    def m(self) -> int:
        return len(self.knots)

    @property
    def n_control(self) -> int:
        return self.m - self.degree - 1

    @property
    def interior(self) -> np.ndarray:
        p = self.degree
        return self.knots[p + 1: self.m - p - 1]

    def __eq__(self, other):
        return isinstance(other, KnotVector) and self.degree == other.degree and np.array_equal(self.knots, other.knots)


def clamped_knots(n: int, p: int, interior=()) -> KnotVector:
    """``[0]*(p+1) + interior + [1]*(p+1)``; requires ``len(interior) == n - p - 1``."""
    interior = np.asarray(interior, dtype=np.float64).reshape(-1)
    if n < p + 1:
        raise WrongInteriorCount(f"need n >= p + 1 control points, got n={n}, p={p}")
    if len(interior) != n - p - 1:
        raise WrongInteriorCount(f"n={n}, p={p} needs {n - p - 1} interior knots, got {len(interior)}")
    if np.any(np.diff(interior) < 0):
        raise UnsortedInterior("interior knots must be sorted")
    if np.any((interior <= 0) | (interior >= 1)):
        raise ValueError("interior knots must lie strictly inside (0, 1)")
    return KnotVector(np.concatenate([np.zeros(p + 1), interior, np.ones(p + 1)]), p)


def uniform_knots(n: int, p: int) -> KnotVector:
    return clamped_knots(n, p, np.arange(1, n - p) / (n - p))


def _as_knots(knots) -> np.ndarray:
    return knots.knots if isinstance(knots, KnotVector) else np.asarray(knots, dtype=np.float64)


def find_span(knots, t) -> np.ndarray:
    """Index ``s`` with ``knots[s] <= t < knots[s+1]``; ``t == knots[-1]`` uses the last non-empty span."""
    k = _as_knots(knots)
    t = np.asarray(t, dtype=np.float64)
    s = np.searchsorted(k, t, side="right") - 1
    last = int(np.flatnonzero(np.diff(k) > 0)[-1])
    s = np.where(t >= k[-1], last, s)
    return np.where(t < k[0], -1, s)


def basis_all(knots, p: int, t) -> np.ndarray:
    """Cox-de Boor values of every ``N_{i,p}`` at each ``t``; shape ``(len(t), m - p - 1)``.

    ``p`` may be lower than the knot vector's own degree (needed for the
    derivative). Zero-width denominators contribute zero.
    """
    k = _as_knots(knots)
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    m = len(k)
    span = find_span(k, t)
    N = (np.arange(m - 1)[None, :] == span[:, None]).astype(np.float64)
    tc = t[:, None]
    for d in range(1, p + 1):
        cnt = m - 1 - d
        i = np.arange(cnt)
        den_l = k[i + d] - k[i]
        den_r = k[i + d + 1] - k[i + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(den_l > 0, (tc - k[i]) / np.where(den_l > 0, den_l, 1.0), 0.0) * N[:, :cnt]
            right = np.where(den_r > 0, (k[i + d + 1] - tc) / np.where(den_r > 0, den_r, 1.0), 0.0) * N[:, 1:cnt + 1]
        N = left + right
    return N


def basis_derivative_all(knots, p: int, t) -> np.ndarray:
    """First derivatives ``N'_{i,p}(t)`` for every ``i``; shape ``(len(t), m - p - 1)``."""
    k = _as_knots(knots)
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    m = len(k)
    cnt = m - p - 1
    if p == 0:
        return np.zeros((len(t), cnt))
    lower = basis_all(k, p - 1, t)  # (T, cnt + 1)
    i = np.arange(cnt)
    den_l = k[i + p] - k[i]
    den_r = k[i + p + 1] - k[i + 1]
    cl = np.where(den_l > 0, p / np.where(den_l > 0, den_l, 1.0), 0.0)
    cr = np.where(den_r > 0, p / np.where(den_r > 0, den_r, 1.0), 0.0)
    return cl * lower[:, :cnt] - cr * lower[:, 1:cnt + 1]


def _check_index(knots, i, p):
    count = len(_as_knots(knots)) - p - 1
    if not 0 <= i < count:
        raise IndexOutOfRange(f"basis index {i} outside 0..{count - 1}")


def basis(i: int, p: int, t: float, knots) -> float:
    """Single B-spline basis value ``N_{i,p}(t)``."""
    _check_index(knots, i, p)
    return float(basis_all(knots, p, t)[0, i])


def basis_derivative(i: int, p: int, t: float, knots) -> float:
    _check_index(knots, i, p)
    return float(basis_derivative_all(knots, p, t)[0, i])


def greville(knots: KnotVector) -> np.ndarray:
    """Greville abscissae: averages of ``p`` consecutive interior-shifted knots."""
    k, p = knots.knots, knots.degree
    if p == 0:
        return k[:-1].copy()
    return np.array([k[i + 1: i + p + 1].mean() for i in range(knots.n_control)])


def rational_basis(knots: KnotVector, weights, t):
    """Rational basis ``R_i = N_i w_i / sum_j N_j w_j`` and its time derivative.

    Returns:
        ``(R, dR)``, each of shape ``(len(t), n)``.
    """
    w = np.asarray(weights, dtype=np.float64)
    N = basis_all(knots, knots.degree, t)
    dN = basis_derivative_all(knots, knots.degree, t)
    W = N @ w
    dW = dN @ w
    R = N * w / W[:, None]
    dR = (dN * w - R * dW[:, None]) / W[:, None]
    return R, dR


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-pixel NURBS displacement curves sharing knots and weights.

    ``control`` has shape ``(n, H_D, W_D, 2)`` holding ``(dx, dy)`` in grid
    pixels; control point 0 is pinned at zero so ``T(0) = 0``.
    """

    control: np.ndarray
    weights: np.ndarray
    knots: KnotVector

    def __post_init__(self):
        c = np.array(self.control, dtype=np.float64)
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if c.ndim != 4 or c.shape[-1] != 2:
            raise ValueError("control must have shape (n, H_D, W_D, 2)")
        n = c.shape[0]
        if n != self.knots.n_control:
            raise ValueError(f"{n} control points but knot vector implies {self.knots.n_control}")
        if w.shape != (n,):
            raise ValueError("need one weight per control point")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and positive")
        if np.any(c[0] != 0):
            raise ValueError("first control point must be zero")
        if not np.all(np.isfinite(c)):
            raise ValueError("control points must be finite")
        c.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "control", c)
        object.__setattr__(self, "weights", w)

    @property
    def degree(self) -> int:
        return self.knots.degree

    @property
    def n(self) -> int:
        return self.control.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.control.shape[1:3]

    def with_control(self, control) -> "Trajectory":
        return replace(self, control=control)

    @classmethod
    def zeros(cls, shape, knots: KnotVector, weights=None) -> "Trajectory":
        n = knots.n_control
        w = np.ones(n) if weights is None else weights
        return cls(np.zeros((n, *shape, 2)), w, knots)


def eval_trajectory(traj: Trajectory, t):
    """Displacement field ``T(t)``: ``(H_D, W_D, 2)`` for scalar ``t``, ``(len(t), H_D, W_D, 2)`` otherwise."""
    scalar = np.ndim(t) == 0
    R, _ = rational_basis(traj.knots, traj.weights, t)
    out = np.einsum("tn,nhwc->thwc", R, traj.control)
    return out[0] if scalar else out


def eval_velocity(traj: Trajectory, t):
    """Time derivative ``T'(t)`` in grid pixels per unit normalized time."""
    scalar = np.ndim(t) == 0
    _, dR = rational_basis(traj.knots, traj.weights, t)
    out = np.einsum("tn,nhwc->thwc", dR, traj.control)
    return out[0] if scalar else out


def rational_linear_trajectory(end_displacement, end_ratio: float, knots: KnotVector) -> Trajectory:
    """Exact NURBS for ``T(s) = s * r * D / (1 + (r - 1) s)``.

    This is the image displacement of a point translating at constant
    velocity, where ``D`` is the displacement at ``s = 1`` and ``r`` the depth
    ratio ``Z(1) / Z(0)``. Both numerator and denominator are linear in ``s``,
    so their spline coefficients are their values at the Greville abscissae.
    """
    D = np.asarray(end_displacement, dtype=np.float64)
    xi = greville(knots)
    w = 1.0 + (end_ratio - 1.0) * xi
    if np.any(w <= 0):
        raise ValueError("depth ratio makes a weight non-positive")
    ctrl = (xi * end_ratio / w)[:, None, None, None] * D[None]
    ctrl[0] = 0.0
    return Trajectory(ctrl, w, knots)


@dataclass(frozen=True, eq=False)
class AdaptationResult:
    knots: KnotVector
    weights: np.ndarray  # softmax, sums to 1
    anchor_times: np.ndarray  # sorted, in [0, 1]
    anchor_indices: np.ndarray  # 1-based block indices, same order as anchor_times
    profile: np.ndarray


def _softmax(v):
    e = np.exp(v - v.max())
    # keep weights strictly positive when a large spread underflows exp
    e = np.maximum(e / e.sum(), np.finfo(np.float64).tiny)
    return e / e.sum()


def _spread_interior(knots, eps):
    """Clamp into ``[eps, 1 - eps]`` and enforce a minimum gap ``eps``."""
    k = np.clip(np.asarray(knots, dtype=np.float64), eps, 1.0 - eps)
    for i in range(1, len(k)):
        k[i] = max(k[i], k[i - 1] + eps)
    if len(k):
        k[-1] = min(k[-1], 1.0 - eps)
        for i in range(len(k) - 2, -1, -1):
            k[i] = min(k[i], k[i + 1] - eps)
    return k


def density_adapt(density, n: int = 5, p: int = 3, eps: float = KNOT_EPS) -> AdaptationResult:
    """Choose knots and weights from the event density.

    The density (a :class:`~emotive.projection.DensityField` or a per-block
    profile) is reduced to one value per temporal block. The ``n`` densest
    blocks (ties to the lower index) become anchors ``t = i / N_a`` with
    1-based block index ``i``; interior knots are moving averages of ``p``
    consecutive sorted anchors and the weights are the softmax of the
    selected densities.
    """
    profile = density.profile() if hasattr(density, "profile") else np.asarray(density, dtype=np.float64)
    profile = np.asarray(profile, dtype=np.float64).reshape(-1)
    n_a = len(profile)
    if n_a < n:
        raise TooFewBlocks(f"{n_a} temporal blocks cannot supply {n} anchors")
    if n < p + 1:
        raise WrongInteriorCount(f"need n >= p + 1, got n={n}, p={p}")
    top = np.argsort(-profile, kind="stable")[:n]
    idx = np.sort(top) + 1
    t_l = idx / n_a
    weights = _softmax(profile[idx - 1])
    interior = np.array([t_l[i:i + p].mean() for i in range(n - p - 1)])
    knots = clamped_knots(n, p, _spread_interior(interior, eps))
    return AdaptationResult(knots, weights, t_l, idx, profile)
