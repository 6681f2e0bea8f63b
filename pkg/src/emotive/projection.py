"""Event Voxel, Event Kymograph and the block-wise event density field."""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy import sparse
from scipy.ndimage import uniform_filter

from .errors import BadAnchorCount, NonPositiveSigma
from .events import EventStream

# Gaussian rows are built for at most this many (time-bin x unique-timestamp) cells at once
_CHUNK_CELLS = 1 << 24
_SERIES_TOL = 1e-17
_SERIES_MAX_TERMS = 40


def triangular_kernel(a):
    """``max(0, 1 - |a|)``."""
    return np.maximum(0.0, 1.0 - np.abs(a))


def gaussian_kernel(a, sigma):
    """Unnormalized Gaussian ``exp(-(a / sigma)^2)``."""
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    return np.exp(-((np.asarray(a, dtype=np.float64) / sigma) ** 2))


@dataclass(frozen=True, eq=False)
class Voxel:
    data: np.ndarray  # (B, H, W)
    bin_duration: float  # seconds
    window: tuple[int, int]

    @property
    def bins(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class Kymograph:
    kx: np.ndarray  # (T, W)
    ky: np.ndarray  # (T, H)
    sigma: float
    window: tuple[int, int]
    truncated: bool = False

    @property
    def t_bins(self) -> int:
        return self.kx.shape[0]


@dataclass(frozen=True, eq=False)
class DensityField:
    es: np.ndarray  # (N_a, H, W)
    ds: np.ndarray  # (N_a, H, W)
    pool_size: tuple[int, int, int]
    n_a: int
    block_kx: np.ndarray  # (N_a, W)
    block_ky: np.ndarray  # (N_a, H)

    def profile(self) -> np.ndarray:
        """Global spatial mean of ``ds`` per temporal block."""
        return self.ds.mean(axis=(1, 2))


def event_voxel(stream: EventStream, bins: int = 7) -> Voxel:
    """Accumulate events into a ``B x H x W`` voxel with triangular kernels.

    Event times map linearly onto bin centres ``0 .. B-1`` (window start to
    window end), so with integer pixel coordinates only the temporal kernel
    spreads mass, across at most two neighbouring bins.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    h, w = stream.sensor
    span = stream.duration_us
    if span <= 0:
        if len(stream) == 0:
            return Voxel(np.zeros((bins, h, w)), 0.0, stream.window)
        raise ValueError("voxel needs a non-degenerate window")
    scale = bins - 1 if bins > 1 else 1
    bin_duration = span * 1e-6 / scale
    out = np.zeros(bins * h * w)
    if len(stream):
        tstar = (stream.t - stream.window[0]).astype(np.float64) * scale / span
        b0 = np.floor(tstar).astype(np.int64)
        frac = tstar - b0
        pol = stream.p.astype(np.float64)
        pix = stream.y * w + stream.x
        for b, wt in ((b0, 1.0 - frac), (b0 + 1, frac)):
            ok = (b >= 0) & (b < bins) & (wt != 0)
            out += np.bincount(b[ok] * (h * w) + pix[ok], weights=pol[ok] * wt[ok], minlength=bins * h * w)
    return Voxel(out.reshape(bins, h, w), bin_duration, stream.window)


def _temporal_projection(tt_unique, inverse, coord, pol, size, t_bins, sigma, truncate):
    """``K(tau, c) = sum_i p_i [c_i == c] g(tau - t_i | sigma)`` for all bins ``tau``."""
    n_u = len(tt_unique)
    h_mat = sparse.csr_matrix((pol, (inverse, coord)), shape=(n_u, size))
    h_t = h_mat.T.tocsr()  # (size, U)
    taus = np.arange(t_bins, dtype=np.float64)
    out = np.zeros((size, t_bins))
    step = max(1, _CHUNK_CELLS // t_bins)
    for lo in range(0, n_u, step):
        hi = min(n_u, lo + step)
        d = tt_unique[lo:hi, None] - taus[None, :]
        g = np.exp(-((d / sigma) ** 2))  # (chunk, T)
        if truncate:
            g[np.abs(d) > 4.0 * sigma] = 0.0
        out += h_t[:, lo:hi] @ g
    return out.T


def _series_terms(sigma: float):
    """Terms needed so every dropped term of the per-event expansion is below ``_SERIES_TOL``.

    Term ``m`` is ``exp(-u^2) (u / sigma)^m / m!`` with ``u = d / sigma`` and
    ``|f| <= 1/2``; its maximum over ``u`` is at ``u^2 = m / 2``. Returns
    ``None`` when ``sigma`` is too small for a short series.
    """
    for m in range(1, _SERIES_MAX_TERMS + 1):
        log_bound = 0.5 * m * (math.log(0.5 * m) - 1.0) - m * math.log(sigma) - math.lgamma(m + 1)
        if log_bound < math.log(_SERIES_TOL):
            return m
    return None


def _series_projection(tt, coords, sizes, pol, t_bins, sigma, terms):
    """Gaussian projections via ``exp(-(d - f)^2 / s^2) = exp(-d^2 / s^2) exp(2 d f / s^2) exp(-f^2 / s^2)``.

    Each event time splits into its nearest bin ``k`` and a remainder
    ``|f| <= 1/2``. The middle factor is expanded as a power series in ``f``,
    so per-bin moments of ``f`` (one ``bincount`` each) multiplied by fixed
    ``T x T`` kernels reproduce the exact sum.
    """
    k = np.rint(tt).astype(np.int64)
    f = tt - k
    inv_s2 = 1.0 / (sigma * sigma)
    d = np.arange(t_bins, dtype=np.float64)[:, None] - np.arange(t_bins, dtype=np.float64)[None, :]
    gauss = np.exp(-d * d * inv_s2)
    scaled = 2.0 * d * inv_s2
    moments = pol * np.exp(-f * f * inv_s2)
    idx = [k * size + c for c, size in zip(coords, sizes)]
    outs = [np.zeros((t_bins, size)) for size in sizes]
    kernel = gauss.copy()
    for m in range(terms):
        if m:
            moments = moments * f
            kernel = kernel * scaled / m
        for out, ix, size in zip(outs, idx, sizes):
            a = np.bincount(ix, weights=moments, minlength=t_bins * size).reshape(t_bins, size)
            out += kernel @ a
    return outs


def event_kymograph(stream: EventStream, t_bins: int = 120, sigma: float = 10.0, truncate: bool = False) -> Kymograph:
    """Decoupled x-t and y-t projections with a Gaussian temporal kernel.

    Event times are rescaled to ``[0, t_bins - 1]`` and the kernel is sampled
    at every integer bin. ``truncate`` zeroes kernel tails beyond ``4 sigma``
    (relative error below ``exp(-16)``).

    Returns:
        :class:`Kymograph` with ``kx`` of shape ``(t_bins, W)`` and ``ky`` of
        shape ``(t_bins, H)``.
    """
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    if t_bins < 2:
        raise ValueError("t_bins must be >= 2")
    h, w = stream.sensor
    if len(stream) == 0:
        return Kymograph(np.zeros((t_bins, w)), np.zeros((t_bins, h)), float(sigma), stream.window, truncate)
    span = stream.duration_us
    if span <= 0:
        raise ValueError("kymograph needs a non-degenerate window")
    pol = stream.p.astype(np.float64)
    terms = None if truncate else _series_terms(float(sigma))
    if terms is not None:
        tt = (stream.t - stream.window[0]).astype(np.float64) * (t_bins - 1) / span
        kx, ky = _series_projection(tt, (stream.x, stream.y), (w, h), pol, t_bins, float(sigma), terms)
        return Kymograph(kx, ky, float(sigma), stream.window, truncate)
    # stream times are sorted, so unique timestamps come from run boundaries
    starts = np.concatenate([[0], np.flatnonzero(np.diff(stream.t)) + 1])
    t_unique = stream.t[starts]
    inverse = np.repeat(np.arange(len(starts)), np.diff(np.append(starts, len(stream))))
    tt = (t_unique - stream.window[0]).astype(np.float64) * (t_bins - 1) / span
    kx = _temporal_projection(tt, inverse, stream.x, pol, w, t_bins, sigma, truncate)
    ky = _temporal_projection(tt, inverse, stream.y, pol, h, t_bins, sigma, truncate)
    return Kymograph(kx, ky, float(sigma), stream.window, truncate)


def block_reduce(k: np.ndarray, n_a: int) -> np.ndarray:
    """Sum ``(T, S)`` rows into ``n_a`` equal temporal blocks, zero-padding ``T`` up."""
    t = k.shape[0]
    pad = (-t) % n_a
    if pad:
        k = np.concatenate([k, np.zeros((pad,) + k.shape[1:])], axis=0)
    return k.reshape(n_a, -1, *k.shape[1:]).sum(axis=1)


def mean_filter_3d(x: np.ndarray, pool) -> np.ndarray:
    """Same-size 3D moving average with edge replication.

    For an axis of size ``k`` the window spans offsets ``-(k // 2) .. (k - 1) // 2``.
    """
    return uniform_filter(np.asarray(x, dtype=np.float64), size=tuple(pool), mode="nearest")


def density_field(kymo: Kymograph, n_a: int = 6, pool=(3, 3, 3)) -> DensityField:
    """Block-wise event distribution ``E_s`` and its smoothed density ``D_s``.

    The kymograph is cut into ``n_a`` temporal blocks (summing bins); block
    ``k`` contributes the outer product ``ky_block[k][:, None] * kx_block[k][None, :]``.
    """
    if n_a < 1:
        raise BadAnchorCount(f"n_a must be >= 1, got {n_a}")
    bkx = block_reduce(kymo.kx, n_a)
    bky = block_reduce(kymo.ky, n_a)
    es = bky[:, :, None] * bkx[:, None, :]
    ds = mean_filter_3d(es, pool)
    return DensityField(es, ds, tuple(int(v) for v in pool), n_a, bkx, bky)
