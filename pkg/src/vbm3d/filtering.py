"""Collaborative shrinkage of groups and Kaiser-weighted aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .search import PatchSpec
from .vidio import Video
from .xform import DCMode, GroupStack, TransformId, dc_mode_code, forward_3d, inverse_3d

# replaces sigma^2 (and an all-zero Wiener energy) in weight denominators
EPS = 1e-12


def bessel_i0(x: float) -> float:
    """Zeroth-order modified Bessel function of the first kind (power series)."""
    q = 0.25 * x * x
    term = 1.0
    total = 1.0
    m = 0
    while term > 1e-17 * total:
        m += 1
        term *= q / (m * m)
        total += term
    return total


@dataclass(frozen=True, eq=False)
class KaiserWindow:
    beta: float
    values: np.ndarray


def kaiser_window(k: int, beta: float) -> KaiserWindow:
    """Separable k x k Kaiser window, peaked at the patch centre.

    Sample ``i`` of the 1D profile is ``I0(beta * sqrt(1 - r_i^2))`` with
    ``r_i = 2 i / (k - 1) - 1``, divided by its largest sample so the centre
    sample(s) equal 1.
    """
    if k < 1 or beta < 0:
        raise ValueError(f"need k >= 1 and beta >= 0, got k={k}, beta={beta}")
    if k == 1:
        w = np.ones(1)
    else:
        r = 2.0 * np.arange(k) / (k - 1) - 1.0
        w = np.array([bessel_i0(beta * math.sqrt(max(0.0, 1.0 - ri * ri))) for ri in r])
        w /= w.max()
    values = np.outer(w, w)
    values.flags.writeable = False
    return KaiserWindow(beta, values)


@dataclass(frozen=True)
class ShrinkResult:
    stack: GroupStack
    weight: float
    kept: float  # N_hard for hard thresholding, sum of alpha^2 for Wiener


def ht_shrink(g: GroupStack, tid: TransformId, sigma: float, lambda3d: float,
              dc: DCMode = DCMode.SINGLE) -> ShrinkResult:
    """Hard-threshold the group spectrum at ``lambda3d * sigma``.

    Coefficients with ``|c| <= lambda3d * sigma`` are zeroed except the DC
    positions. The aggregation weight is ``1 / (sigma^2 * N_hard)`` with
    ``N_hard`` the number of retained coefficients (DC always counted);
    ``sigma^2`` below 1e-12 is replaced by 1e-12.
    """
    spec = forward_3d(g, tid)
    coeffs = spec.coeffs.copy()
    kept = _kernels.hard_threshold(coeffs, lambda3d * sigma, dc_mode_code(dc))
    weight = 1.0 / (max(sigma * sigma, EPS) * kept)
    return ShrinkResult(inverse_3d(g.with_coeffs(coeffs), tid), weight, float(kept))


def wiener_shrink(g_noisy: GroupStack, g_oracle: GroupStack, tid: TransformId,
                  sigma: float) -> ShrinkResult:
    """Empirical Wiener filter of a noisy group using an oracle group."""
    if g_noisy.coeffs.shape != g_oracle.coeffs.shape:
        raise ValueError("noisy and oracle groups must be congruent")
    s2 = max(sigma * sigma, EPS)
    coeffs = forward_3d(g_noisy, tid).coeffs.copy()
    oracle = forward_3d(g_oracle, tid).coeffs
    acc = _kernels.wiener_attenuate(coeffs, oracle, s2)
    weight = 1.0 / (s2 * max(acc, EPS))
    return ShrinkResult(inverse_3d(g_noisy.with_coeffs(coeffs), tid), weight, acc)


class AggBuffer:
    """Weighted-sum accumulators for overlapping patch estimates."""

    def __init__(self, shape):
        self.num = np.zeros(shape)
        self.den = np.zeros(shape)

    @classmethod
    def like(cls, v: Video) -> "AggBuffer":
        return cls(v.shape)

    def merge(self, other_num, other_den, t0: int = 0) -> None:
        t1 = t0 + other_num.shape[0]
        self.num[t0:t1] += other_num
        self.den[t0:t1] += other_den


def aggregate(buf: AggBuffer, result: ShrinkResult, window: KaiserWindow) -> None:
    """Add ``w K q`` and ``w K`` of every patch of the group to the buffer."""
    g = result.stack
    if window.values.shape != (g.spec.k, g.spec.k):
        raise ValueError("Kaiser window size does not match the patches")
    c = g.coords
    xs = np.ascontiguousarray(c[:, 0])
    ys = np.ascontiguousarray(c[:, 1])
    ts = np.ascontiguousarray(c[:, 2])
    _kernels.aggregate_group(buf.num, buf.den, 0, g.coeffs, xs, ys, ts, g.n,
                             float(result.weight), np.ascontiguousarray(window.values))


def normalize(buf: AggBuffer, fallback: Video) -> Video:
    """``num / den`` where covered, `fallback` samples elsewhere."""
    covered = buf.den > 0
    out = np.array(fallback.data, copy=True)
    out[covered] = buf.num[covered] / buf.den[covered]
    return Video(out)
