"""Patch geometry, the regularized patch distance and the group search.

Distances are plain sums of squared differences over the ``kt * k * k``
pixels of a patch (not normalized). A candidate located at the same spatial
position as the centre of the window it was found in has the correcting
factor ``d`` subtracted, which favours non-moving trajectories.

Ordering of a :class:`MatchList` is total and deterministic: increasing
distance, the reference patch first among equals, then ``(t, y, x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError
from .vidio import Video


@dataclass(frozen=True)
class PatchSpec:
    k: int = 8
    kt: int = 1

    def __post_init__(self):
        if self.k < 1 or self.kt < 1:
            raise ConfigError(f"patch extent must be positive, got k={self.k}, kt={self.kt}")

    @property
    def size(self) -> int:
        return self.kt * self.k * self.k


@dataclass(frozen=True, order=True)
class PatchCoord:
    x: int
    y: int
    t: int

    def in_bounds(self, v: Video, spec: PatchSpec) -> bool:
        return (
            0 <= self.x <= v.width - spec.k
            and 0 <= self.y <= v.height - spec.k
            and 0 <= self.t <= v.frames - spec.kt
        )


@dataclass(frozen=True)
class Match:
    coord: PatchCoord
    dist: float


@dataclass
class MatchList:
    matches: list[Match] = field(default_factory=list)

    def __len__(self):
        return len(self.matches)

    def __iter__(self):
        return iter(self.matches)

    def __getitem__(self, i):
        return self.matches[i]

    @property
    def coords(self) -> list[PatchCoord]:
        return [m.coord for m in self.matches]

    @property
    def dists(self) -> np.ndarray:
        return np.array([m.dist for m in self.matches])

    def coord_array(self) -> np.ndarray:
        """``(n, 3)`` int64 array of ``(x, y, t)``."""
        return np.array([(c.x, c.y, c.t) for c in self.coords], dtype=np.int64).reshape(-1, 3)


@dataclass(frozen=True)
class SearchParams:
    """Group search parameters, distances in un-normalized sample^2 units.

    ``tau = math.inf`` disables the distance threshold.
    """

    N: int = 16
    Nf: int = 4
    Ns: int = 7
    Npr: int = 5
    Nb: int = 2
    d: float = 0.0
    tau: float = math.inf

    def __post_init__(self):
        if self.N < 1 or self.Nb < 1 or self.Nf < 0:
            raise ConfigError(f"need N >= 1, Nb >= 1, Nf >= 0: {self}")
        if not self.Ns >= self.Npr >= 1:
            raise ConfigError(f"need Ns >= Npr >= 1: {self}")
        if not self.tau >= 0:
            raise ConfigError(f"tau must be >= 0 (or inf), got {self.tau}")


_NO_FLOW = np.zeros((1, 1, 1, 2))


def _check(v: Video, c: PatchCoord, spec: PatchSpec) -> None:
    if not c.in_bounds(v, spec):
        raise IndexError(f"patch {c} with extent {spec} is outside the {v!r}")


def patch_distance(v: Video, p: PatchCoord, q: PatchCoord, spec: PatchSpec, d: float = 0.0) -> float:
    """Squared L2 distance, minus `d` when p and q share their spatial position."""
    _check(v, p, spec)
    _check(v, q, spec)
    dist = _kernels.patch_ssd(v.data, p.x, p.y, p.t, q.x, q.y, q.t, spec.k, spec.kt)
    if p.x == q.x and p.y == q.y:
        dist -= d
    return dist


def local_search(v: Video, center: PatchCoord, ref: PatchCoord, window: int,
                 spec: PatchSpec, Nb: int, d: float = 0.0) -> MatchList:
    """Best `Nb` patches of the centre's frame in a ``window x window`` region.

    The region holds the top-left corners around `center` and is clipped to
    the frame; distances are to `ref`, with `d` subtracted at the centre.
    """
    _check(v, center, spec)
    _check(v, ref, spec)
    if window < 1 or Nb < 1:
        raise ConfigError("window and Nb must be >= 1")
    xs = np.empty(Nb, np.int64)
    ys = np.empty(Nb, np.int64)
    ds = np.empty(Nb, np.float64)
    cx = np.array([center.x], np.int64)
    cy = np.array([center.y], np.int64)
    m = _kernels.frame_search(v.data, ref.x, ref.y, ref.t, cx, cy, 1, center.t,
                              window, spec.k, spec.kt, Nb, d, xs, ys, ds)
    return MatchList([Match(PatchCoord(int(xs[i]), int(ys[i]), center.t), float(ds[i]))
                      for i in range(m)])


def run_search(v: Video, ref: PatchCoord, params: SearchParams, spec: PatchSpec,
               fflow=None, bflow=None) -> MatchList:
    _check(v, ref, spec)
    guided = fflow is not None
    if not guided:
        fflow = bflow = _NO_FLOW
    cap = params.Nb * (2 * params.Nf + 1) + 1
    xs = np.empty(cap, np.int64)
    ys = np.empty(cap, np.int64)
    ts = np.empty(cap, np.int64)
    ds = np.empty(cap, np.float64)
    n = _kernels.search_core(v.data, ref.x, ref.y, ref.t, spec.k, spec.kt, params.N,
                             params.Nf, params.Ns, params.Npr, params.Nb, float(params.d),
                             float(params.tau), guided, fflow, bflow, xs, ys, ts, ds)
    return MatchList([Match(PatchCoord(int(xs[i]), int(ys[i]), int(ts[i])), float(ds[i]))
                      for i in range(n)])


def predictive_search(v: Video, ref: PatchCoord, params: SearchParams, spec: PatchSpec) -> MatchList:
    """Group of patches similar to `ref` found by predictive temporal search.

    Frame ``t`` is searched in an ``Ns`` window around the reference. Each
    following (preceding) frame is searched in the union of ``Npr`` windows
    centred on the ``Nb`` candidates kept in the previous (next) frame. The
    union over frames is thresholded at ``tau`` and cut to the largest power
    of two not above ``N``. The reference always comes first.
    """
    return run_search(v, ref, params, spec)


def distance_stats(p1: np.ndarray, p2: np.ndarray, sigma: float, m: int | None = None):
    """Mean and variance of ``|q1 - q2|^2 / m`` for noisy copies of two patches.

    With independent N(0, sigma^2) noise on every pixel the normalized
    squared distance is a scaled non-central chi-square variable.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if m is None:
        m = p1.size
    delta = float(np.sum((p1 - p2) ** 2)) / m
    mean = delta + 2.0 * sigma**2
    var = 8.0 * sigma**2 / m * (sigma**2 + delta)
    return mean, var
