"""Black-box multiscale wrapper around the video denoiser.

A spatial pyramid is built frame by frame (time is never downscaled), every
level is denoised independently and the results are recomposed from coarse
to fine, replacing the low frequencies of each level with those of the
coarser multiscale result.

Two pyramid kinds are available:

DCT
    Downscaling keeps the low-frequency quadrant (``ceil(n / 2)`` samples per
    axis) of the orthonormal 2D DCT; upscaling zero-pads the spectrum. Both
    are renormalized so constant images are preserved, which scales white
    noise by the same factor (``1/2`` per level for even sizes) and keeps it
    white. ``frec`` in [0, 1] is the fraction of DCT frequencies kept by the
    recomposition low-pass: 1 keeps everything, 0 nothing.
LANCZOS
    Lanczos-3 resampling on the even samples: the downscale filters with
    ``k3(x / 2) / 2`` and keeps samples ``0, 2, 4, ...``; the upscale
    interpolates with ``k3`` so even output samples reproduce the input.
    Borders use symmetric extension and weights are normalized to sum to 1.
    The recomposition low-pass is a Gaussian blur of standard deviation
    ``frec`` (0 is all-pass).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import gaussian_filter

from .errors import ConfigError
from .flow import resample_flows
from .pipeline import ParamProfile, PipelineMode, denoise
from .vidio import Video


class Kind(str, enum.Enum):
    DCT = "dct"
    LANCZOS = "lanczos"


@dataclass(frozen=True)
class PyramidKind:
    kind: Kind = Kind.LANCZOS
    scales: int = 2
    frec: float = 1.0
    ratio: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.scales < 1:
            raise ConfigError(f"need at least one scale, got {self.scales}")
        if self.ratio != 2:
            raise ConfigError("only a downsampling ratio of 2 is supported")
        if self.frec < 0 or (self.kind is Kind.DCT and self.frec > 1):
            raise ConfigError(f"frec={self.frec} outside the range of the {self.kind.value} pyramid")


def lanczos(x, a: int = 3):
    """``sinc(x) sinc(x / a)`` on ``|x| < a``, zero elsewhere."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < a, np.sinc(x) * np.sinc(x / a), 0.0)


def _coarse_len(n: int) -> int:
    return (n + 1) // 2


def _lanczos_down_matrix(n: int) -> np.ndarray:
    # rows: coarse samples at input positions 0, 2, 4, ...; columns: input samples
    m = _coarse_len(n)
    taps = np.arange(-5, 6)
    w = lanczos(taps / 2.0)
    w /= w.sum()
    M = np.zeros((m, n))
    for i in range(m):
        for tap, wt in zip(taps, w):
            M[i, _mirror(2 * i + tap, n)] += wt
    return M


def _lanczos_up_matrix(n_coarse: int, n: int) -> np.ndarray:
    M = np.zeros((n, n_coarse))
    for j in range(n):
        u = j / 2.0
        base = math.floor(u)
        idx = np.arange(base - 2, base + 4)
        w = lanczos(u - idx)
        w /= w.sum()
        for i, wt in zip(idx, w):
            if wt != 0.0:
                M[j, _mirror(int(i), n_coarse)] += wt
    return M


def _mirror(i: int, n: int) -> int:
    # half-sample symmetric extension: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    period = 2 * n
    i %= period
    return i if i < n else period - 1 - i


def downscale(frame: np.ndarray, kind: Kind) -> np.ndarray:
    frame = np.asarray(frame, dtype=float)
    h, w = frame.shape
    if h < 2 or w < 2:
        raise ConfigError(f"cannot downscale a {w}x{h} frame")
    h2, w2 = _coarse_len(h), _coarse_len(w)
    if Kind(kind) is Kind.DCT:
        spec = dctn(frame, norm="ortho")[:h2, :w2]
        return idctn(spec, norm="ortho") * math.sqrt(h2 * w2 / (h * w))
    return _lanczos_down_matrix(h) @ frame @ _lanczos_down_matrix(w).T


def upscale(frame: np.ndarray, kind: Kind, shape) -> np.ndarray:
    frame = np.asarray(frame, dtype=float)
    h2, w2 = frame.shape
    h, w = shape
    if _coarse_len(h) != h2 or _coarse_len(w) != w2:
        raise ConfigError(f"a {w2}x{h2} level cannot be upscaled to {w}x{h}")
    if Kind(kind) is Kind.DCT:
        spec = np.zeros((h, w))
        spec[:h2, :w2] = dctn(frame, norm="ortho")
        return idctn(spec, norm="ortho") * math.sqrt(h * w / (h2 * w2))
    return _lanczos_up_matrix(h2, h) @ frame @ _lanczos_up_matrix(w2, w).T


def lowpass(frame: np.ndarray, kind: Kind, frec: float) -> np.ndarray:
    frame = np.asarray(frame, dtype=float)
    if Kind(kind) is Kind.DCT:
        if frec >= 1:
            return frame.copy()
        h, w = frame.shape
        spec = dctn(frame, norm="ortho")
        spec[math.ceil(frec * h):, :] = 0.0
        spec[:, math.ceil(frec * w):] = 0.0
        return idctn(spec, norm="ortho")
    if frec == 0:
        return frame.copy()
    return gaussian_filter(frame, sigma=frec, mode="mirror")


def level_noise_factor(kind: Kind, shape) -> float:
    """Noise std ratio between a level and the level above it.

    Exact for the DCT pyramid. For Lanczos it is the product of the l2
    norms of the normalized decimation filters along both axes.
    """
    h, w = shape
    if Kind(kind) is Kind.DCT:
        return math.sqrt(_coarse_len(h) * _coarse_len(w) / (h * w))
    taps = lanczos(np.arange(-5, 6) / 2.0)
    taps /= taps.sum()
    return float(np.sum(taps**2))


def build_pyramid(v: Video, kind: Kind, scales: int) -> list[Video]:
    levels = [v]
    for _ in range(scales - 1):
        prev = levels[-1]
        levels.append(Video(np.stack([downscale(f, kind) for f in prev.data])))
    return levels


def recompose(single_scale: list[Video], kind: Kind, frec: float) -> Video:
    """Merge per-level results (finest first) into the multiscale estimate."""
    kind = Kind(kind)
    ms = single_scale[-1].data
    for s in range(len(single_scale) - 2, -1, -1):
        fine = single_scale[s].data
        coarse_shape = ms.shape[1:]
        if fine.shape[0] != ms.shape[0] or coarse_shape != (
                _coarse_len(fine.shape[1]), _coarse_len(fine.shape[2])):
            raise ConfigError(f"level {s + 1} of shape {ms.shape} does not match level {s} {fine.shape}")
        out = np.empty_like(fine)
        for t in range(fine.shape[0]):
            shape = fine.shape[1:]
            own_low = upscale(lowpass(downscale(fine[t], kind), kind, frec), kind, shape)
            coarse_low = upscale(lowpass(ms[t], kind, frec), kind, shape)
            out[t] = fine[t] - own_low + coarse_low
        ms = out
    return Video(ms)


def ms_denoise(v: Video, sigma: float, profile: ParamProfile | None, mode: PipelineMode,
               pyr: PyramidKind, workers: int = 1) -> Video:
    """Denoise every pyramid level with :func:`denoise` and recompose."""
    if profile is None:
        profile = ParamProfile.load("np")
    if pyr.scales == 1:
        return denoise(v, sigma, profile, mode, workers)[1]
    k = max(profile.step1.k, profile.step2.k)
    h, w = v.height, v.width
    feasible = 1
    while min(_coarse_len(h), _coarse_len(w)) >= k:
        h, w = _coarse_len(h), _coarse_len(w)
        feasible += 1
    if pyr.scales > feasible:
        raise ConfigError(
            f"{pyr.scales} scales requested but a {v.width}x{v.height} video "
            f"supports at most {feasible} with {k}x{k} patches"
        )
    levels = build_pyramid(v, pyr.kind, pyr.scales)
    outputs = []
    level_sigma = sigma
    for s, level in enumerate(levels):
        if s > 0:
            level_sigma *= level_noise_factor(pyr.kind, levels[s - 1].shape[1:])
        level_mode = mode
        if mode.guided and mode.flows is not None and v.frames > 1:
            level_mode = PipelineMode(mode.guided, mode.st_patches,
                                      resample_flows(mode.flows, level.shape[1:]))
        outputs.append(denoise(level, level_sigma, profile, level_mode, workers)[1])
    return recompose(outputs, pyr.kind, pyr.frec)
