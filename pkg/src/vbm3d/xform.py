"""Separable 3D/4D transforms applied to groups of patches.

A group of ``n`` patches of extent ``kt x k x k`` is transformed by

1. a 2D spatial transform on every ``k x k`` slice (orthonormal DCT-II or
   the bi-orthogonal spline wavelet bior1.5, full dyadic depth),
2. for spatio-temporal patches (``kt = 2``) a 2-point Haar across the two
   temporal slices of each patch,
3. a full dyadic orthonormal Haar transform across the ``n`` patches.

The spatial step is expressed as a pair of ``k x k`` analysis/synthesis
matrices so the compiled kernels only ever see matrix sandwiches.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError
from .search import PatchSpec


class Spatial(str, enum.Enum):
    DCT2D = "dct"
    BIOR15 = "bior1.5"


class Stack1D(str, enum.Enum):
    HAAR = "haar"


class DCMode(str, enum.Enum):
    """Which coefficients are exempt from hard thresholding."""

    SINGLE = "single"  # the one fully-DC coefficient of the group spectrum
    PER_SLICE = "per-slice"  # spatial DC of every slice of the stack spectrum


@dataclass(frozen=True)
class TransformId:
    spatial: Spatial = Spatial.DCT2D
    stack1d: Stack1D = Stack1D.HAAR

    def __post_init__(self):
        object.__setattr__(self, "spatial", Spatial(self.spatial))
        object.__setattr__(self, "stack1d", Stack1D(self.stack1d))


@dataclass
class GroupStack:
    """A group of patches (or its spectrum).

    ``coeffs`` has shape ``(n, kt, k, k)``; ``coords`` is an ``(n, 3)`` integer
    array of ``(x, y, t)`` corners with row 0 the reference patch.
    """

    spec: PatchSpec
    coeffs: np.ndarray
    coords: np.ndarray = field(default=None)

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=np.float64)
        n = self.coeffs.shape[0]
        if self.coeffs.shape[1:] != (self.spec.kt, self.spec.k, self.spec.k):
            raise ValueError(
                f"coeff shape {self.coeffs.shape} does not match patch spec {self.spec}"
            )
        if self.coords is None:
            self.coords = np.zeros((n, 3), dtype=np.int64)
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(n, 3)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    def with_coeffs(self, coeffs: np.ndarray) -> "GroupStack":
        return GroupStack(self.spec, coeffs, self.coords.copy())


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def dct_matrix(k: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; ``C @ x`` transforms a length-k column."""
    i = np.arange(k)[:, None]
    j = np.arange(k)[None, :]
    C = np.cos(np.pi * (2 * j + 1) * i / (2 * k)) * np.sqrt(2.0 / k)
    C[0, :] = np.sqrt(1.0 / k)
    return C


# bior1.5 analysis filters; low-pass taps are (3,-3,-22,22,128,128,22,-22,-3,3)/128/sqrt(2)
_BIOR15_LO = np.array([3, -3, -22, 22, 128, 128, 22, -22, -3, 3], dtype=float) / (
    128.0 * np.sqrt(2.0)
)
_BIOR15_HI = np.array([0, 0, 0, 0, -1, 1, 0, 0, 0, 0], dtype=float) / np.sqrt(2.0)


def _bior15_level(length: int) -> np.ndarray:
    # one periodized analysis level: rows [approximations; details]
    half = length // 2
    M = np.zeros((length, length))
    for i in range(half):
        for m in range(_BIOR15_LO.size):
            col = (2 * i + m - 4) % length
            M[i, col] += _BIOR15_LO[m]
            M[half + i, col] += _BIOR15_HI[m]
    return M


def bior15_matrix(k: int) -> np.ndarray:
    """Full-depth periodized bior1.5 analysis matrix (Mallat ordering).

    Row 0 is the coarsest scaling coefficient, followed by the detail bands
    from coarse to fine.
    """
    if not is_power_of_two(k) or k < 2:
        raise ConfigError(f"bior1.5 needs a dyadic patch size, got k={k}")
    A = np.eye(k)
    length = k
    while length > 1:
        level = np.eye(k)
        level[:length, :length] = _bior15_level(length)
        A = level @ A
        length //= 2
    return A


@functools.lru_cache(maxsize=None)
def spatial_pair(spatial: Spatial, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Read-only (analysis, synthesis) matrices for a spatial transform."""
    spatial = Spatial(spatial)
    if spatial is Spatial.DCT2D:
        A = dct_matrix(k)
        S = A.T.copy()
    else:
        A = bior15_matrix(k)
        S = np.linalg.inv(A)
    A = np.ascontiguousarray(A)
    S = np.ascontiguousarray(S)
    A.flags.writeable = False
    S.flags.writeable = False
    return A, S


def validate(tid: TransformId, k: int) -> None:
    if tid.spatial is Spatial.BIOR15 and not (is_power_of_two(k) and k >= 2):
        raise ConfigError(f"bior1.5 requires an even dyadic patch size; k={k} needs dct")


def _check_n(n: int) -> None:
    if not is_power_of_two(n):
        raise ValueError(f"group size must be a power of 2, got {n}")


def forward_3d(g: GroupStack, tid: TransformId) -> GroupStack:
    _check_n(g.n)
    validate(tid, g.spec.k)
    A, _ = spatial_pair(tid.spatial, g.spec.k)
    return g.with_coeffs(_kernels.forward_group(g.coeffs, A))


def inverse_3d(g: GroupStack, tid: TransformId) -> GroupStack:
    _check_n(g.n)
    validate(tid, g.spec.k)
    _, S = spatial_pair(tid.spatial, g.spec.k)
    return g.with_coeffs(_kernels.inverse_group(g.coeffs, S))


def dc_mask(spec: PatchSpec, n: int, tid: TransformId, mode: DCMode = DCMode.SINGLE):
    """Coefficient positions ``(slice, temporal, row, col)`` never thresholded."""
    mode = DCMode(mode)
    if mode is DCMode.SINGLE:
        return [(0, 0, 0, 0)]
    return [(s, 0, 0, 0) for s in range(n)]


def dc_mode_code(mode: DCMode) -> int:
    return 0 if DCMode(mode) is DCMode.SINGLE else 1
