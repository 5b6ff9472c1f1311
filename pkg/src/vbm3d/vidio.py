"""Grayscale video container, frame-sequence I/O, AWGN synthesis and PSNR.

Frame sequences are addressed with a printf-style pattern holding exactly one
integer conversion, e.g. ``"frames/f%03d.png"``. Supported containers:

* ``.png`` / ``.pgm`` (8 or 16 bit, read through Pillow). Export is 8 bit:
  samples are clamped to [0, 255] and rounded half up.
* ``.f32``: lossless float container for intermediate estimates. The file is
  the ASCII header ``"VF32\\n<width> <height>\\n"`` followed by the
  little-endian float32 raster in row-major order.

Noise is drawn from numpy's PCG64 bit generator seeded with the 64-bit seed,
Gaussian samples come from numpy's ziggurat ``standard_normal``.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, FormatError

_CONVERSION = re.compile(r"%(?:%|([-+ 0#]*\d*)(?:\.\d+)?([a-zA-Z]))")
_FLOAT_MAGIC = b"VF32"
FLOAT_EXT = ".f32"


@dataclass(frozen=True, eq=False)
class Video:
    """Planar grayscale frame stack, samples nominally in [0, 255].

    ``data`` has shape ``(frames, height, width)``, is float64 and read-only.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"a video needs shape (frames, height, width), got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def frame(self, t: int) -> np.ndarray:
        return self.data[t]

    def __repr__(self):
        return f"Video(frames={self.frames}, height={self.height}, width={self.width})"


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")


def check_pattern(pattern: str) -> None:
    """Raise ConfigError unless `pattern` has exactly one integer conversion."""
    convs = [m.group(2) for m in _CONVERSION.finditer(pattern) if m.group(0) != "%%"]
    if len(convs) != 1 or convs[0] not in ("d", "i", "u"):
        raise ConfigError(
            f"pattern {pattern!r} must contain exactly one integer conversion such as %03d"
        )


def frame_path(pattern: str, index: int) -> str:
    check_pattern(pattern)
    return pattern % index


def _read_frame(path: str) -> np.ndarray:
    if path.lower().endswith(FLOAT_EXT):
        return read_float_frame(path)
    try:
        with Image.open(path) as im:
            im.load()
            arr = np.array(im)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise FormatError(f"cannot decode {path}: {exc}") from exc
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel (grayscale) image, got shape {arr.shape}")
    return arr.astype(np.float64)


def read_float_frame(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        dims = fh.readline().split()
        raw = fh.read()
    if magic != _FLOAT_MAGIC or len(dims) != 2:
        raise FormatError(f"{path}: not a VF32 float frame")
    w, h = int(dims[0]), int(dims[1])
    if len(raw) != 4 * w * h:
        raise FormatError(f"{path}: truncated raster ({len(raw)} bytes for {w}x{h})")
    return np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(np.float64)


def write_float_frame(path: str, frame: np.ndarray) -> None:
    h, w = frame.shape
    with open(path, "wb") as fh:
        fh.write(_FLOAT_MAGIC + b"\n" + f"{w} {h}\n".encode())
        fh.write(np.ascontiguousarray(frame, dtype="<f4").tobytes())


def load_sequence(pattern: str, first: int, last: int) -> Video:
    """Read frames ``first..last`` (inclusive) of a printf-style sequence.

    Integer images are widened to float without rescaling.
    """
    check_pattern(pattern)
    if last < first:
        raise ConfigError(f"last frame {last} precedes first frame {first}")
    frames = []
    for i in range(first, last + 1):
        path = pattern % i
        if not os.path.isfile(path):
            raise FileNotFoundError(f"frame {i} missing: {path}")
        arr = _read_frame(path)
        if frames and arr.shape != frames[0].shape:
            raise FormatError(
                f"frame {i} has size {arr.shape[::-1]}, expected {frames[0].shape[::-1]}"
            )
        frames.append(arr)
    return Video(np.stack(frames))


def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(frame, 0.0, 255.0) + 0.5).astype(np.uint8)


def save_sequence(v: Video, pattern: str, first: int = 0) -> None:
    """Write every frame of `v`, numbering from `first`.

    The container follows the file extension; ``.f32`` is lossless for
    float32-representable samples, everything else is 8-bit.
    """
    check_pattern(pattern)
    for t in range(v.frames):
        path = pattern % (first + t)
        parent = Path(path).parent
        if not parent.is_dir():
            raise FileNotFoundError(f"output directory does not exist: {parent}")
        if path.lower().endswith(FLOAT_EXT):
            write_float_frame(path, v.data[t])
        else:
            Image.fromarray(to_uint8(v.data[t])).save(path)


def add_awgn(u: Video, spec: NoiseSpec) -> Video:
    """Return ``u + n`` with n i.i.d. N(0, sigma^2); samples are not clamped."""
    if spec.sigma == 0:
        return Video(u.data)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    noise = rng.standard_normal(u.shape) * spec.sigma
    return Video(u.data + noise)


def psnr(a: Video, b: Video, peak: float = 255.0) -> float:
    """PSNR over all pixels of all frames; ``math.inf`` for identical inputs."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)
