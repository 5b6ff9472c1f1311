"""Optical flow: .flo I/O, rescaling, trajectories and flow-guided search.

Flow vectors are ``(dx, dy)`` in pixels. A forward flow at frame ``t`` sends a
point of frame ``t`` to its position in frame ``t + 1``; a backward flow at
frame ``t`` sends it to frame ``t - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import FormatError
from .search import MatchList, PatchCoord, PatchSpec, SearchParams, run_search
from .vidio import Video

FLO_MAGIC = 202021.25


@dataclass(frozen=True, eq=False)
class FlowField:
    """Dense displacement field; ``uv`` has shape (height, width, 2)."""

    uv: np.ndarray
    direction: str = "forward"

    def __post_init__(self):
        uv = np.array(self.uv, dtype=np.float64, copy=True)
        if uv.ndim != 3 or uv.shape[2] != 2:
            raise ValueError(f"flow must have shape (h, w, 2), got {uv.shape}")
        if not np.all(np.isfinite(uv)):
            raise ValueError("flow contains non-finite values")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"unknown flow direction {self.direction!r}")
        uv.flags.writeable = False
        object.__setattr__(self, "uv", uv)

    @property
    def height(self) -> int:
        return self.uv.shape[0]

    @property
    def width(self) -> int:
        return self.uv.shape[1]

    @property
    def u(self) -> np.ndarray:
        return self.uv[..., 0]

    @property
    def v(self) -> np.ndarray:
        return self.uv[..., 1]


class FlowSequence:
    """Forward flows for frames 0..f-1 and backward flows for frames 1..f."""

    def __init__(self, forward, backward):
        fwd = [f.uv if isinstance(f, FlowField) else np.asarray(f) for f in forward]
        bwd = [f.uv if isinstance(f, FlowField) else np.asarray(f) for f in backward]
        if len(fwd) != len(bwd):
            raise ValueError(f"{len(fwd)} forward flows but {len(bwd)} backward flows")
        shapes = {a.shape for a in fwd + bwd}
        if len(shapes) > 1:
            raise ValueError(f"flows of different sizes: {sorted(shapes)}")
        if fwd:
            self.fwd = np.ascontiguousarray(np.stack(fwd), dtype=np.float64)
            self.bwd = np.ascontiguousarray(np.stack(bwd), dtype=np.float64)
        else:
            self.fwd = np.zeros((0, 1, 1, 2))
            self.bwd = np.zeros((0, 1, 1, 2))
        self.fwd.flags.writeable = False
        self.bwd.flags.writeable = False

    @classmethod
    def zeros(cls, frames: int, height: int, width: int) -> "FlowSequence":
        z = [np.zeros((height, width, 2))] * (frames - 1)
        return cls(z, z)

    @property
    def frames(self) -> int:
        return self.fwd.shape[0] + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.fwd.shape[1:3]

    def forward(self, t: int) -> FlowField:
        return FlowField(self.fwd[t], "forward")

    def backward(self, t: int) -> FlowField:
        """Flow from frame `t` (>= 1) to frame ``t - 1``."""
        return FlowField(self.bwd[t - 1], "backward")

    def check(self, v: Video) -> None:
        if v.frames > 1 and (self.frames != v.frames or self.shape != (v.height, v.width)):
            raise ValueError(
                f"flows cover {self.frames} frames of {self.shape}, video is {v!r}"
            )


def write_flo(path, flow: FlowField) -> None:
    with open(path, "wb") as fh:
        np.array([FLO_MAGIC], "<f4").tofile(fh)
        np.array([flow.width, flow.height], "<i4").tofile(fh)
        np.ascontiguousarray(flow.uv, "<f4").tofile(fh)


def load_flo(path, direction: str = "forward") -> FlowField:
    """Read a Middlebury .flo file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise FormatError(f"{path}: too short for a .flo header")
    magic = np.frombuffer(raw, "<f4", 1)[0]
    if magic != np.float32(FLO_MAGIC):
        raise FormatError(f"{path}: bad .flo magic {magic}")
    w, h = (int(a) for a in np.frombuffer(raw, "<i4", 2, offset=4))
    if w < 1 or h < 1 or len(raw) != 12 + 8 * w * h:
        raise FormatError(f"{path}: truncated or oversized raster for {w}x{h}")
    uv = np.frombuffer(raw, "<f4", 2 * w * h, offset=12).reshape(h, w, 2)
    return FlowField(uv.astype(np.float64), direction)


def _bilinear_axis(n_src: int, n_dst: int, scale: float):
    # centre-aligned sampling: dst i <-> src (i + 0.5) * scale - 0.5
    pos = (np.arange(n_dst) + 0.5) * scale - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, pos - i0


def _resize(uv: np.ndarray, out_h: int, out_w: int, sy: float, sx: float) -> np.ndarray:
    h, w = uv.shape[:2]
    y0, y1, fy = _bilinear_axis(h, out_h, sy)
    x0, x1, fx = _bilinear_axis(w, out_w, sx)
    rows = uv[y0] * (1 - fy)[:, None, None] + uv[y1] * fy[:, None, None]
    return rows[:, x0] * (1 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]


def upscale_flow(flow: FlowField, factor: int, shape=None) -> FlowField:
    """Bilinear upsampling by an integer factor; vectors are multiplied by it.

    `shape` optionally crops the output to ``(height, width)`` when the full
    resolution frame size is not an exact multiple of the factor.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1 and shape is None:
        return flow
    out_h, out_w = shape if shape is not None else (flow.height * factor, flow.width * factor)
    uv = _resize(flow.uv, out_h, out_w, 1.0 / factor, 1.0 / factor) * factor
    return FlowField(uv, flow.direction)


def resample_flows(flows: FlowSequence, shape) -> FlowSequence:
    """Resize every flow of a sequence to ``(height, width)``, rescaling vectors."""
    h, w = flows.shape
    out_h, out_w = shape
    if (h, w) == (out_h, out_w):
        return flows
    sy, sx = h / out_h, w / out_w

    def one(uv):
        r = _resize(uv, out_h, out_w, sy, sx)
        r[..., 0] /= sx
        r[..., 1] /= sy
        return r

    return FlowSequence([one(a) for a in flows.fwd], [one(a) for a in flows.bwd])


def trajectory(flows: FlowSequence, start: PatchCoord, N_f: int,
               spec: PatchSpec = PatchSpec(1, 1)) -> list[tuple[int, int, int]]:
    """Window centres ``(x, y, t)`` along the flow through `start`, ordered by t.

    Positions accumulate as reals; the flow is sampled at the position rounded
    half up, and positions are clamped so the patch stays inside the frame.
    """
    T = flows.frames
    H, W = flows.shape
    if not 0 <= start.t < T:
        raise IndexError(f"start frame {start.t} outside 0..{T - 1}")
    ox = np.zeros(T, np.int64)
    oy = np.zeros(T, np.int64)
    _kernels.trajectory_core(flows.fwd, flows.bwd, start.x, start.y, start.t, N_f,
                             spec.k, spec.kt, T, H, W, ox, oy)
    lo = max(start.t - N_f, 0)
    hi = min(start.t + N_f, T - spec.kt)
    return [(int(ox[t]), int(oy[t]), t) for t in range(lo, max(hi, start.t) + 1)]


def block_matching_flow(a: np.ndarray, b: np.ndarray, block: int = 8, radius: int = 4,
                        subpixel: bool = False) -> FlowField:
    """Per-block displacement from `a` to `b` minimising the SSD.

    Candidates reaching outside `b` read edge-replicated samples. Ties
    prefer the smaller displacement, then smaller (dy, dx). With `subpixel`
    each axis is refined by a parabola fit through the neighbouring SSDs
    (offset clamped to +-0.5). Every pixel takes the vector of its block.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("frames must be congruent 2D arrays")
    return FlowField(_kernels.block_matching(a, b, int(block), int(radius), bool(subpixel)))


def area_downscale(frame: np.ndarray, factor: int) -> np.ndarray:
    """Mean over factor x factor cells; borders are padded by edge replication."""
    if factor == 1:
        return np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    hh = math.ceil(h / factor) * factor
    ww = math.ceil(w / factor) * factor
    padded = np.pad(frame, ((0, hh - h), (0, ww - w)), mode="edge")
    return padded.reshape(hh // factor, factor, ww // factor, factor).mean(axis=(1, 3))


def estimate_flows(v: Video, scale: int = 2, block: int = 16, radius: int = 3,
                   subpixel: bool = True) -> FlowSequence:
    """Forward/backward block-matching flows computed at 1/scale resolution.

    Large blocks on a half-resolution copy keep the estimate usable at high
    noise levels; vectors are refined to sub-pixel precision by default and
    bilinearly upscaled to the full frame size.
    """
    small = [area_downscale(v.data[t], scale) for t in range(v.frames)]
    fwd, bwd = [], []
    shape = (v.height, v.width)
    for t in range(v.frames - 1):
        f = block_matching_flow(small[t], small[t + 1], block, radius, subpixel)
        g = block_matching_flow(small[t + 1], small[t], block, radius, subpixel)
        fwd.append(upscale_flow(f, scale, shape))
        bwd.append(upscale_flow(FlowField(g.uv, "backward"), scale, shape))
    return FlowSequence(fwd, bwd)


def guided_search(v: Video, ref: PatchCoord, params: SearchParams, spec: PatchSpec,
                  flows: FlowSequence) -> MatchList:
    """Group search whose per-frame window follows the flow trajectory of `ref`.

    Every non-reference frame is searched in a single ``Npr`` window centred
    on the trajectory; the rest matches :func:`predictive_search`.
    """
    flows.check(v)
    if v.frames == 1:
        return run_search(v, ref, params, spec)
    return run_search(v, ref, params, spec, flows.fwd, flows.bwd)
