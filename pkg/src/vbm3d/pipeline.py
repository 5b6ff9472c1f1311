"""Two-step VBM3D: hard-thresholding basic estimate, then Wiener filtering.

Reference patches lie on a spatial grid of step ``st`` (the last row and
column are always included) in every frame that can hold a patch. Work is
split by reference frame: each frame accumulates into a private buffer and
the buffers are merged in frame order, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError
from .filtering import EPS, AggBuffer, kaiser_window, normalize
from .flow import FlowSequence
from .search import PatchSpec, SearchParams
from .vidio import Video
from .xform import DCMode, Spatial, Stack1D, TransformId, dc_mode_code, spatial_pair, validate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepParams:
    """Parameters of one step.

    ``d`` is given per spatial pixel and ``tau`` per pixel; :meth:`search`
    converts them to distance units for a given temporal patch depth.
    """

    k: int = 8
    N: int = 16
    Nf: int = 4
    Ns: int = 7
    Npr: int = 5
    Nb: int = 2
    d: float = 3.0
    tau: float = math.inf
    lambda3d: float = 2.7
    st: int = 4
    beta: float = 2.0
    spatial: Spatial = Spatial.DCT2D
    stack: Stack1D = Stack1D.HAAR
    dc: DCMode = DCMode.SINGLE

    def __post_init__(self):
        object.__setattr__(self, "spatial", Spatial(self.spatial))
        object.__setattr__(self, "stack", Stack1D(self.stack))
        object.__setattr__(self, "dc", DCMode(self.dc))
        if not 1 <= self.st <= self.k:
            raise ConfigError(f"grid step st={self.st} must lie in [1, k={self.k}]")
        if self.lambda3d < 0 or self.beta < 0 or self.d < 0:
            raise ConfigError("lambda3d, beta and d must be >= 0")
        validate(self.transform, self.k)
        self.search(1)

    @property
    def transform(self) -> TransformId:
        return TransformId(self.spatial, self.stack)

    def patch(self, kt: int = 1) -> PatchSpec:
        return PatchSpec(self.k, kt)

    def search(self, kt: int = 1) -> SearchParams:
        return SearchParams(
            N=self.N, Nf=self.Nf, Ns=self.Ns, Npr=self.Npr, Nb=self.Nb,
            d=self.d * self.k * self.k,
            tau=self.tau * kt * self.k * self.k,
        )


_INT_KEYS = {"k", "N", "Nf", "Ns", "Npr", "Nb", "st"}
_FLOAT_KEYS = {"d", "tau", "lambda3d", "beta"}
_STR_KEYS = {"spatial", "stack", "dc"}


@dataclass(frozen=True)
class ParamProfile:
    step1: StepParams
    step2: StepParams
    name: str = "custom"

    @classmethod
    def load(cls, name_or_path: str = "np") -> "ParamProfile":
        """Load a bundled profile by name or a profile file by path."""
        path = Path(name_or_path)
        if path.is_file():
            return cls.parse(path.read_text(), default_name=path.stem)
        bundled = resources.files("vbm3d") / "profiles" / f"{name_or_path}.cfg"
        if not bundled.is_file():
            raise ConfigError(f"unknown profile {name_or_path!r}")
        return cls.parse(bundled.read_text(), default_name=name_or_path)

    @classmethod
    def parse(cls, text: str, default_name: str = "custom") -> "ParamProfile":
        name = default_name
        steps: dict[str, dict] = {"step1": {}, "step2": {}}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"profile line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "name":
                name = value
                continue
            step, _, field = key.partition(".")
            if step not in steps or not field:
                raise ConfigError(f"profile line {lineno}: unknown key {key!r}")
            try:
                if field in _INT_KEYS:
                    steps[step][field] = int(value)
                elif field in _FLOAT_KEYS:
                    steps[step][field] = float(value)
                elif field in _STR_KEYS:
                    steps[step][field] = value
                else:
                    raise ConfigError(f"profile line {lineno}: unknown key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"profile line {lineno}: bad value {value!r}") from exc
        try:
            return cls(StepParams(**steps["step1"]), StepParams(**steps["step2"]), name)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def dumps(self) -> str:
        lines = [f"name = {self.name}"]
        for label in ("step1", "step2"):
            for f in dataclasses.fields(StepParams):
                value = getattr(getattr(self, label), f.name)
                if isinstance(value, (Spatial, Stack1D, DCMode)):
                    value = value.value
                lines.append(f"{label}.{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def replace(self, step1=None, step2=None, **both) -> "ParamProfile":
        """Copy with per-step overrides; keyword arguments apply to both steps."""
        s1 = dataclasses.replace(self.step1, **{**both, **(step1 or {})})
        s2 = dataclasses.replace(self.step2, **{**both, **(step2 or {})})
        return ParamProfile(s1, s2, self.name)


@dataclass(frozen=True, eq=False)
class PipelineMode:
    guided: bool = False
    st_patches: bool = False
    flows: FlowSequence | None = None

    def __post_init__(self):
        if self.guided and self.flows is None:
            raise ConfigError("flow-guided search needs forward and backward flows")

    @property
    def kt(self) -> int:
        return 2 if self.st_patches else 1

    @property
    def label(self) -> str:
        parts = [p for p, on in (("ST", self.st_patches), ("OF", self.guided)) if on]
        return "+".join(parts) or "plain"


def grid_positions(length: int, k: int, st: int) -> np.ndarray:
    """``0, st, 2 st, ...`` below ``length - k`` plus ``length - k`` itself."""
    last = length - k
    pos = list(range(0, last + 1, st))
    if pos[-1] != last:
        pos.append(last)
    return np.array(pos, dtype=np.int64)


def _run_step(search_vid: Video, noisy: Video, basic: Video | None, sigma: float,
              sp: StepParams, mode: PipelineMode, workers: int, wiener: bool) -> AggBuffer:
    T, H, W = noisy.shape
    if H < sp.k or W < sp.k:
        raise ConfigError(f"frames of {W}x{H} are smaller than the {sp.k}x{sp.k} patch")
    kt = min(mode.kt, T)
    params = sp.search(kt)
    A, S = spatial_pair(sp.spatial, sp.k)
    K = np.ascontiguousarray(kaiser_window(sp.k, sp.beta).values)
    gx = grid_positions(W, sp.k, sp.st)
    gy = grid_positions(H, sp.k, sp.st)
    guided = mode.guided and T > 1
    if guided:
        mode.flows.check(noisy)
        fflow, bflow = mode.flows.fwd, mode.flows.bwd
    else:
        fflow = bflow = np.zeros((1, 1, 1, 2))
    oracle = basic.data if wiener else noisy.data

    def work(t):
        return _kernels.filter_frame(
            search_vid.data, noisy.data, oracle, wiener, t, gx, gy,
            sp.k, kt, params.N, params.Nf, params.Ns, params.Npr, params.Nb,
            float(params.d), float(params.tau), guided, fflow, bflow,
            A, S, K, sp.lambda3d * sigma, sigma * sigma, EPS, dc_mode_code(sp.dc),
        )

    buf = AggBuffer.like(noisy)
    ref_frames = range(T - kt + 1)
    if workers <= 1:
        results = map(work, ref_frames)
        for num, den, t0 in results:
            buf.merge(num, den, t0)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map() yields in submission order, which fixes the merge order
            for num, den, t0 in pool.map(work, ref_frames):
                buf.merge(num, den, t0)
    return buf


def step1(v: Video, sigma: float, profile: ParamProfile, mode: PipelineMode = PipelineMode(),
          workers: int = 1) -> Video:
    """Basic estimate: hard thresholding of groups searched in the noisy video."""
    buf = _run_step(v, v, None, sigma, profile.step1, mode, workers, wiener=False)
    return normalize(buf, v)


def step2(v: Video, basic: Video, sigma: float, profile: ParamProfile,
          mode: PipelineMode = PipelineMode(), workers: int = 1) -> Video:
    """Final estimate: Wiener filtering with groups searched in the basic estimate."""
    if v.shape != basic.shape:
        raise ValueError("noisy and basic videos must be congruent")
    buf = _run_step(basic, v, basic, sigma, profile.step2, mode, workers, wiener=True)
    return normalize(buf, v)


def denoise(v: Video, sigma: float, profile: ParamProfile | None = None,
            mode: PipelineMode = PipelineMode(), workers: int = 1) -> tuple[Video, Video]:
    """Run both steps; returns ``(basic, final)``."""
    if profile is None:
        profile = ParamProfile.load("np")
    log.debug("step 1 on %r, sigma=%g, mode=%s", v, sigma, mode.label)
    basic = step1(v, sigma, profile, mode, workers)
    log.debug("step 2")
    final = step2(v, basic, sigma, profile, mode, workers)
    return basic, final
