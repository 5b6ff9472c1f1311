"""VBM3D video denoising and its flow-guided, spatio-temporal and multiscale variants."""

from .errors import ConfigError, FormatError
from .pipeline import ParamProfile, PipelineMode, StepParams, denoise, step1, step2
from .vidio import NoiseSpec, Video, add_awgn, load_sequence, psnr, save_sequence

__all__ = [
    "ConfigError",
    "FormatError",
    "NoiseSpec",
    "ParamProfile",
    "PipelineMode",
    "StepParams",
    "Video",
    "add_awgn",
    "denoise",
    "load_sequence",
    "psnr",
    "save_sequence",
    "step1",
    "step2",
]

__version__ = "0.1.0"
