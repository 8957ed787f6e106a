"""Hyperspectral reconstruction from noisy multispectral images."""

from .cube_io import forward_project, normalize_pair, read_cube, write_cube
from .errors import CubeFormatError, InvalidArgumentError, SingularSystemError, UndefinedMetricError
from .metrics_eval import EvalRecord, EvalReport, mse, run_benchmark, spectral_angle
from .noise_lab import (
    IntensitySchedule,
    NoiseModel,
    build_noise_model,
    estimate_noise_sigma,
    inject_poisson,
    oracle_noise_model,
)
from .pipeline import METHODS, ReconConfig, fitted_prior, reconstruct
from .recon_single import build_bpe, build_nsp, build_sp, build_wf
from .recon_spatial import apply_epssw, apply_ssw, build_ssw
from .recon_spre import spre_pipeline
from .scenes import SceneSpec, demo_scenes, generate_scene
from .spectral_model import (
    FilterBank,
    HyperCube,
    MultiCube,
    SpatialCovariance,
    SpectralPrior,
    default_filter_bank,
    estimate_scale_factor,
    make_trapezoid_bank,
)

__version__ = "0.1.0"
