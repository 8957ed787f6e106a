"""Method registry: one entry point for every reconstructor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import InvalidArgumentError
from .noise_lab import NoiseModel
from .recon_single import apply_single_pixel, build_bpe, build_nsp, build_sp, build_wf
from .recon_spatial import (
    DEFAULT_BLOCK,
    DEFAULT_DECAY,
    DEFAULT_RANGE_VAR,
    DEFAULT_SPATIAL_VAR,
    apply_epssw,
    apply_ssw,
    build_ssw,
)
from .recon_spre import DEFAULT_GUIDE_BLOCK, DEFAULT_THETA, GuidedFilterParams, spre_pipeline
from .spectral_model import (
    DEFAULT_ALPHA,
    DEFAULT_ORDER,
    FilterBank,
    HyperCube,
    MultiCube,
    SpectralPrior,
    estimate_scale_factor,
    make_spatial_covariance,
)

METHODS = ("sp", "bpe", "nsp", "wf", "ssw", "epssw", "spre")


@dataclass(frozen=True)
class ReconConfig:
    """Hyperparameters shared by all methods (each method reads what it needs)."""

    order: int = DEFAULT_ORDER
    alpha: float = DEFAULT_ALPHA
    block: int = DEFAULT_BLOCK
    decay: float = DEFAULT_DECAY
    spatial_var: float = DEFAULT_SPATIAL_VAR
    range_var: float = DEFAULT_RANGE_VAR
    guide_block: int = DEFAULT_GUIDE_BLOCK
    theta: float = DEFAULT_THETA
    backend: Optional[str] = None

    def prior(self, bands: int, scale_d: float = 1.0) -> SpectralPrior:
        return SpectralPrior(bands, order=self.order, alpha=self.alpha, scale_d=scale_d)


def fitted_prior(cube: MultiCube, bank: FilterBank, noise: NoiseModel, config: ReconConfig) -> SpectralPrior:
    """Prior with its scale factor fitted to ``cube``."""
    prior = config.prior(bank.num_bands)
    return prior.with_scale(estimate_scale_factor(cube, bank, prior, noise))


def reconstruct(
    method: str,
    cube: MultiCube,
    bank: FilterBank,
    noise: NoiseModel,
    config: ReconConfig = ReconConfig(),
    prior: Optional[SpectralPrior] = None,
    details: bool = False,
):
    """Reconstruct a hyperspectral cube with ``method``.

    When ``prior`` is omitted its scale factor is fitted to the cube. With
    ``details=True`` the SPRE method returns its full
    :class:`~specrecon.recon_spre.SpreResult`.
    """
    method = method.lower()
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if prior is None:
        prior = fitted_prior(cube, bank, noise, config)
    if method == "sp":
        return apply_single_pixel(build_sp(bank, prior), cube)
    if method == "bpe":
        return apply_single_pixel(build_bpe(bank), cube)
    if method == "nsp":
        return apply_single_pixel(build_nsp(bank, prior, noise), cube)
    if method == "wf":
        return apply_single_pixel(build_wf(bank, prior, noise), cube)
    if method == "ssw":
        spatial = make_spatial_covariance(config.block, config.decay)
        return apply_ssw(build_ssw(bank, prior, spatial, noise), cube, backend=config.backend)
    if method == "epssw":
        return apply_epssw(
            bank, prior, noise, cube,
            spatial_var=config.spatial_var, range_var=config.range_var,
            block=config.block, backend=config.backend,
        )
    spatial = make_spatial_covariance(config.block, config.decay)
    result = spre_pipeline(
        cube, bank, prior, spatial, noise,
        GuidedFilterParams(config.guide_block, config.theta), backend=config.backend,
    )
    return result if details else result.cube


__all__ = ["METHODS", "ReconConfig", "fitted_prior", "reconstruct"]
