"""Structure-preserving reflectance estimation (SPRE).

Pipeline: SSW reconstruction -> SNR-optimal guide image from the channels
-> per-band guided filtering of the SSW output -> variance-matched mixing of
the filtered and unfiltered bands.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg
from scipy.ndimage import uniform_filter

from .errors import InvalidArgumentError
from .noise_lab import NoiseModel, build_noise_model
from .recon_spatial import SswFilter, apply_ssw, build_ssw
from .spectral_model import FilterBank, HyperCube, MultiCube, SpatialCovariance, SpectralPrior, second_moment

logger = logging.getLogger(__name__)

DEFAULT_GUIDE_BLOCK = 5
DEFAULT_THETA = 1e-3


@dataclass(frozen=True)
class GuideImage:
    data: np.ndarray
    weights: np.ndarray
    quotient: float


@dataclass(frozen=True)
class GuidedFilterParams:
    block_size: int = DEFAULT_GUIDE_BLOCK
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        b = self.block_size
        if int(b) != b or b < 1 or b % 2 == 0:
            raise InvalidArgumentError(f"guide block size must be a positive odd integer, got {b}")
        if not self.theta > 0:
            raise InvalidArgumentError(f"theta must be positive, got {self.theta}")


@dataclass(frozen=True)
class MixingState:
    noise_cov: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class SpreResult:
    cube: HyperCube
    ssw: HyperCube
    filtered: HyperCube
    guide: GuideImage
    mixing: MixingState


def _floored_variances(noise: NoiseModel, value_scale: float) -> np.ndarray:
    var = np.array(noise.variances, dtype=np.float64)
    floor = (1e-6 * value_scale) ** 2
    zero = var <= 0
    if np.any(zero):
        logger.debug("noise variance floored to %.3g on channels %s", floor, np.flatnonzero(zero).tolist())
        var[zero] = floor
    return var


def generate_guide(cube: MultiCube, noise: NoiseModel) -> GuideImage:
    """Weighted channel average with the highest signal-to-noise ratio.

    The weights maximise ``w^T K w / w^T N w`` where ``K`` is the noise-free
    second moment (observed moment minus ``N``, repaired to be PSD). They
    are the top generalized eigenvector, signed and scaled to sum to one.
    """
    m = cube.channels
    if noise.sigma.shape != (m,):
        raise InvalidArgumentError(f"noise model has {noise.sigma.size} channels, cube has {m}")
    nvar = _floored_variances(noise, cube.value_scale)
    K = second_moment(cube.pixels()) - np.diag(nvar)
    K = 0.5 * (K + K.T)
    vals, vecs = linalg.eigh(K)
    if vals[0] < 0:
        K = (vecs * np.maximum(vals, 0.0)) @ vecs.T
        K = 0.5 * (K + K.T)
    gvals, gvecs = linalg.eigh(K, np.diag(nvar))
    v = gvecs[:, -1]
    total = v.sum()
    if abs(total) <= 1e-12 * np.abs(v).sum():
        # weights cannot be normalised to sum one; fall back to unit l1 mass
        logger.warning("top eigenvector sums to ~0; normalising by its l1 norm instead")
        w = v * np.sign(v[np.argmax(np.abs(v))]) / np.abs(v).sum()
    else:
        w = v / total
    quotient = float(w @ K @ w / (w @ (nvar * w)))
    return GuideImage(cube.data @ w, w, quotient)


def box_mean(image: np.ndarray, size: int) -> np.ndarray:
    """Mean over ``size x size`` windows with mirrored borders."""
    return uniform_filter(np.asarray(image, dtype=np.float64), size=size, mode="reflect")


def guided_filter_channel(noisy, guide: Union[GuideImage, np.ndarray], params: GuidedFilterParams) -> np.ndarray:
    """Guided filter of one band against the guide image.

    Per window: ``a = cov(G, S) / (var(G) + theta)``, ``b = mean(S) - a mean(G)``;
    the output is ``box(a) * G + box(b)`` with the same window size.
    """
    S = np.asarray(noisy, dtype=np.float64)
    G = np.asarray(guide.data if isinstance(guide, GuideImage) else guide, dtype=np.float64)
    if S.shape != G.shape or S.ndim != 2:
        raise InvalidArgumentError(f"band {S.shape} and guide {G.shape} must be equal 2-D shapes")
    bg = params.block_size
    mean_g = box_mean(G, bg)
    mean_s = box_mean(S, bg)
    cov_gs = box_mean(G * S, bg) - mean_g * mean_s
    var_g = box_mean(G * G, bg) - mean_g * mean_g
    a = cov_gs / (var_g + params.theta)
    b = mean_s - a * mean_g
    return box_mean(a, bg) * G + box_mean(b, bg)


def guided_filter_cube(cube: HyperCube, guide: GuideImage, params: GuidedFilterParams) -> HyperCube:
    out = np.empty_like(cube.data)
    for i in range(cube.bands):
        out[:, :, i] = guided_filter_channel(cube.data[:, :, i], guide, params)
    return HyperCube(out)


def compute_hyperspectral_noise(ssw: SswFilter, noise: NoiseModel) -> np.ndarray:
    """Noise covariance of the SSW output, ``W (I (x) N) W^T``."""
    if noise.sigma.shape != (ssw.channels,):
        raise InvalidArgumentError(
            f"noise model has {noise.sigma.size} channels, filter expects {ssw.channels}"
        )
    nblk = ssw.block_size**2
    nvar = np.tile(noise.variances, nblk)
    W = ssw.weights
    cov = (W * nvar) @ W.T
    return 0.5 * (cov + cov.T)


def mix(ssw_cube: HyperCube, gf_cube: HyperCube, noise_cov) -> tuple:
    """Blend per band: ``z * SSW + (1 - z) * GF``.

    ``z_i = max(0, 1 - sqrt(N_ii / mean(delta_i^2)))`` with ``delta = SSW - GF``;
    ``z_i = 0`` when the bands are identical.
    """
    S, G = ssw_cube.data, gf_cube.data
    if S.shape != G.shape:
        raise InvalidArgumentError(f"cube shapes differ: {S.shape} vs {G.shape}")
    noise_cov = np.asarray(noise_cov, dtype=np.float64)
    if noise_cov.shape != (S.shape[2], S.shape[2]):
        raise InvalidArgumentError(f"noise covariance must be {S.shape[2]} square")
    delta = S - G
    power = np.mean(delta**2, axis=(0, 1))
    nhs = np.maximum(np.diag(noise_cov), 0.0)
    z = np.zeros(S.shape[2])
    live = power > 0
    z[live] = np.maximum(0.0, 1.0 - np.sqrt(nhs[live] / power[live]))
    out = z * S + (1.0 - z) * G
    return HyperCube(out), z


def spre_pipeline(
    cube: MultiCube,
    bank: FilterBank,
    prior: SpectralPrior,
    spatial: SpatialCovariance,
    noise: Optional[NoiseModel] = None,
    params: Optional[GuidedFilterParams] = None,
    backend: Optional[str] = None,
) -> SpreResult:
    """Run the full pipeline and keep every intermediate product."""
    params = params or GuidedFilterParams()
    if noise is None:
        noise = build_noise_model(cube)
    filt = build_ssw(bank, prior, spatial, noise)
    ssw_cube = apply_ssw(filt, cube, backend=backend)
    guide = generate_guide(cube, noise)
    filtered = guided_filter_cube(ssw_cube, guide, params)
    nhs = compute_hyperspectral_noise(filt, noise)
    out, z = mix(ssw_cube, filtered, nhs)
    return SpreResult(out, ssw_cube, filtered, guide, MixingState(nhs, z))


def reconstruct_spre(cube, bank, prior, spatial, noise=None, params=None, backend=None) -> HyperCube:
    return spre_pipeline(cube, bank, prior, spatial, noise, params, backend).cube


__all__ = [
    "GuideImage",
    "GuidedFilterParams",
    "MixingState",
    "SpreResult",
    "box_mean",
    "compute_hyperspectral_noise",
    "generate_guide",
    "guided_filter_channel",
    "guided_filter_cube",
    "mix",
    "reconstruct_spre",
    "spre_pipeline",
]
