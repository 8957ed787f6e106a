"""Block-based reconstructors: spatio-spectral Wiener (SSW) and its
edge-preserving variant (EPSSW).

Blocks are ``B x B`` neighbourhoods centred on each pixel, vectorised
row-major over pixels with the channels of one pixel kept together.
Borders use symmetric (mirror) padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import kernels
from .errors import InvalidArgumentError
from .recon_single import _check_rank, _prior_terms
from .spectral_model import FilterBank, HyperCube, MultiCube, SpatialCovariance, SpectralPrior

DEFAULT_BLOCK = 5
DEFAULT_DECAY = 0.97
DEFAULT_SPATIAL_VAR = 16.0
DEFAULT_RANGE_VAR = 0.4


@dataclass(frozen=True)
class SswFilter:
    """Pixel-independent block Wiener matrix, ``N x (B*B*M)``."""

    weights: np.ndarray
    block_size: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).view()
        if w.ndim != 2 or w.shape[1] % (self.block_size**2):
            raise InvalidArgumentError(
                f"weights of shape {w.shape} do not match block size {self.block_size}"
            )
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def bands(self) -> int:
        return self.weights.shape[0]

    @property
    def channels(self) -> int:
        return self.weights.shape[1] // self.block_size**2

    @property
    def picker(self) -> np.ndarray:
        """``N x (B*B*N)`` selector of the centre pixel's spectrum."""
        return center_picker(self.block_size, self.bands)

    def pixel_weights(self, k: int) -> np.ndarray:
        """``N x M`` slice acting on block pixel ``k`` (row-major index)."""
        m = self.channels
        return self.weights[:, k * m:(k + 1) * m]


@dataclass(frozen=True)
class BilateralWeights:
    weights: np.ndarray
    spatial_var: float
    range_var: float


def center_picker(block_size: int, bands: int) -> np.ndarray:
    nblk = block_size * block_size
    P = np.zeros((bands, nblk * bands))
    c = nblk // 2
    P[:, c * bands:(c + 1) * bands] = np.eye(bands)
    return P


def _check_block(block_size):
    if int(block_size) != block_size or block_size < 1 or block_size % 2 == 0:
        raise InvalidArgumentError(f"block size must be a positive odd integer, got {block_size}")
    return int(block_size)


def pad_symmetric(data: np.ndarray, radius: int) -> np.ndarray:
    """Mirror-pad the two spatial axes by ``radius`` (edge sample repeated)."""
    if radius == 0:
        return np.ascontiguousarray(data)
    return np.pad(data, ((radius, radius), (radius, radius), (0, 0)), mode="symmetric")


def build_ssw(bank: FilterBank, prior: SpectralPrior, spatial: SpatialCovariance, noise) -> SswFilter:
    """Precompute ``P K F^T (F K F^T + N)^-1`` for expanded ``F``, ``N``.

    ``K = K_s (x) d M^-1``; the Kronecker structure is used to form the
    blocks directly rather than materialising ``K``.
    """
    _check_rank(bank.matrix)
    nblk = spatial.block_size**2
    minv_ft, f_minv_ft = _prior_terms(bank, prior)
    d = prior.scale_d
    Ks = spatial.matrix
    c = nblk // 2
    # P K F^T = (row c of K_s) (x) (d M^-1 F^T)
    cross = np.kron(Ks[c:c + 1], d * minv_ft)
    A = np.kron(Ks, d * f_minv_ft) + np.kron(np.eye(nblk), np.diag(noise.variances))
    A = 0.5 * (A + A.T)
    W = linalg.cho_solve(linalg.cho_factor(A), cross.T).T
    return SswFilter(W, spatial.block_size)


def apply_ssw(filt: SswFilter, cube: MultiCube, backend: str | None = None) -> HyperCube:
    """Apply the block Wiener matrix to the neighbourhood of every pixel."""
    b = filt.block_size
    if cube.channels != filt.channels:
        raise InvalidArgumentError(f"cube has {cube.channels} channels, filter expects {filt.channels}")
    if cube.height < b or cube.width < b:
        raise InvalidArgumentError(f"cube {cube.height}x{cube.width} is smaller than the {b}x{b} block")
    padded = pad_symmetric(cube.data, b // 2)
    out = kernels.get_backend(backend).block_apply(padded, filt.weights, b)
    return HyperCube(out)


def compute_bilateral_weights(block, center, spatial_var: float, range_var: float) -> BilateralWeights:
    """Normalised bilateral weights of a ``B x B x M`` block around ``center``.

    ``w(u, v) ~ exp(-|(u, v) - mid|^2 / (2 s)) * exp(-|C(u, v) - center|^2 / (2 r))``
    with ``s = spatial_var`` and ``r = range_var``; the weights sum to one.
    """
    block = np.asarray(block, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if not (spatial_var > 0 and range_var > 0):
        raise InvalidArgumentError("bilateral variances must be positive")
    b = block.shape[0]
    r = b // 2
    yy, xx = np.mgrid[0:b, 0:b]
    spatial = np.exp(-((yy - r) ** 2 + (xx - r) ** 2) / (2.0 * spatial_var))
    rng = np.exp(-np.sum((block - center) ** 2, axis=-1) / (2.0 * range_var))
    w = spatial * rng
    return BilateralWeights(w / w.sum(), float(spatial_var), float(range_var))


def apply_epssw(
    bank: FilterBank,
    prior: SpectralPrior,
    noise,
    cube: MultiCube,
    *,
    spatial_var: float = DEFAULT_SPATIAL_VAR,
    range_var: float = DEFAULT_RANGE_VAR,
    block: int = DEFAULT_BLOCK,
    backend: str | None = None,
) -> HyperCube:
    """Edge-preserving spatio-spectral Wiener reconstruction.

    Per pixel, the channels are first denoised by a Wiener filter built from
    the bilateral-weighted block statistics, then reconstructed by a spectral
    Wiener filter that sees the denoiser's residual noise covariance. See
    :func:`specrecon._kernels_py.epssw_apply` for the exact construction.
    """
    b = _check_block(block)
    if not (spatial_var > 0 and range_var > 0):
        raise InvalidArgumentError("bilateral variances must be positive")
    if cube.channels != bank.num_channels:
        raise InvalidArgumentError(f"cube has {cube.channels} channels, bank has {bank.num_channels}")
    if cube.height < b or cube.width < b:
        raise InvalidArgumentError(f"cube {cube.height}x{cube.width} is smaller than the {b}x{b} block")
    _check_rank(bank.matrix)
    minv_ft, f_minv_ft = _prior_terms(bank, prior)
    d = prior.scale_d
    padded = pad_symmetric(cube.data, b // 2)
    out = kernels.get_backend(backend).epssw_apply(
        padded, b, float(spatial_var), float(range_var),
        np.asarray(noise.variances, dtype=np.float64), d * minv_ft, d * f_minv_ft,
    )
    return HyperCube(out)


__all__ = [
    "BilateralWeights",
    "DEFAULT_BLOCK",
    "DEFAULT_DECAY",
    "DEFAULT_RANGE_VAR",
    "DEFAULT_SPATIAL_VAR",
    "SswFilter",
    "apply_epssw",
    "apply_ssw",
    "build_ssw",
    "center_picker",
    "compute_bilateral_weights",
    "pad_symmetric",
]
