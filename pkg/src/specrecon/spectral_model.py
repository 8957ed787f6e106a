"""Cubes, filter banks, the smoothness prior and the structural matrices.

Everything that is shared by the reconstructors lives here: the raster
containers, the filter matrix, the difference-based prior ``M = D^T D + alpha I``
with its scale factor, and the separable spatial covariance used by the
block Wiener filter.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

#: Lower bound applied to the estimated prior scale factor.
D_FLOOR = 1e-8

DEFAULT_ALPHA = 1e-4
REAL_CAMERA_ALPHA = 1e-5
DEFAULT_ORDER = 2


def _readonly(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64).view()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class _Cube:
    data: np.ndarray
    wavelengths: Optional[np.ndarray] = None
    value_scale: float = 1.0

    def __post_init__(self):
        data = _readonly(self.data)
        if data.ndim != 3:
            raise InvalidArgumentError(f"cube data must be H x W x B, got shape {data.shape}")
        if min(data.shape) < 1:
            raise InvalidArgumentError(f"cube dimensions must be positive, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("cube contains non-finite values")
        object.__setattr__(self, "data", data)
        if self.wavelengths is not None:
            wl = _readonly(self.wavelengths)
            if wl.shape != (data.shape[2],):
                raise InvalidArgumentError(
                    f"expected {data.shape[2]} wavelengths, got {wl.shape}"
                )
            object.__setattr__(self, "wavelengths", wl)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def pixels(self) -> np.ndarray:
        """Return the cube as a ``(H*W, B)`` matrix, row-major over pixels."""
        return self.data.reshape(-1, self.data.shape[2])


@dataclass(frozen=True)
class HyperCube(_Cube):
    """H x W x N raster holding one sampled spectrum per pixel.

    Reconstruction outputs may contain negative values; no clamping is
    applied anywhere in the reconstructors.
    """

    @property
    def bands(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class MultiCube(_Cube):
    """H x W x M raster of filtered channel measurements."""

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class FilterBank:
    """M x N filter matrix with the wavelength grid it is sampled on.

    Parameters
    ----------
    matrix : array_like, shape (M, N)
        Nonnegative transmittances, one filter per row.
    wavelengths : array_like, shape (N,)
        Strictly increasing sampling grid in nanometers.
    """

    matrix: np.ndarray
    wavelengths: np.ndarray

    def __post_init__(self):
        F = _readonly(self.matrix)
        wl = _readonly(self.wavelengths)
        if F.ndim != 2:
            raise InvalidArgumentError(f"filter matrix must be 2-D, got shape {F.shape}")
        m, n = F.shape
        if m < 1 or n < m:
            raise InvalidArgumentError(f"need 1 <= M <= N, got M={m}, N={n}")
        if wl.shape != (n,):
            raise InvalidArgumentError(f"expected {n} wavelengths, got shape {wl.shape}")
        if np.any(np.diff(wl) <= 0):
            raise InvalidArgumentError("wavelengths must be strictly increasing")
        if not np.all(np.isfinite(F)) or np.any(F < 0):
            raise InvalidArgumentError("filter matrix must be finite and nonnegative")
        dead = np.flatnonzero(~np.any(F != 0, axis=1))
        if dead.size:
            raise InvalidArgumentError(f"filter rows {dead.tolist()} are all zero")
        object.__setattr__(self, "matrix", F)
        object.__setattr__(self, "wavelengths", wl)

    @property
    def num_channels(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_bands(self) -> int:
        return self.matrix.shape[1]

    def expanded(self, blocks: int) -> np.ndarray:
        """Block-diagonal filter matrix for ``blocks`` stacked pixels."""
        return expand_block_diagonal(self.matrix, blocks)

    @classmethod
    def from_csv(cls, path) -> "FilterBank":
        """Load a bank stored as wavelengths on the first row, one filter per row after."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        if len(rows) < 2:
            raise InvalidArgumentError(f"{path}: need a wavelength row and at least one filter")
        try:
            values = [[float(c) for c in r] for r in rows]
        except ValueError as exc:
            raise InvalidArgumentError(f"{path}: non-numeric entry ({exc})") from None
        if len({len(r) for r in values}) != 1:
            raise InvalidArgumentError(f"{path}: rows have different lengths")
        return cls(np.array(values[1:]), np.array(values[0]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([repr(float(w)) for w in self.wavelengths])
            for row in self.matrix:
                writer.writerow([repr(float(v)) for v in row])


def wavelength_grid(start: float = 440.0, stop: float = 920.0, count: int = 49) -> np.ndarray:
    """Uniform grid, both ends inclusive (defaults: 440-920 nm in 49 samples)."""
    return np.linspace(start, stop, count)


def trapezoid_response(breakpoints: Sequence[float], peak: float, wavelengths) -> np.ndarray:
    """Sample one trapezoid ``0 -> peak -> peak -> 0`` onto ``wavelengths``.

    ``breakpoints`` are the four corners ``(a, b, c, d)`` with
    ``a <= b <= c <= d``; ``a == b`` and ``c == d`` give a rectangle.
    """
    a, b, c, d = (float(v) for v in breakpoints)
    if not a <= b <= c <= d or a == d:
        raise InvalidArgumentError(f"trapezoid breakpoints must increase, got {breakpoints}")
    if peak <= 0:
        raise InvalidArgumentError(f"trapezoid peak must be positive, got {peak}")
    wl = np.asarray(wavelengths, dtype=np.float64)
    out = np.zeros_like(wl)
    out[(wl >= b) & (wl <= c)] = 1.0
    if b > a:
        rise = (wl > a) & (wl < b)
        out[rise] = (wl[rise] - a) / (b - a)
    if d > c:
        fall = (wl > c) & (wl < d)
        out[fall] = (d - wl[fall]) / (d - c)
    return peak * out


def make_trapezoid_bank(spec, wavelengths) -> FilterBank:
    """Build a bank from trapezoid descriptions.

    ``spec`` is a list of ``{"breakpoints": [a, b, c, d], "peak": p}``
    mappings, a mapping with such a list under ``"filters"``, or a path to a
    JSON file holding either form. Breakpoints must lie inside the grid.
    """
    if isinstance(spec, (str, Path)):
        spec = json.loads(Path(spec).read_text())
    if isinstance(spec, dict):
        spec = spec.get("filters", [])
    wl = np.asarray(wavelengths, dtype=np.float64)
    if not spec:
        raise InvalidArgumentError("trapezoid spec holds no filters")
    rows = []
    for i, item in enumerate(spec):
        bp = item["breakpoints"]
        if len(bp) != 4:
            raise InvalidArgumentError(f"filter {i}: need four breakpoints, got {len(bp)}")
        if min(bp) < wl[0] or max(bp) > wl[-1]:
            raise InvalidArgumentError(
                f"filter {i}: breakpoints {list(bp)} outside grid [{wl[0]}, {wl[-1]}]"
            )
        rows.append(trapezoid_response(bp, float(item.get("peak", 1.0)), wl))
    return FilterBank(np.array(rows), wl)


def default_trapezoid_spec(wavelengths=None, count: int = 9) -> list:
    """Nine overlapping band-pass trapezoids tiling the visible/NIR range."""
    wl = wavelength_grid() if wavelengths is None else np.asarray(wavelengths, float)
    lo, hi = float(wl[0]), float(wl[-1])
    ramp, half_top = 20.0, 30.0
    centers = np.linspace(lo + ramp + half_top, hi - ramp - half_top, count)
    return [
        {
            "breakpoints": [c - half_top - ramp, c - half_top, c + half_top, c + half_top + ramp],
            "peak": 1.0,
        }
        for c in centers
    ]


def default_filter_bank(wavelengths=None) -> FilterBank:
    """The 9 x 49 trapezoid bank used by the CLI and the benchmark."""
    wl = wavelength_grid() if wavelengths is None else np.asarray(wavelengths, float)
    return make_trapezoid_bank(default_trapezoid_spec(wl), wl)


def make_difference_matrix(order: int, bands: int) -> np.ndarray:
    """First- or second-order finite-difference matrix.

    ``order=1`` gives the ``(N-1) x N`` matrix with rows ``[.. 1 -1 ..]``;
    ``order=2`` is the product of the ``(N-2) x (N-1)`` and ``(N-1) x N``
    first-difference matrices.
    """
    if order not in (1, 2):
        raise InvalidArgumentError(f"difference order must be 1 or 2, got {order}")
    if bands < order + 1:
        raise InvalidArgumentError(f"need at least {order + 1} bands for order {order}, got {bands}")

    def first(n):
        return np.eye(n - 1, n) - np.eye(n - 1, n, k=1)

    if order == 1:
        return first(bands)
    return first(bands - 1) @ first(bands)


@dataclass(frozen=True)
class SpectralPrior:
    """Smoothness prior ``M = D^T D + alpha I`` and its scale factor ``d``.

    The spectral covariance used by every Wiener-type reconstructor is
    ``d * M^-1``.
    """

    bands: int
    order: int = DEFAULT_ORDER
    alpha: float = DEFAULT_ALPHA
    scale_d: float = 1.0
    diff_matrix: np.ndarray = field(init=False, repr=False, compare=False)
    prior_matrix: np.ndarray = field(init=False, repr=False, compare=False)
    _chol: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidArgumentError(f"alpha must be positive, got {self.alpha}")
        if not self.scale_d > 0:
            raise InvalidArgumentError(f"scale_d must be positive, got {self.scale_d}")
        D = _readonly(make_difference_matrix(self.order, self.bands))
        M = _readonly(D.T @ D + self.alpha * np.eye(self.bands))
        object.__setattr__(self, "diff_matrix", D)
        object.__setattr__(self, "prior_matrix", M)
        object.__setattr__(self, "_chol", linalg.cho_factor(M))

    def with_scale(self, scale_d: float) -> "SpectralPrior":
        return replace(self, scale_d=float(scale_d))

    def solve(self, rhs) -> np.ndarray:
        """Return ``M^-1 @ rhs``."""
        return linalg.cho_solve(self._chol, rhs)

    def covariance(self) -> np.ndarray:
        """Spectral covariance ``K_r = d * M^-1`` (dense, symmetric)."""
        K = self.scale_d * self.solve(np.eye(self.bands))
        return 0.5 * (K + K.T)


@dataclass(frozen=True)
class SpatialCovariance:
    """Separable first-order Markov covariance over a ``B x B`` block."""

    block_size: int
    decay: float
    matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(_markov_kron(self.block_size, self.decay)))

    @property
    def row_covariance(self) -> np.ndarray:
        return markov_matrix(self.block_size, self.decay)


def markov_matrix(size: int, decay: float) -> np.ndarray:
    """Toeplitz matrix with entries ``decay**|i-j|``."""
    idx = np.arange(size)
    return np.power(float(decay), np.abs(idx[:, None] - idx[None, :]))


def _markov_kron(block_size, decay):
    if int(block_size) != block_size or block_size < 1 or block_size % 2 == 0:
        raise InvalidArgumentError(f"block size must be a positive odd integer, got {block_size}")
    if not 0.0 <= decay < 1.0:
        raise InvalidArgumentError(f"decay must lie in [0, 1), got {decay}")
    R = markov_matrix(int(block_size), decay)
    return np.kron(R, R)


def make_spatial_covariance(block_size: int, decay: float) -> SpatialCovariance:
    return SpatialCovariance(int(block_size), float(decay))


def expand_block_diagonal(A, blocks: int) -> np.ndarray:
    """Return ``I_blocks (x) A``: ``A`` repeated along the block diagonal."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if int(blocks) != blocks or blocks < 1:
        raise InvalidArgumentError(f"blocks must be a positive integer, got {blocks}")
    return np.kron(np.eye(int(blocks)), A)


def make_combined_covariance(spatial: SpatialCovariance, prior: SpectralPrior) -> np.ndarray:
    """Spatio-spectral covariance ``K_s (x) (d * M^-1)``."""
    return np.kron(spatial.matrix, prior.covariance())


def second_moment(pixels: np.ndarray) -> np.ndarray:
    """Mean of ``c c^T`` over the rows of a ``(P, M)`` pixel matrix."""
    pixels = np.asarray(pixels, dtype=np.float64)
    K = pixels.T @ pixels / pixels.shape[0]
    return 0.5 * (K + K.T)


def estimate_scale_factor(cube: MultiCube, bank: FilterBank, prior: SpectralPrior, noise) -> float:
    """Least-squares fit of the prior scale to the observed channel moments.

    Matches ``d * diag(F M^-1 F^T)`` to ``diag(K_c - N)`` where ``K_c`` is
    the second-order moment of the observed pixel vectors. The result is
    floored at :data:`D_FLOOR` so the covariance stays positive definite.
    Use :meth:`SpectralPrior.with_scale` to attach it to a prior.
    """
    if cube.channels != bank.num_channels:
        raise InvalidArgumentError(
            f"cube has {cube.channels} channels, filter bank has {bank.num_channels}"
        )
    F = bank.matrix
    d_m = np.einsum("ij,ji->i", F, prior.solve(F.T))
    pixels = cube.pixels()
    d_c = np.einsum("pi,pi->i", pixels, pixels) / pixels.shape[0] - np.asarray(noise.variances)
    if not np.any(pixels):
        warnings.warn("all-zero cube; scale factor set to the floor value", RuntimeWarning)
        return D_FLOOR
    d_hat = float(d_m @ d_c / (d_m @ d_m))
    if d_hat < D_FLOOR:
        logger.debug("scale factor %.3g clamped to %.1g", d_hat, D_FLOOR)
        return D_FLOOR
    return d_hat


__all__ = [
    "D_FLOOR",
    "DEFAULT_ALPHA",
    "REAL_CAMERA_ALPHA",
    "FilterBank",
    "HyperCube",
    "MultiCube",
    "SpatialCovariance",
    "SpectralPrior",
    "default_filter_bank",
    "default_trapezoid_spec",
    "estimate_scale_factor",
    "expand_block_diagonal",
    "make_combined_covariance",
    "make_difference_matrix",
    "make_spatial_covariance",
    "make_trapezoid_bank",
    "markov_matrix",
    "second_moment",
    "trapezoid_response",
    "wavelength_grid",
]
