"""Single-pixel reconstructors: SP, NSP, WF and BPE.

Each builder returns a :class:`SinglePixelFilter` holding an ``N x M``
matrix that is applied independently to every pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft, linalg

from .errors import InvalidArgumentError, SingularSystemError
from .spectral_model import FilterBank, HyperCube, MultiCube, SpectralPrior


@dataclass(frozen=True)
class SinglePixelFilter:
    method: str
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).view()
        if w.ndim != 2 or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("reconstruction weights must be a finite 2-D matrix")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def bands(self) -> int:
        return self.weights.shape[0]

    @property
    def channels(self) -> int:
        return self.weights.shape[1]


def dependent_rows(F, rtol: float = 1e-10) -> list:
    """Indices of rows that are linear combinations of the rows before them."""
    F = np.asarray(F, dtype=np.float64)
    bad, kept = [], []
    tol = rtol * max(1.0, np.abs(F).max())
    for i in range(F.shape[0]):
        trial = F[kept + [i]]
        s = np.linalg.svd(trial, compute_uv=False)
        if s[-1] <= tol * s[0] * np.sqrt(trial.shape[1]):
            bad.append(i)
        else:
            kept.append(i)
    return bad


def _check_rank(F) -> None:
    rows = dependent_rows(F)
    if rows:
        raise SingularSystemError(
            f"filter matrix is rank deficient; rows {rows} depend on earlier rows", rows=rows
        )


def _solve_spd(A, B, what: str) -> np.ndarray:
    """Return ``A^-1 B`` for symmetric positive (semi)definite ``A``."""
    try:
        return linalg.cho_solve(linalg.cho_factor(A), B)
    except linalg.LinAlgError:
        pass
    try:
        return linalg.solve(A, B, assume_a="sym")
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"{what} is singular") from exc


def wiener_weights(cov_ft, f_cov_ft, noise_var) -> np.ndarray:
    """``K F^T (F K F^T + N)^-1`` given ``K F^T`` and ``F K F^T``."""
    A = np.asarray(f_cov_ft, dtype=np.float64) + np.diag(np.asarray(noise_var, dtype=np.float64))
    A = 0.5 * (A + A.T)
    # A is symmetric, so (A^-1 (K F^T)^T)^T == K F^T A^-1
    return _solve_spd(A, np.asarray(cov_ft).T, "channel covariance").T


def _prior_terms(bank: FilterBank, prior: SpectralPrior):
    F = bank.matrix
    if prior.bands != bank.num_bands:
        raise InvalidArgumentError(
            f"prior has {prior.bands} bands, filter bank has {bank.num_bands}"
        )
    minv_ft = prior.solve(F.T)
    f_minv_ft = F @ minv_ft
    return minv_ft, 0.5 * (f_minv_ft + f_minv_ft.T)


def build_sp(bank: FilterBank, prior: SpectralPrior) -> SinglePixelFilter:
    """Smoothed pseudoinverse ``M^-1 F^T (F M^-1 F^T)^-1``.

    The result interpolates the measurements exactly: ``F W c == c``.
    """
    _check_rank(bank.matrix)
    minv_ft, f_minv_ft = _prior_terms(bank, prior)
    return SinglePixelFilter("sp", wiener_weights(minv_ft, f_minv_ft, np.zeros(bank.num_channels)))


def build_nsp(bank: FilterBank, prior: SpectralPrior, noise) -> SinglePixelFilter:
    """Noise-aware smoothed pseudoinverse (MAP estimate under the smoothness prior).

    Weights are ``d M^-1 F^T (F d M^-1 F^T + N)^-1`` with ``d = prior.scale_d``.
    """
    _check_rank(bank.matrix)
    minv_ft, f_minv_ft = _prior_terms(bank, prior)
    d = prior.scale_d
    return SinglePixelFilter("nsp", wiener_weights(d * minv_ft, d * f_minv_ft, noise.variances))


def build_wf(
    bank: FilterBank,
    prior: SpectralPrior,
    noise,
    spectral_cov: Optional[np.ndarray] = None,
) -> SinglePixelFilter:
    """Single-pixel Wiener filter ``K_r F^T (F K_r F^T + N)^-1``.

    ``K_r`` defaults to ``d M^-1``, in which case the filter is the same
    matrix as :func:`build_nsp`. Pass ``spectral_cov`` to use another
    covariance.
    """
    _check_rank(bank.matrix)
    F = bank.matrix
    if spectral_cov is None:
        minv_ft, f_minv_ft = _prior_terms(bank, prior)
        d = prior.scale_d
        cov_ft, f_cov_ft = d * minv_ft, d * f_minv_ft
    else:
        K = np.asarray(spectral_cov, dtype=np.float64)
        if K.shape != (bank.num_bands, bank.num_bands):
            raise InvalidArgumentError(f"spectral covariance must be {bank.num_bands} square")
        cov_ft = K @ F.T
        f_cov_ft = F @ cov_ft
    return SinglePixelFilter("wf", wiener_weights(cov_ft, f_cov_ft, noise.variances))


def dct_basis(bands: int, terms: int) -> np.ndarray:
    """First ``terms`` orthonormal DCT-II basis vectors as columns (``bands x terms``)."""
    if not 1 <= terms <= bands:
        raise InvalidArgumentError(f"need 1 <= terms <= bands, got {terms} and {bands}")
    # row k of the orthonormal DCT-II matrix is basis function k
    C = fft.dct(np.eye(bands), type=2, norm="ortho", axis=0)
    return C[:terms].T


def build_bpe(bank: FilterBank, dct_terms: Optional[int] = None) -> SinglePixelFilter:
    """Basis parameter estimation with the first ``M`` DCT functions: ``B (F B)^-1``."""
    F = bank.matrix
    terms = bank.num_channels if dct_terms is None else int(dct_terms)
    if terms != bank.num_channels:
        raise InvalidArgumentError("BPE needs as many DCT terms as channels")
    B = dct_basis(bank.num_bands, terms)
    FB = F @ B
    if np.linalg.matrix_rank(FB) < terms:
        raise SingularSystemError(
            "F @ B is singular for the DCT basis", rows=dependent_rows(FB)
        )
    lu = linalg.lu_factor(FB)
    # W = B (F B)^-1  <=>  (F B)^T W^T = B^T
    return SinglePixelFilter("bpe", linalg.lu_solve(lu, B.T, trans=1).T)


def apply_single_pixel(filt: SinglePixelFilter, cube: MultiCube) -> HyperCube:
    """Apply the filter matrix to every pixel; output values are not clamped."""
    if cube.channels != filt.channels:
        raise InvalidArgumentError(
            f"cube has {cube.channels} channels, filter expects {filt.channels}"
        )
    out = cube.data @ filt.weights.T
    return HyperCube(out)


__all__ = [
    "SinglePixelFilter",
    "apply_single_pixel",
    "build_bpe",
    "build_nsp",
    "build_sp",
    "build_wf",
    "dct_basis",
    "dependent_rows",
    "wiener_weights",
]
