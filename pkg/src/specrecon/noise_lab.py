"""Noise estimation, Poisson noise injection and intensity schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import convolve2d

from .errors import InvalidArgumentError
from .spectral_model import MultiCube, expand_block_diagonal

LAPLACE_KERNEL = np.array([[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]])

#: Standard (l_min, l_max) pairs for the cap-shaped schedule, heaviest noise first.
CAP_SCENARIOS = ((10.0, 100.0), (10.0, 1000.0), (100.0, 10000.0))


@dataclass(frozen=True)
class NoiseModel:
    """Per-channel additive noise standard deviations."""

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=np.float64).ravel()
        if not np.all(np.isfinite(sigma)) or np.any(sigma < 0):
            raise InvalidArgumentError("noise sigma must be finite and nonnegative")
        sigma.flags.writeable = False
        object.__setattr__(self, "sigma", sigma)

    @property
    def variances(self) -> np.ndarray:
        return self.sigma**2

    @property
    def matrix(self) -> np.ndarray:
        """Diagonal channel noise covariance ``N``."""
        return np.diag(self.variances)

    def expanded(self, blocks: int) -> np.ndarray:
        """Block noise covariance ``I_blocks (x) N``."""
        return expand_block_diagonal(self.matrix, blocks)

    def scaled(self, factor: float) -> "NoiseModel":
        return NoiseModel(self.sigma * factor)

    @classmethod
    def zeros(cls, channels: int) -> "NoiseModel":
        return cls(np.zeros(channels))


@dataclass(frozen=True)
class IntensitySchedule:
    """Per-channel illumination intensity for the Poisson model.

    ``kind="uniform"`` uses ``level`` on every channel (``inf`` = noiseless);
    ``kind="cap_shaped"`` follows a half sine from ``l_min`` at the outer
    channels to ``l_max`` in the middle.
    """

    kind: str
    channels: int
    level: float = math.inf
    l_min: Optional[float] = None
    l_max: Optional[float] = None

    @classmethod
    def uniform(cls, level: float, channels: int) -> "IntensitySchedule":
        return cls("uniform", channels, level=float(level))

    @classmethod
    def cap_shaped(cls, l_min: float, l_max: float, channels: int) -> "IntensitySchedule":
        return cls("cap_shaped", channels, l_min=float(l_min), l_max=float(l_max))

    @property
    def bounds(self):
        if self.kind == "uniform":
            return self.level, self.level
        return self.l_min, self.l_max


def schedule_levels(schedule: IntensitySchedule) -> np.ndarray:
    """Expand a schedule into one intensity level per channel.

    The cap shape is ``sin(i / (M-1) * pi) * (l_max - l_min) + l_min`` with
    ``i = 0 .. M-1``, so both outer channels get ``l_min``.
    """
    m = int(schedule.channels)
    if m < 1:
        raise InvalidArgumentError(f"channels must be positive, got {m}")
    if schedule.kind == "uniform":
        if not schedule.level > 0:
            raise InvalidArgumentError(f"intensity level must be positive, got {schedule.level}")
        return np.full(m, float(schedule.level))
    if schedule.kind != "cap_shaped":
        raise InvalidArgumentError(f"unknown schedule kind {schedule.kind!r}")
    lo, hi = schedule.l_min, schedule.l_max
    if m < 2:
        raise InvalidArgumentError("cap-shaped schedule needs at least two channels")
    if lo is None or hi is None or not lo > 0:
        raise InvalidArgumentError("cap-shaped schedule needs positive l_min and l_max")
    if lo > hi:
        raise InvalidArgumentError(f"l_min={lo} exceeds l_max={hi}")
    if math.isinf(hi):
        raise InvalidArgumentError("cap-shaped schedule needs a finite l_max")
    i = np.arange(m)
    return np.sin(i / (m - 1) * np.pi) * (hi - lo) + lo


def estimate_noise_sigma(image) -> float:
    """Laplacian-based estimate of white-noise standard deviation.

    The absolute response to the 3 x 3 kernel is averaged over the valid
    (interior) region only, then scaled by ``sqrt(pi/2) / 6``.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise InvalidArgumentError(f"noise estimation needs an image of at least 3 x 3, got {img.shape}")
    response = convolve2d(img, LAPLACE_KERNEL, mode="valid")
    return float(math.sqrt(math.pi / 2.0) * np.abs(response).sum() / (6.0 * response.size))


def build_noise_model(cube: MultiCube) -> NoiseModel:
    """Estimate the noise level of every channel independently."""
    return NoiseModel([estimate_noise_sigma(cube.data[:, :, i]) for i in range(cube.channels)])


def oracle_noise_model(clean: MultiCube, levels: Sequence[float]) -> NoiseModel:
    """Gaussian approximation of the injected Poisson noise.

    A channel scaled to ``P(l v) / l`` has variance ``v / l``; the model
    uses its average over the image. Infinite levels give zero noise.
    """
    levels = np.asarray(levels, dtype=np.float64)
    if levels.shape != (clean.channels,):
        raise InvalidArgumentError(f"expected {clean.channels} levels, got {levels.shape}")
    means = clean.pixels().mean(axis=0)
    with np.errstate(divide="ignore"):
        var = np.where(np.isinf(levels), 0.0, means / levels)
    return NoiseModel(np.sqrt(np.maximum(var, 0.0)))


def channel_generators(seed: int, channels: int):
    """One independent generator per channel, derived from a single seed.

    Channel ``i`` always receives the same stream for a given seed, so
    channels can be processed in any order or in parallel.
    """
    children = np.random.SeedSequence(int(seed)).spawn(channels)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def inject_poisson(cube: MultiCube, levels: Sequence[float], seed: int) -> MultiCube:
    """Replace each value ``v`` of channel ``i`` by ``Poisson(l_i v) / l_i``."""
    levels = np.asarray(levels, dtype=np.float64)
    if levels.shape != (cube.channels,):
        raise InvalidArgumentError(f"expected {cube.channels} levels, got {levels.shape}")
    if np.any(~(levels > 0)):
        raise InvalidArgumentError("intensity levels must be positive or inf")
    if np.any(cube.data < 0):
        raise InvalidArgumentError("Poisson injection needs nonnegative values")
    out = np.array(cube.data, dtype=np.float64)
    for i, rng in enumerate(channel_generators(seed, cube.channels)):
        lv = levels[i]
        if math.isinf(lv):
            continue
        out[:, :, i] = rng.poisson(lv * cube.data[:, :, i]) / lv
    return MultiCube(out, cube.wavelengths, cube.value_scale)


__all__ = [
    "IntensitySchedule",
    "LAPLACE_KERNEL",
    "NoiseModel",
    "CAP_SCENARIOS",
    "build_noise_model",
    "channel_generators",
    "estimate_noise_sigma",
    "inject_poisson",
    "oracle_noise_model",
    "schedule_levels",
]
