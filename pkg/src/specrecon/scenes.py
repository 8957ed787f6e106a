"""Synthetic hyperspectral scenes for testing and benchmarking.

A scene is a tiling of rectangular regions, each with its own smooth
spectrum (a baseline plus a few Gaussian bumps). Step edges appear at
region borders; some regions carry a smooth brightness gradient or blend
linearly between two spectra.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError
from .spectral_model import HyperCube, wavelength_grid


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic scene.

    ``layout`` is ``"mosaic"`` (random rectangle tiling, ``regions`` tiles)
    or ``"stripes"`` (``regions`` vertical stripes, no gradients).
    """

    height: int = 64
    width: int = 64
    wavelengths: np.ndarray = field(default_factory=wavelength_grid)
    layout: str = "mosaic"
    regions: int = 8
    gradients: bool = True
    bumps: int = 3
    seed: int = 0


def random_spectrum(rng: np.random.Generator, wavelengths, bumps: int = 3) -> np.ndarray:
    """Smooth nonnegative spectrum with peak value in ``[0.3, 1]``."""
    wl = np.asarray(wavelengths, dtype=np.float64)
    lo, hi = wl[0], wl[-1]
    span = hi - lo
    s = np.full(wl.shape, rng.uniform(0.02, 0.25))
    s += rng.uniform(-0.1, 0.1) * (wl - lo) / span
    for _ in range(bumps):
        mu = rng.uniform(lo - 0.1 * span, hi + 0.1 * span)
        width = rng.uniform(0.06, 0.25) * span
        s += rng.uniform(0.05, 0.6) * np.exp(-0.5 * ((wl - mu) / width) ** 2)
    s = np.clip(s, 0.0, None)
    return s * (rng.uniform(0.3, 1.0) / s.max())


def _mosaic(rng, height, width, regions):
    """Split the image into ``regions`` rectangles by repeated axis-aligned cuts."""
    rects = [(0, height, 0, width)]
    while len(rects) < regions:
        sizes = [(r[1] - r[0]) * (r[3] - r[2]) for r in rects]
        y0, y1, x0, x1 = rects.pop(int(np.argmax(sizes)))
        horizontal = (y1 - y0) > (x1 - x0) or ((y1 - y0) == (x1 - x0) and rng.random() < 0.5)
        if horizontal and y1 - y0 >= 4:
            cut = int(rng.integers(y0 + 2, y1 - 1))
            rects += [(y0, cut, x0, x1), (cut, y1, x0, x1)]
        elif x1 - x0 >= 4:
            cut = int(rng.integers(x0 + 2, x1 - 1))
            rects += [(y0, y1, x0, cut), (y0, y1, cut, x1)]
        else:
            rects.append((y0, y1, x0, x1))
            break
    return rects


def generate_scene(spec: SceneSpec = SceneSpec()) -> HyperCube:
    """Render a scene; identical specs give identical cubes."""
    h, w = int(spec.height), int(spec.width)
    if h < 1 or w < 1:
        raise InvalidArgumentError(f"scene size must be positive, got {h}x{w}")
    if spec.regions < 1:
        raise InvalidArgumentError(f"need at least one region, got {spec.regions}")
    wl = np.asarray(spec.wavelengths, dtype=np.float64)
    rng = np.random.default_rng(spec.seed)
    if spec.layout == "stripes":
        if spec.regions > w:
            raise InvalidArgumentError(f"cannot fit {spec.regions} stripes into width {w}")
        edges = np.linspace(0, w, spec.regions + 1).round().astype(int)
        rects = [(0, h, int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
    elif spec.layout == "mosaic":
        rects = _mosaic(rng, h, w, spec.regions)
    else:
        raise InvalidArgumentError(f"unknown layout {spec.layout!r}")

    cube = np.zeros((h, w, wl.size))
    for y0, y1, x0, x1 in rects:
        s = random_spectrum(rng, wl, spec.bumps)
        ry, rx = y1 - y0, x1 - x0
        style = rng.integers(0, 3) if spec.gradients else 0
        if style == 0:
            cube[y0:y1, x0:x1] = s
        elif style == 1:
            # brightness ramp in a random direction, range [0.5, 1]
            angle = rng.uniform(0, 2 * np.pi)
            yy, xx = np.mgrid[0:ry, 0:rx]
            proj = np.cos(angle) * xx / max(rx - 1, 1) + np.sin(angle) * yy / max(ry - 1, 1)
            proj = (proj - proj.min()) / max(np.ptp(proj), 1e-12)
            cube[y0:y1, x0:x1] = (0.5 + 0.5 * proj)[..., None] * s
        else:
            # linear blend towards a second spectrum along x
            s2 = random_spectrum(rng, wl, spec.bumps)
            t = np.linspace(0.0, 1.0, rx)[None, :, None]
            cube[y0:y1, x0:x1] = (1 - t) * s + t * s2
    return HyperCube(np.clip(cube, 0.0, 1.0), wl, 1.0)


def demo_scenes(count: int, size: int = 64, seed: int = 0, wavelengths=None) -> list:
    """``count`` mosaic scenes of ``size x size`` pixels with seeds ``seed, seed+1, ...``."""
    wl = wavelength_grid() if wavelengths is None else wavelengths
    return [
        generate_scene(SceneSpec(height=size, width=size, wavelengths=wl, seed=seed + i))
        for i in range(count)
    ]


__all__ = ["SceneSpec", "demo_scenes", "generate_scene", "random_spectrum"]
