"""Cube files and forward projection.

A cube is stored as two files: the raw payload at ``path`` and a JSON
header at ``path + ".json"``. The payload is little-endian, band-sequential:
all ``H*W`` values of band 0 in row-major order, then band 1, and so on.

Header keys: ``height``, ``width``, ``bands`` (hyper) or ``channels``
(multi), ``kind`` (``"hyper"``/``"multi"``), ``value_scale``, ``dtype``
(``"f32"``/``"f64"``), ``layout`` (always ``"band-sequential"``) and,
optionally, ``wavelengths`` plus free-form ``extra`` metadata.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import CubeFormatError, InvalidArgumentError
from .spectral_model import FilterBank, HyperCube, MultiCube

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
LAYOUT = "band-sequential"


def header_path(path) -> Path:
    return Path(str(path) + ".json")


def write_cube(cube: Union[HyperCube, MultiCube], path, dtype: str = "f64", extra: Optional[dict] = None) -> None:
    if dtype not in _DTYPES:
        raise CubeFormatError("dtype-mismatch", f"unsupported dtype {dtype!r}; use f32 or f64")
    h, w, b = cube.data.shape
    kind = "hyper" if isinstance(cube, HyperCube) else "multi"
    header = {
        "height": h,
        "width": w,
        ("bands" if kind == "hyper" else "channels"): b,
        "kind": kind,
        "value_scale": float(cube.value_scale),
        "dtype": dtype,
        "layout": LAYOUT,
    }
    if cube.wavelengths is not None:
        header["wavelengths"] = [float(v) for v in cube.wavelengths]
    if extra:
        header["extra"] = extra
    payload = np.ascontiguousarray(cube.data.transpose(2, 0, 1), dtype=_DTYPES[dtype])
    path = Path(path)
    path.write_bytes(payload.tobytes())
    header_path(path).write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def read_header(path) -> dict:
    hp = header_path(path)
    try:
        header = json.loads(hp.read_text())
    except FileNotFoundError:
        raise CubeFormatError("malformed-header", f"missing header file {hp}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CubeFormatError("malformed-header", f"{hp}: {exc}") from None
    if not isinstance(header, dict):
        raise CubeFormatError("malformed-header", f"{hp}: header must be a JSON object")
    if "bands" not in header and "channels" in header:
        header["bands"] = header["channels"]
    for key in ("height", "width", "bands", "kind", "dtype"):
        if key not in header:
            raise CubeFormatError("malformed-header", f"{hp}: missing key {key!r}")
    try:
        dims = [int(header[k]) for k in ("height", "width", "bands")]
    except (TypeError, ValueError):
        raise CubeFormatError("malformed-header", f"{hp}: dimensions must be integers") from None
    if min(dims) < 1:
        raise CubeFormatError("malformed-header", f"{hp}: dimensions must be positive")
    if header["kind"] not in ("hyper", "multi"):
        raise CubeFormatError("malformed-header", f"{hp}: kind must be 'hyper' or 'multi'")
    if header.get("layout", LAYOUT) != LAYOUT:
        raise CubeFormatError("malformed-header", f"{hp}: unsupported layout {header['layout']!r}")
    if header["dtype"] not in _DTYPES:
        raise CubeFormatError("dtype-mismatch", f"{hp}: unsupported dtype {header['dtype']!r}")
    return header


def read_cube(path, kind: Optional[str] = None, dtype: Optional[str] = None):
    """Read a cube; ``kind``/``dtype`` assert what the caller expects."""
    header = read_header(path)
    if kind is not None and header["kind"] != kind:
        raise CubeFormatError("kind-mismatch", f"{path}: expected a {kind} cube, found {header['kind']}")
    if dtype is not None and header["dtype"] != dtype:
        raise CubeFormatError("dtype-mismatch", f"{path}: expected {dtype}, header says {header['dtype']}")
    h, w, b = int(header["height"]), int(header["width"]), int(header["bands"])
    dt = _DTYPES[header["dtype"]]
    try:
        size = os.path.getsize(path)
    except FileNotFoundError:
        raise CubeFormatError("payload-size-mismatch", f"missing payload file {path}") from None
    expected = h * w * b * dt.itemsize
    if size != expected:
        raise CubeFormatError(
            "payload-size-mismatch", f"{path}: payload has {size} bytes, header implies {expected}"
        )
    data = np.fromfile(path, dtype=dt).reshape(b, h, w).transpose(1, 2, 0).astype(np.float64)
    wl = header.get("wavelengths")
    cls = HyperCube if header["kind"] == "hyper" else MultiCube
    return cls(data, None if wl is None else np.array(wl, dtype=np.float64), float(header.get("value_scale", 1.0)))


def forward_project(hyper: HyperCube, bank: FilterBank) -> MultiCube:
    """Noiseless channel measurements ``c = F s`` for every pixel."""
    if hyper.bands != bank.num_bands:
        raise InvalidArgumentError(f"cube has {hyper.bands} bands, filter bank has {bank.num_bands}")
    return MultiCube(hyper.data @ bank.matrix.T, value_scale=hyper.value_scale)


def normalize_pair(hyper: HyperCube, multi: MultiCube):
    """Scale both cubes by ``1 / max(multi)`` so the channels span ``[0, 1]``."""
    peak = float(multi.data.max())
    if not peak > 0:
        raise InvalidArgumentError("cannot normalise an all-zero multispectral cube")
    s = 1.0 / peak
    return (
        HyperCube(hyper.data * s, hyper.wavelengths, 1.0),
        MultiCube(multi.data * s, multi.wavelengths, 1.0),
    )


__all__ = [
    "LAYOUT",
    "forward_project",
    "header_path",
    "normalize_pair",
    "read_cube",
    "read_header",
    "write_cube",
]
