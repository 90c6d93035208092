"""File formats: binary cubes, CSV matrices and JSON results.

Cube file layout (all integers little-endian uint32)::

    offset 0   magic   b"HSICUBE1"
    offset 8   height
    offset 12  width
    offset 16  bands
    offset 20  dtype   1 = float32, 2 = float64
    offset 24  payload, band-sequential (band, row, column), little-endian
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Union

import numpy as np

from .cube import as_cube

MAGIC = b"HSICUBE1"
HEADER = struct.Struct("<8sIIII")
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
FORMAT_VERSION = "degradekit-1"

PathLike = Union[str, Path]


class FormatError(ValueError):
    pass


def write_cube(path: PathLike, cube, dtype: int = 2) -> None:
    cube = as_cube(cube)
    if dtype not in DTYPES:
        raise FormatError(f"unknown dtype code {dtype}; expected 1 (float32) or 2 (float64)")
    if dtype == 1 and np.any(np.abs(cube) > np.finfo(np.float32).max):
        raise FormatError("values exceed the float32 range")
    height, width, bands = cube.shape
    payload = np.ascontiguousarray(cube.transpose(2, 0, 1), dtype=DTYPES[dtype])
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, height, width, bands, dtype))
        fh.write(payload.tobytes())


def read_cube(path: PathLike) -> np.ndarray:
    """Read a cube file into a float64 ``(H, W, B)`` array."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: truncated header, {len(raw)} of {HEADER.size} bytes at offset 0")
    magic, height, width, bands, dtype = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if min(height, width, bands) == 0:
        raise FormatError(f"{path}: zero dimension in header at offset 8")
    if dtype not in DTYPES:
        raise FormatError(f"{path}: unknown dtype code {dtype} at offset 20")
    expected = height * width * bands * DTYPES[dtype].itemsize
    actual = len(raw) - HEADER.size
    if actual != expected:
        raise FormatError(
            f"{path}: payload of {actual} bytes at offset {HEADER.size} does not match "
            f"header ({height}x{width}x{bands}, {expected} bytes)"
        )
    data = np.frombuffer(raw, dtype=DTYPES[dtype], offset=HEADER.size)
    cube = data.reshape(bands, height, width).transpose(1, 2, 0).astype(np.float64)
    if not np.all(np.isfinite(cube)):
        raise FormatError(f"{path}: payload contains non-finite values")
    return np.ascontiguousarray(cube)


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_matrix_csv(path: PathLike, matrix) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2:
        raise FormatError(f"expected a 2-D matrix, got shape {matrix.shape}")
    with open(path, "w", newline="") as fh:
        for row in matrix:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def read_matrix_csv(path: PathLike) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise FormatError(f"{path}: unparsable value on line {lineno}") from None
            if rows and len(values) != len(rows[0]):
                raise FormatError(f"{path}: line {lineno} has {len(values)} fields, expected {len(rows[0])}")
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: empty matrix")
    return np.array(rows, dtype=np.float64)


def _encode(value):
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, np.ndarray):
        return _encode(value.tolist())
    if isinstance(value, (np.floating, np.integer)):
        return _encode(value.item())
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):  # enums
        return value.value
    return value


def _decode(value):
    if value in ("inf", "-inf", "nan"):
        return float(value)
    if isinstance(value, dict):
        return {k: _decode(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode(v) for v in value]
    return value


def result_to_dict(result) -> dict:
    """JSON-ready dict for an ``EstimationResult`` or ``MetricReport``."""
    from .dirinet.train import EstimationResult
    from .metrics import MetricReport

    if isinstance(result, EstimationResult):
        body = {
            "format_version": FORMAT_VERSION,
            "kind": "estimation",
            "config": result.config.to_dict(),
            "geometry": result.geometry.to_dict(),
            "srf": result.srf,
            "psf": result.psf,
            "params": {
                "w_raw": result.params.w_raw,
                "u_raw": result.params.u_raw,
                "alpha_raw": result.params.alpha_raw,
            },
            "final": dict(zip(("iteration", "l_m", "l_v", "l"), result.loss_trace[-1])),
            "loss_trace": [list(e) for e in result.loss_trace],
        }
    elif isinstance(result, MetricReport):
        body = {"format_version": FORMAT_VERSION, "kind": "metrics", **asdict(result)}
    elif isinstance(result, dict):
        body = {"format_version": FORMAT_VERSION, **result}
    else:
        raise TypeError(f"cannot serialize {type(result).__name__}")
    return _encode(body)


def dumps_result(result) -> str:
    return json.dumps(result_to_dict(result), indent=2, allow_nan=False) + "\n"


def write_result_json(path: PathLike, result) -> None:
    text = dumps_result(result)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_result_json(path: PathLike) -> dict:
    return _decode(json.loads(Path(path).read_text()))


def estimation_from_dict(data: dict):
    """Rebuild an ``EstimationResult`` from :func:`read_result_json` output."""
    from .degradation import Geometry
    from .dirinet.model import DirinetParams
    from .dirinet.optim import HyperConfig
    from .dirinet.train import EstimationResult

    if data.get("format_version") != FORMAT_VERSION or data.get("kind") != "estimation":
        raise FormatError("not a degradekit estimation result")
    params = data["params"]
    return EstimationResult(
        srf=np.array(data["srf"], dtype=np.float64),
        psf=np.array(data["psf"], dtype=np.float64),
        loss_trace=[tuple(e) for e in data["loss_trace"]],
        config=HyperConfig.from_dict(data["config"]),
        geometry=Geometry(**data["geometry"]),
        params=DirinetParams(params["w_raw"], params["u_raw"], params["alpha_raw"]),
    )
