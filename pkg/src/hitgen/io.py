"""File formats: binary PPM images and plain CSV tables."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def to_bytes(image: np.ndarray) -> np.ndarray:
    """Map [-1, 1] linearly onto 0..255, rounding half to even."""
    x = np.clip(np.asarray(image, dtype=np.float64), -1.0, 1.0)
    return np.rint((x + 1.0) * 127.5).astype(np.uint8)


def encode_ppm(image: np.ndarray) -> bytes:
    """Binary P6 encoding of an ``[H, W, 3]`` image with values in [-1, 1]."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected [H, W, 3] image, got {image.shape}")
    h, w, _ = image.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + to_bytes(image).tobytes()


def write_ppm(path: Path, image: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(encode_ppm(image))
    return path


def read_ppm(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, dims, maxval, body = raw.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path
