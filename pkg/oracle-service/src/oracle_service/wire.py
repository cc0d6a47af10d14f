"""Wire-format helpers: canonical JSON, f32 arrays, PNG payloads.

The protocol is newline-delimited JSON with sorted keys and compact
separators; floating-point arrays travel as little-endian f32 base64,
images as base64 PNG. These helpers are the service's own: the sidecar
shares a wire format with its clients, not code.
"""
from __future__ import annotations

import base64
import io
import json

import numpy as np
from PIL import Image

MAX_LABEL_CODE = 5


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def encode_array(arr) -> dict:
    arr = np.asarray(arr, dtype=np.float64)
    data = arr.astype("<f4").tobytes(order="C")
    return {
        "dtype": "f4",
        "shape": list(arr.shape),
        "data": base64.b64encode(data).decode("ascii"),
    }


def decode_array(obj) -> np.ndarray:
    if not isinstance(obj, dict) or obj.get("dtype") != "f4":
        raise ValueError(f"bad array payload: {obj!r:.80}")
    shape = tuple(int(s) for s in obj["shape"])
    raw = base64.b64decode(obj["data"])
    count = int(np.prod(shape)) if shape else 1
    if len(raw) != 4 * count:
        raise ValueError(
            f"array payload is {len(raw)} bytes but shape {shape} needs "
            f"{4 * count}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def encode_png(image) -> str:
    """uint8 image (H,W) or (H,W,3) to base64 PNG."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise ValueError("PNG payloads must be uint8")
    mode = "L" if arr.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_rgb_png(b64: str) -> np.ndarray:
    with Image.open(io.BytesIO(base64.b64decode(b64))) as img:
        return np.asarray(img.convert("RGB"))


def decode_label_png(b64: str) -> np.ndarray:
    with Image.open(io.BytesIO(base64.b64decode(b64))) as img:
        arr = np.asarray(img.convert("I"))
    if arr.min() < 0 or arr.max() > MAX_LABEL_CODE:
        raise ValueError(
            f"label map contains codes outside 0..{MAX_LABEL_CODE}")
    return arr.astype(np.uint8)
