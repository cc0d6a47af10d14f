"""PNG and depth-buffer file I/O.

Color and normal maps travel as 8-bit RGB PNG; label maps as single-channel
8-bit PNG whose pixel values are the raw part codes 0..5. Depth buffers use
a tiny binary format:

    bytes 0..3   magic b"DPT1"
    bytes 4..7   height, uint32 little-endian
    bytes 8..11  width, uint32 little-endian
    bytes 12..   height*width float32 little-endian, row-major;
                 background is encoded as +inf

All functions accept str or Path.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError, MeshFormatError
from .validation import MAX_LABEL_CODE

DEPTH_MAGIC = b"DPT1"


def to_uint8(image) -> np.ndarray:
    """Float image in [0,1] to uint8 with round-half-to-even quantization."""
    arr = np.asarray(image, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ContractError("image must be finite")
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def from_uint8(image) -> np.ndarray:
    return np.asarray(image, dtype=np.float64) / 255.0


def save_image(path, image) -> None:
    """Save an RGB image; float arrays are quantized, uint8 passes through."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractError(f"expected an (H, W, 3) image, got {arr.shape}")
    Image.fromarray(arr, mode="RGB").save(Path(path), format="PNG")


def load_image(path) -> np.ndarray:
    """Load a PNG as float64 RGB in [0,1]."""
    with Image.open(Path(path)) as img:
        return from_uint8(np.asarray(img.convert("RGB")))


def save_label_map(path, labels) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ContractError(f"label map must be 2-D, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > MAX_LABEL_CODE:
        raise ContractError("label codes must lie in 0..5")
    Image.fromarray(arr.astype(np.uint8), mode="L").save(Path(path), format="PNG")


def load_label_map(path) -> np.ndarray:
    with Image.open(Path(path)) as img:
        if img.mode not in ("L", "P", "I", "I;16"):
            raise MeshFormatError(
                f"label map must be single-channel, got mode {img.mode}",
                path=str(path))
        arr = np.asarray(img.convert("I"))
    if arr.min() < 0 or arr.max() > MAX_LABEL_CODE:
        raise MeshFormatError("label map contains codes outside 0..5",
                              path=str(path))
    return arr.astype(np.uint8)


def save_depth(path, depth) -> None:
    arr = np.asarray(depth, dtype=np.float32)
    if arr.ndim != 2:
        raise ContractError(f"depth must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    with open(Path(path), "wb") as fh:
        fh.write(DEPTH_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(arr.astype("<f4").tobytes())


def load_depth(path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != DEPTH_MAGIC:
        raise MeshFormatError("bad depth file magic", path=str(path))
    if len(blob) < 12:
        raise MeshFormatError("truncated depth header", path=str(path))
    h, w = struct.unpack("<II", blob[4:12])
    expect = 12 + 4 * h * w
    if len(blob) != expect:
        raise MeshFormatError(
            f"depth payload is {len(blob) - 12} bytes, expected {expect - 12}",
            path=str(path))
    return np.frombuffer(blob, dtype="<f4", offset=12).reshape(h, w).astype(np.float64)
