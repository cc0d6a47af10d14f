"""Surface color field: multiresolution hash encoding + tiny MLP.

Maps 3D points in the unit cube to RGB. Each hash level looks up feature
vectors at the 8 cell corners via a spatial hash and blends them
trilinearly; concatenated level features feed a one-hidden-layer ReLU MLP
whose output is squashed into [0,1] by a logistic. Everything is plain
numpy float64 with hand-written exact reverse-mode gradients.

Checkpoint container (little-endian):

    bytes 0..3    magic b"CFLD"
    u32           format version (1)
    u32 x 6       levels, base_resolution, max_resolution, table_size,
                  features, hidden
    u64           parameter count
    f32 x count   flat parameters (see ColorField.flatten for the order)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, MeshFormatError

CHECKPOINT_MAGIC = b"CFLD"
CHECKPOINT_VERSION = 1

# spatial hash multipliers, one per axis (instant-ngp style)
_HASH_PRIMES = (np.uint64(1), np.uint64(2654435761), np.uint64(805459861))

# logistic backward uses max(s(1-s), floor) so saturated colors keep a
# usable gradient; this is the documented deviation from the pure chain rule
SQUASH_SLOPE_FLOOR = 1e-4

INIT_TABLE_SCALE = 1e-4
NORMALIZE_MARGIN = 0.05  # bbox maps to [margin, 1-margin]^3


@dataclass(frozen=True)
class FieldConfig:
    levels: int = 12
    base_resolution: int = 16
    max_resolution: int = 2048
    table_size: int = 1 << 16
    features: int = 2
    hidden: int = 32

    def __post_init__(self):
        if self.levels < 1 or self.features < 1 or self.hidden < 1:
            raise ContractError("levels, features, hidden must be positive")
        if self.table_size < 1:
            raise ContractError("table_size must be positive")
        if not 1 <= self.base_resolution <= self.max_resolution:
            raise ContractError("need 1 <= base_resolution <= max_resolution")
        res = self.resolutions()
        if len(res) > 1 and not np.all(np.diff(res) > 0):
            raise ContractError(
                f"level resolutions must strictly increase, got {res}")

    def resolutions(self) -> np.ndarray:
        """Per-level grid resolutions, geometric from base to max."""
        if self.levels == 1:
            return np.array([self.max_resolution], dtype=np.int64)
        growth = (self.max_resolution / self.base_resolution) ** (
            1.0 / (self.levels - 1))
        res = np.rint(self.base_resolution * growth ** np.arange(self.levels))
        return res.astype(np.int64)

    @property
    def encoding_dim(self) -> int:
        return self.levels * self.features

    @property
    def n_params(self) -> int:
        return (self.levels * self.table_size * self.features
                + self.encoding_dim * self.hidden + self.hidden
                + self.hidden * 3 + 3)


def _hash_corners(corners: np.ndarray, table_size: int) -> np.ndarray:
    """(N, 8, 3) integer corner coords -> (N, 8) table indices."""
    c = corners.astype(np.uint64)
    h = c[..., 0] * _HASH_PRIMES[0]
    h ^= c[..., 1] * _HASH_PRIMES[1]
    h ^= c[..., 2] * _HASH_PRIMES[2]
    return (h % np.uint64(table_size)).astype(np.int64)


_CORNER_OFFSETS = np.array(
    [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
    dtype=np.int64)


class ColorField:
    """Trainable point-to-RGB field.

    Parameters live as float64 numpy arrays: one hash table per level plus
    the MLP weights. A zero output layer makes a fresh field paint
    everything 0.5 gray.
    """

    def __init__(self, config: FieldConfig = FieldConfig(), seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.tables = [
            rng.uniform(-INIT_TABLE_SCALE, INIT_TABLE_SCALE,
                        (c.table_size, c.features))
            for _ in range(c.levels)
        ]
        fan_in = c.encoding_dim
        self.w1 = rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, c.hidden))
        self.b1 = np.zeros(c.hidden)
        self.w2 = np.zeros((c.hidden, 3))
        self.b2 = np.zeros(3)
        self._resolutions = c.resolutions()

    # --- parameter plumbing -------------------------------------------------

    def flatten(self) -> np.ndarray:
        """All parameters as one float64 vector: tables in level order
        (row-major), then w1, b1, w2, b2."""
        parts = [t.ravel() for t in self.tables]
        parts += [self.w1.ravel(), self.b1, self.w2.ravel(), self.b2]
        return np.concatenate(parts)

    def unflatten(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.config.n_params,):
            raise ContractError(
                f"expected {self.config.n_params} parameters, got {flat.shape}")
        c = self.config
        pos = 0
        for i in range(c.levels):
            n = c.table_size * c.features
            self.tables[i] = flat[pos:pos + n].reshape(c.table_size, c.features).copy()
            pos += n
        n = c.encoding_dim * c.hidden
        self.w1 = flat[pos:pos + n].reshape(c.encoding_dim, c.hidden).copy()
        pos += n
        self.b1 = flat[pos:pos + c.hidden].copy()
        pos += c.hidden
        self.w2 = flat[pos:pos + c.hidden * 3].reshape(c.hidden, 3).copy()
        pos += c.hidden * 3
        self.b2 = flat[pos:pos + 3].copy()

    # --- forward ------------------------------------------------------------

    def _prepare(self, points, stats=None):
        p = np.asarray(points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ContractError(f"points must be (N, 3), got {p.shape}")
        if not np.isfinite(p).all():
            raise ContractError("points must be finite")
        outside = (p < 0.0) | (p > 1.0)
        if outside.any():
            if stats is not None:
                stats["clamped"] = stats.get("clamped", 0) + int(
                    outside.any(axis=1).sum())
            p = np.clip(p, 0.0, 1.0)
        return p

    def _encode(self, p):
        """Hash-encode (N, 3) unit points; returns (enc, per-level cache)."""
        n = len(p)
        c = self.config
        enc = np.empty((n, c.encoding_dim))
        cache = []
        for lvl, res in enumerate(self._resolutions):
            scaled = p * res
            base = np.minimum(np.floor(scaled), res - 1).astype(np.int64)
            frac = scaled - base
            corners = base[:, None, :] + _CORNER_OFFSETS[None, :, :]
            idx = _hash_corners(corners, c.table_size)
            # trilinear weight of each corner
            w = np.ones((n, 8))
            for axis in range(3):
                fa = frac[:, axis:axis + 1]
                w = w * np.where(_CORNER_OFFSETS[None, :, axis] == 1, fa, 1.0 - fa)
            feats = self.tables[lvl][idx]            # (N, 8, F)
            enc[:, lvl * c.features:(lvl + 1) * c.features] = (
                w[:, :, None] * feats).sum(axis=1)
            cache.append((idx, w))
        return enc, cache

    def eval(self, points, stats: dict | None = None) -> np.ndarray:
        """RGB in [0,1] for (N, 3) points in the unit cube.

        Points outside are clamped; pass a stats dict to count them under
        the "clamped" key.
        """
        p = self._prepare(points, stats)
        if len(p) == 0:
            return np.zeros((0, 3))
        enc, _ = self._encode(p)
        a1 = np.maximum(enc @ self.w1 + self.b1, 0.0)
        z2 = a1 @ self.w2 + self.b2
        return 1.0 / (1.0 + np.exp(-z2))

    def eval_with_grad(self, points, upstream,
                       stats: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
        """RGB plus d(sum(upstream * RGB))/d(params) as a flat vector.

        Reverse-mode through the exact forward computation; the only
        deviation is the documented logistic slope floor.
        """
        upstream = np.asarray(upstream, dtype=np.float64)
        p = self._prepare(points, stats)
        if upstream.shape != (len(p), 3):
            raise ContractError(
                f"upstream must be (N, 3) matching points, got {upstream.shape}")
        if not np.isfinite(upstream).all():
            raise ContractError("upstream gradient must be finite")
        c = self.config
        if len(p) == 0:
            return np.zeros((0, 3)), np.zeros(c.n_params)

        enc, cache = self._encode(p)
        z1 = enc @ self.w1 + self.b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ self.w2 + self.b2
        s = 1.0 / (1.0 + np.exp(-z2))

        slope = np.maximum(s * (1.0 - s), SQUASH_SLOPE_FLOOR)
        dz2 = upstream * slope
        g_w2 = a1.T @ dz2
        g_b2 = dz2.sum(axis=0)
        dz1 = (dz2 @ self.w2.T) * (z1 > 0.0)
        g_w1 = enc.T @ dz1
        g_b1 = dz1.sum(axis=0)
        denc = dz1 @ self.w1.T

        grads = []
        for lvl in range(c.levels):
            idx, w = cache[lvl]
            g_table = np.zeros((c.table_size, c.features))
            d_lvl = denc[:, lvl * c.features:(lvl + 1) * c.features]
            contrib = w[:, :, None] * d_lvl[:, None, :]     # (N, 8, F)
            np.add.at(g_table, idx.ravel(), contrib.reshape(-1, c.features))
            grads.append(g_table.ravel())
        grads += [g_w1.ravel(), g_b1, g_w2.ravel(), g_b2]
        return s, np.concatenate(grads)


def normalize_points(points, bbox) -> np.ndarray:
    """Map world points so the bbox spans [margin, 1-margin]^3 per axis.

    Degenerate axes (zero extent) collapse to 0.5.
    """
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bbox)
    p = np.asarray(points, dtype=np.float64)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    unit = (p - lo) / safe
    unit = np.where(span > 0, unit, 0.5)
    return NORMALIZE_MARGIN + (1.0 - 2.0 * NORMALIZE_MARGIN) * unit


def save_field(path, field: ColorField) -> None:
    c = field.config
    flat = field.flatten().astype("<f4")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<7I", CHECKPOINT_VERSION, c.levels,
                             c.base_resolution, c.max_resolution,
                             c.table_size, c.features, c.hidden))
        fh.write(struct.pack("<Q", flat.size))
        fh.write(flat.tobytes())


def load_field(path) -> ColorField:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise MeshFormatError("bad field checkpoint magic", path=str(path))
    if len(blob) < 40:
        raise MeshFormatError("truncated field checkpoint header", path=str(path))
    version, levels, base_res, max_res, table, features, hidden = struct.unpack(
        "<7I", blob[4:32])
    if version != CHECKPOINT_VERSION:
        raise MeshFormatError(f"unsupported checkpoint version {version}",
                              path=str(path))
    (count,) = struct.unpack("<Q", blob[32:40])
    config = FieldConfig(levels=levels, base_resolution=base_res,
                         max_resolution=max_res, table_size=table,
                         features=features, hidden=hidden)
    if count != config.n_params:
        raise MeshFormatError(
            f"checkpoint declares {count} parameters, config needs "
            f"{config.n_params}", path=str(path))
    expect = 40 + 4 * count
    if len(blob) != expect:
        raise MeshFormatError(
            f"checkpoint is {len(blob)} bytes, expected {expect}",
            path=str(path))
    flat = np.frombuffer(blob, dtype="<f4", offset=40).astype(np.float64)
    field = ColorField(config, seed=0)
    field.unflatten(flat)
    return field
