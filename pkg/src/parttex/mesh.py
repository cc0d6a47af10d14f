"""Triangle mesh representation, validation, normals, and part extraction.

Scene units are centimeters throughout; loaders never rescale. A mesh is
immutable after construction: every operation returns a new :class:`Mesh`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .errors import MeshValidationError
from .validation import MAX_LABEL_CODE

log = logging.getLogger(__name__)

NORMAL_UNIT_TOL = 1e-6


class PartLabel(IntEnum):
    """Semantic part codes: 5 foreground classes plus background, 8-bit."""

    BACKGROUND = 0
    FACE_HAIR = 1
    UPPER_CLOTHES = 2
    LOWER_CLOTHES = 3
    FOOTWEAR = 4
    OTHERS = 5


FOREGROUND_LABELS = tuple(l for l in PartLabel if l != PartLabel.BACKGROUND)


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle surface with optional per-vertex attributes.

    Attributes:
        vertices: (V, 3) float64 positions in centimeters.
        faces: (F, 3) int32 vertex index triples.
        vertex_normals: optional (V, 3) unit vectors.
        vertex_colors: optional (V, 3) RGB in [0, 1].
        vertex_labels: optional (V,) uint8 part codes.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray | None = None
    vertex_colors: np.ndarray | None = None
    vertex_labels: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", _as_float_array(self.vertices, "vertices"))
        object.__setattr__(self, "faces", _as_face_array(self.faces))
        for name in ("vertex_normals", "vertex_colors"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, _as_float_array(val, name))
        if self.vertex_labels is not None:
            object.__setattr__(
                self, "vertex_labels", np.asarray(self.vertex_labels, dtype=np.uint8)
            )
        _validate(self)
        for name in ("vertices", "faces", "vertex_normals", "vertex_colors", "vertex_labels"):
            val = getattr(self, name)
            if val is not None:
                val.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds as (min, max) corners."""
        if self.n_vertices == 0:
            z = np.zeros(3)
            return z, z
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def with_(self, **kwargs) -> "Mesh":
        """Copy with the given attributes replaced (re-validates)."""
        return replace(self, **kwargs)


def _as_float_array(x, name):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise MeshValidationError(f"{name} must have shape (N, 3), got {arr.shape}")
    return arr


def _as_face_array(x):
    arr = np.ascontiguousarray(x, dtype=np.int32)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise MeshValidationError(f"faces must have shape (F, 3), got {arr.shape}")
    return arr


def _validate(mesh: Mesh) -> None:
    v, f = mesh.vertices, mesh.faces
    if not np.all(np.isfinite(v)):
        raise MeshValidationError("vertices contain non-finite values")
    if f.size:
        if f.min() < 0 or f.max() >= len(v):
            raise MeshValidationError(
                f"face index out of range: valid 0..{len(v) - 1}, "
                f"got {f.min()}..{f.max()}"
            )
        degenerate = (
            (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        )
        if degenerate.any():
            bad = int(np.flatnonzero(degenerate)[0])
            raise MeshValidationError(
                f"face {bad} repeats a vertex index: {f[bad].tolist()}"
            )
    n = mesh.vertex_normals
    if n is not None:
        if len(n) != len(v):
            raise MeshValidationError("vertex_normals length must match vertices")
        norms = np.linalg.norm(n, axis=1)
        if norms.size and np.abs(norms - 1.0).max() > NORMAL_UNIT_TOL:
            raise MeshValidationError(
                f"vertex normals must be unit length within {NORMAL_UNIT_TOL}"
            )
    c = mesh.vertex_colors
    if c is not None:
        if len(c) != len(v):
            raise MeshValidationError("vertex_colors length must match vertices")
        if c.size and (c.min() < 0.0 or c.max() > 1.0):
            raise MeshValidationError("vertex colors must lie in [0, 1]")
    lab = mesh.vertex_labels
    if lab is not None:
        if lab.ndim != 1 or len(lab) != len(v):
            raise MeshValidationError("vertex_labels must be (V,) matching vertices")
        if lab.size and lab.max() > MAX_LABEL_CODE:
            raise MeshValidationError(
                f"vertex labels must be <= {MAX_LABEL_CODE}, got {lab.max()}"
            )


def face_normals(mesh: Mesh, normalize: bool = True) -> np.ndarray:
    """Per-face normals; unnormalized vectors have length 2 * area."""
    v = mesh.vertices
    f = mesh.faces
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    n = np.cross(e1, e2)
    if normalize:
        lens = np.linalg.norm(n, axis=1, keepdims=True)
        with np.errstate(invalid="ignore"):
            n = np.where(lens > 0, n / lens, 0.0)
    return n


def compute_vertex_normals(mesh: Mesh) -> Mesh:
    """Attach area-weighted per-vertex normals.

    Summing the raw cross products of incident faces weights each face
    normal by twice its area. Vertices whose incident faces all have zero
    area get the fallback normal (0, 0, 1) and are logged.
    """
    normals, degenerate = vertex_normal_arrays(mesh.vertices, mesh.faces)
    if degenerate.any():
        ids = np.flatnonzero(degenerate)
        log.warning(
            "%d vertices have a zero-area star, normal set to (0, 0, 1): %s",
            len(ids),
            ids[:16].tolist(),
        )
    return mesh.with_(vertex_normals=normals)


def vertex_normal_arrays(vertices, faces) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted vertex normals plus a mask of degenerate vertices."""
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces)
    acc = np.zeros_like(v)
    if len(f):
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        for k in range(3):
            np.add.at(acc, f[:, k], cross)
    lens = np.linalg.norm(acc, axis=1)
    degenerate = lens <= 1e-300
    out = np.empty_like(v)
    out[degenerate] = (0.0, 0.0, 1.0)
    ok = ~degenerate
    out[ok] = acc[ok] / lens[ok, None]
    return out, degenerate


def extract_part(mesh: Mesh, part: PartLabel | int) -> Mesh:
    """Submesh of faces whose majority vertex label equals ``part``.

    A face belongs to a part when at least 2 of its 3 vertices carry that
    label; faces with 3 distinct labels belong to no part. Vertices are
    re-indexed compactly and colors/normals/labels carried over. An absent
    part yields an empty mesh.
    """
    if mesh.vertex_labels is None:
        raise MeshValidationError("extract_part requires vertex_labels")
    part = int(part)
    face_labels = mesh.vertex_labels[mesh.faces]  # (F, 3)
    count = (face_labels == part).sum(axis=1)
    keep = count >= 2
    return _submesh(mesh, keep)


def _submesh(mesh: Mesh, face_mask: np.ndarray) -> Mesh:
    faces = mesh.faces[face_mask]
    used = np.unique(faces)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int32)
    remap[used] = np.arange(len(used), dtype=np.int32)
    sel = lambda a: None if a is None else a[used]
    return Mesh(
        vertices=mesh.vertices[used] if len(used) else np.zeros((0, 3)),
        faces=remap[faces] if len(faces) else np.zeros((0, 3), dtype=np.int32),
        vertex_normals=sel(mesh.vertex_normals),
        vertex_colors=sel(mesh.vertex_colors),
        vertex_labels=sel(mesh.vertex_labels),
    )


def face_areas(mesh: Mesh) -> np.ndarray:
    return 0.5 * np.linalg.norm(face_normals(mesh, normalize=False), axis=1)


def sample_surface(mesh: Mesh, n: int, seed: int = 0) -> np.ndarray:
    """Area-uniform surface samples, (n, 3). Deterministic for fixed seed."""
    if mesh.n_faces == 0:
        raise MeshValidationError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    areas = face_areas(mesh)
    total = areas.sum()
    if total <= 0:
        raise MeshValidationError("mesh has zero total area")
    fi = rng.choice(mesh.n_faces, size=n, p=areas / total)
    u = rng.random(n)
    w = rng.random(n)
    flip = u + w > 1.0
    u[flip] = 1.0 - u[flip]
    w[flip] = 1.0 - w[flip]
    tri = mesh.vertices[mesh.faces[fi]]
    return (
        tri[:, 0]
        + u[:, None] * (tri[:, 1] - tri[:, 0])
        + w[:, None] * (tri[:, 2] - tri[:, 0])
    )
