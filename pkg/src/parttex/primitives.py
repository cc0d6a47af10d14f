"""Procedural test meshes: cube, icosphere, planar patch.

These are desk-scale stand-ins for scanned surfaces, used by the test
suite and by the CLI examples.
"""
from __future__ import annotations

import numpy as np

from .mesh import Mesh, compute_vertex_normals

# Unit cube corners; faces triangulated so every corner lies either on all
# three of its faces' diagonals or on none, which makes the area-weighted
# corner normals exactly normalize(+-1, +-1, +-1).
_CUBE_VERTS = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
], dtype=np.float64)

_CUBE_FACES = np.array([
    [0, 2, 1], [0, 3, 2],  # z = 0, diagonal 0-2
    [4, 5, 7], [5, 6, 7],  # z = 1, diagonal 5-7
    [0, 1, 5], [0, 5, 4],  # y = 0, diagonal 0-5
    [3, 7, 2], [2, 7, 6],  # y = 1, diagonal 2-7
    [0, 4, 7], [0, 7, 3],  # x = 0, diagonal 0-7
    [1, 2, 5], [2, 6, 5],  # x = 1, diagonal 2-5
], dtype=np.int32)


def unit_cube(size: float = 1.0, center: bool = False, normals: bool = True) -> Mesh:
    """Axis-aligned cube with 8 vertices and 12 triangles."""
    v = _CUBE_VERTS * size
    if center:
        v = v - size / 2.0
    mesh = Mesh(vertices=v, faces=_CUBE_FACES.copy())
    return compute_vertex_normals(mesh) if normals else mesh


def icosphere(subdivisions: int = 3, radius: float = 1.0, normals: bool = True) -> Mesh:
    """Geodesic sphere from a subdivided icosahedron, centered at the origin.

    Subdivision level s gives 20 * 4**s faces.
    """
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts[0])
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key in cache:
                return cache[key]
            m = np.array(verts[a]) + np.array(verts[b])
            m /= np.linalg.norm(m)
            verts.append(tuple(m))
            cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts, dtype=np.float64) * radius
    mesh = Mesh(vertices=v, faces=np.array(faces, dtype=np.int32))
    if normals:
        # exact analytic normals for a sphere
        n = v / np.linalg.norm(v, axis=1, keepdims=True)
        mesh = mesh.with_(vertex_normals=n)
    return mesh


def grid_patch(nx: int = 8, ny: int = 8, size: float = 1.0, z: float = 0.0) -> Mesh:
    """Planar rectangle in the z-plane, (nx+1)*(ny+1) vertices, CCW from +z."""
    xs = np.linspace(0.0, size, nx + 1)
    ys = np.linspace(0.0, size, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    v = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])
    faces = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b = a + 1
            c = a + nx + 1
            d = c + 1
            faces += [[a, b, d], [a, d, c]]
    mesh = Mesh(vertices=v, faces=np.array(faces, dtype=np.int32))
    return compute_vertex_normals(mesh)


def subdivided_cube(per_side: int = 8, size: float = 1.0, normals: bool = True) -> Mesh:
    """Cube with each square face split into a per_side x per_side grid.

    Shared edges and corners are welded, so the surface is watertight.
    """
    step = size / per_side
    verts: list[tuple[float, float, float]] = []
    index: dict[tuple[int, int, int], int] = {}

    def vid(i: int, j: int, k: int) -> int:
        key = (i, j, k)
        if key not in index:
            index[key] = len(verts)
            verts.append((i * step, j * step, k * step))
        return index[key]

    faces = []
    n = per_side
    for a in range(n):
        for b in range(n):
            quads = [
                # (v00, v10, v11, v01) with outward CCW winding
                ((a, b, 0), (a, b + 1, 0), (a + 1, b + 1, 0), (a + 1, b, 0)),      # z=0
                ((a, b, n), (a + 1, b, n), (a + 1, b + 1, n), (a, b + 1, n)),      # z=n
                ((a, 0, b), (a + 1, 0, b), (a + 1, 0, b + 1), (a, 0, b + 1)),      # y=0
                ((a, n, b), (a, n, b + 1), (a + 1, n, b + 1), (a + 1, n, b)),      # y=n
                ((0, a, b), (0, a, b + 1), (0, a + 1, b + 1), (0, a + 1, b)),      # x=0
                ((n, a, b), (n, a + 1, b), (n, a + 1, b + 1), (n, a, b + 1)),      # x=n
            ]
            for q in quads:
                i0, i1, i2, i3 = (vid(*p) for p in q)
                faces += [[i0, i1, i2], [i0, i2, i3]]
    mesh = Mesh(vertices=np.array(verts, dtype=np.float64),
                faces=np.array(faces, dtype=np.int32))
    return compute_vertex_normals(mesh) if normals else mesh
