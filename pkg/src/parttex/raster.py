"""Software orthographic rasterizer.

Produces the per-pixel buffers everything downstream consumes: normal maps
for segmentation requests, label maps for vote unprojection, and face-id +
barycentric pairs that make color rendering an exactly linear function of
per-vertex colors.

Conventions: pixel (row 0, col 0) is the top-left corner of the frame,
pixels sample at their centers, depth grows away from the camera and is
+inf on background. Triangles are rendered double-sided.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .mesh import Mesh, PartLabel
from .views import Viewpoint

MIN_RESOLUTION = 16
FACE_ID_NONE = -1
_DEGENERATE_AREA = 1e-12


@dataclass
class RenderBuffers:
    """Per-pixel rasterization state for one view.

    normal_map holds unit normals remapped to [0,1] via (n + 1) / 2;
    background pixels encode the zero vector (0.5 gray). face_id is
    FACE_ID_NONE and depth +inf exactly where mask is False.
    """

    normal_map: np.ndarray   # (H, W, 3) float64 in [0, 1]
    depth: np.ndarray        # (H, W) float64, +inf background
    face_id: np.ndarray      # (H, W) int32, FACE_ID_NONE background
    barycentric: np.ndarray  # (H, W, 3) float64, zeros background
    mask: np.ndarray         # (H, W) bool
    view: Viewpoint

    @property
    def resolution(self) -> int:
        return self.mask.shape[0]

    def validate(self) -> None:
        bg = ~self.mask
        if not np.all(np.isinf(self.depth[bg])):
            raise ContractError("background depth must be +inf")
        if not np.all(self.face_id[bg] == FACE_ID_NONE):
            raise ContractError("background face_id must be the sentinel")
        if not np.all(self.face_id[self.mask] >= 0):
            raise ContractError("foreground face_id must be a face index")
        if self.mask.any():
            b = self.barycentric[self.mask]
            if b.min() < 0 or np.abs(b.sum(axis=1) - 1.0).max() > 1e-6:
                raise ContractError("foreground barycentrics must be >= 0 and sum to 1")


def camera_coordinates(points, view: Viewpoint) -> np.ndarray:
    """World points to camera frame: x right, y up, z toward the camera."""
    p = np.asarray(points, dtype=np.float64)
    return (p - view.center) @ view.rotation


def project_points(points, view: Viewpoint) -> tuple[np.ndarray, np.ndarray]:
    """Continuous pixel coordinates (x, y) and depths for world points.

    x grows rightward, y downward; the frame spans [0, resolution] on both.
    Depth is distance along the viewing direction, zero at the frame center.
    """
    q = camera_coordinates(points, view)
    half = view.resolution / 2.0
    px = (q[:, 0] / view.half_extent + 1.0) * half
    py = (1.0 - q[:, 1] / view.half_extent) * half
    return np.column_stack([px, py]), -q[:, 2]


def rasterize(mesh: Mesh, view: Viewpoint) -> RenderBuffers:
    if view.resolution < MIN_RESOLUTION:
        raise ContractError(
            f"resolution must be >= {MIN_RESOLUTION}, got {view.resolution}")
    if mesh.vertex_normals is None:
        raise ContractError("rasterize requires vertex normals")

    res = view.resolution
    depth = np.full((res, res), np.inf)
    face_id = np.full((res, res), FACE_ID_NONE, dtype=np.int32)
    bary = np.zeros((res, res, 3))
    shaded = np.zeros((res, res, 3))

    if mesh.n_faces:
        pix, z = project_points(mesh.vertices, view)
        tri_pix = pix[mesh.faces]        # (F, 3, 2)
        tri_z = z[mesh.faces]            # (F, 3)
        tri_nrm = mesh.vertex_normals[mesh.faces]  # (F, 3, 3)

        # signed doubled area in pixel space; dividing the edge functions by
        # it yields interior barycentrics >= 0 regardless of winding
        e01 = tri_pix[:, 1] - tri_pix[:, 0]
        e02 = tri_pix[:, 2] - tri_pix[:, 0]
        area2 = e01[:, 0] * e02[:, 1] - e01[:, 1] * e02[:, 0]

        lo = np.ceil(tri_pix.min(axis=1) - 0.5).astype(np.int64)
        hi = np.floor(tri_pix.max(axis=1) - 0.5).astype(np.int64)
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, res - 1)
        live = (np.abs(area2) > _DEGENERATE_AREA) & np.all(lo <= hi, axis=1)

        for f in np.nonzero(live)[0]:
            x0, y0 = lo[f]
            x1, y1 = hi[f]
            xs = np.arange(x0, x1 + 1) + 0.5
            ys = np.arange(y0, y1 + 1) + 0.5
            px, py = np.meshgrid(xs, ys)

            (ax, ay), (bx, by), (cx, cy) = tri_pix[f]
            inv = 1.0 / area2[f]
            w0 = ((cx - bx) * (py - by) - (cy - by) * (px - bx)) * inv
            w1 = ((ax - cx) * (py - cy) - (ay - cy) * (px - cx)) * inv
            w2 = 1.0 - w0 - w1
            inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
            if not inside.any():
                continue

            zf = w0 * tri_z[f, 0] + w1 * tri_z[f, 1] + w2 * tri_z[f, 2]
            win = depth[y0:y1 + 1, x0:x1 + 1]
            # strict test: on exact depth ties the earlier (lower) face id stays
            upd = inside & (zf < win)
            if not upd.any():
                continue
            win[upd] = zf[upd]
            face_id[y0:y1 + 1, x0:x1 + 1][upd] = f
            w = np.stack([w0, w1, w2], axis=-1)
            bary[y0:y1 + 1, x0:x1 + 1][upd] = w[upd]
            n = w[upd] @ tri_nrm[f]
            norm = np.linalg.norm(n, axis=1, keepdims=True)
            shaded[y0:y1 + 1, x0:x1 + 1][upd] = n / np.maximum(norm, 1e-12)

    mask = face_id != FACE_ID_NONE
    # background holds the encoded null normal, 0.5 gray
    normal_map = np.full((res, res, 3), 0.5)
    normal_map[mask] = (shaded[mask] + 1.0) / 2.0
    return RenderBuffers(normal_map=normal_map, depth=depth, face_id=face_id,
                         barycentric=bary, mask=mask, view=view)


def interpolate_vertex_values(values, mesh: Mesh, buffers: RenderBuffers,
                              background=0.0) -> np.ndarray:
    """Barycentric blend of per-vertex values (V, C) into an (H, W, C) map."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != mesh.n_vertices:
        raise ContractError(
            f"per-vertex values have {values.shape[0]} rows for "
            f"{mesh.n_vertices} vertices")
    h, w = buffers.mask.shape
    out = np.full((h, w, values.shape[1]), background, dtype=np.float64)
    m = buffers.mask
    corners = values[mesh.faces[buffers.face_id[m]]]      # (P, 3, C)
    weights = buffers.barycentric[m]                      # (P, 3)
    out[m] = np.einsum("pk,pkc->pc", weights, corners)
    return out


def surface_points(mesh: Mesh, buffers: RenderBuffers) -> np.ndarray:
    """World-space surface point behind each pixel, (P, 3) over mask order."""
    m = buffers.mask
    corners = mesh.vertices[mesh.faces[buffers.face_id[m]]]
    return np.einsum("pk,pkc->pc", buffers.barycentric[m], corners)


def render_labels(mesh: Mesh, view: Viewpoint,
                  buffers: RenderBuffers | None = None) -> np.ndarray:
    """Label map (H, W) uint8: per pixel, the label of the barycentric-argmax
    vertex of the visible face; background code 0."""
    if mesh.vertex_labels is None:
        raise ContractError("render_labels requires vertex labels")
    if buffers is None:
        buffers = rasterize(mesh, view)
    labels = np.full(buffers.mask.shape, PartLabel.BACKGROUND, dtype=np.uint8)
    m = buffers.mask
    if m.any():
        pick = np.argmax(buffers.barycentric[m], axis=1)
        verts = mesh.faces[buffers.face_id[m], pick]
        labels[m] = mesh.vertex_labels[verts]
    return labels


def vote_vertices(mesh: Mesh, buffers: RenderBuffers) -> np.ndarray:
    """Per foreground pixel (mask order), the barycentric-argmax vertex id."""
    m = buffers.mask
    pick = np.argmax(buffers.barycentric[m], axis=1)
    return mesh.faces[buffers.face_id[m], pick]


def render_colors(mesh: Mesh, colors, view: Viewpoint,
                  buffers: RenderBuffers | None = None,
                  background=(1.0, 1.0, 1.0)) -> tuple[np.ndarray, RenderBuffers]:
    """Render per-vertex colors; returns (image, buffers).

    The image is exactly linear in the colors: pixel = sum_k bary_k *
    colors[face[k]], so buffers double as the sensitivity map and
    scatter_color_gradient is the exact adjoint.
    """
    colors = np.asarray(colors, dtype=np.float64)
    if colors.ndim != 2 or colors.shape[1] != 3:
        raise ContractError(f"colors must be (V, 3), got {colors.shape}")
    if np.nanmin(colors) < 0.0 or np.nanmax(colors) > 1.0 or not np.isfinite(colors).all():
        raise ContractError("colors must be finite and within [0, 1]")
    if buffers is None:
        buffers = rasterize(mesh, view)
    image = np.empty(buffers.normal_map.shape)
    image[:] = np.asarray(background, dtype=np.float64)
    m = buffers.mask
    corners = colors[mesh.faces[buffers.face_id[m]]]
    image[m] = np.einsum("pk,pkc->pc", buffers.barycentric[m], corners)
    return image, buffers


def scatter_color_gradient(grad_image, mesh: Mesh,
                           buffers: RenderBuffers) -> np.ndarray:
    """Adjoint of render_colors: (H, W, 3) upstream -> (V, 3) color gradient."""
    g = np.asarray(grad_image, dtype=np.float64)
    if g.shape != buffers.normal_map.shape:
        raise ContractError("gradient image shape must match the render")
    out = np.zeros((mesh.n_vertices, 3))
    m = buffers.mask
    verts = mesh.faces[buffers.face_id[m]]          # (P, 3)
    weighted = buffers.barycentric[m][:, :, None] * g[m][:, None, :]
    np.add.at(out, verts.ravel(), weighted.reshape(-1, 3))
    return out


def encode_normal_map(buffers: RenderBuffers) -> np.ndarray:
    """Quantize the (n+1)/2 normal map to uint8; background is mid-gray."""
    return np.clip(np.rint(buffers.normal_map * 255.0), 0, 255).astype(np.uint8)


def decode_normal_map(encoded) -> np.ndarray:
    """Invert the (n+1)/2 encode; linear, so quantization error stays 1/255."""
    return np.asarray(encoded, dtype=np.float64) / 255.0 * 2.0 - 1.0
