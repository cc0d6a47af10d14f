"""Reconstruction and segmentation quality metrics.

Distances are in the mesh's units (centimeters for scan-scale inputs).
Chamfer and point-to-surface run on a KD-tree fast path; the quadratic
brute-force versions stay available as reference oracles.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import ContractError
from .mesh import Mesh, PartLabel, sample_surface
from .validation import MAX_LABEL_CODE, as_points

PSNR_CAP_DB = 99.0
DEFAULT_P2S_SAMPLES = 100_000

_FOREGROUND = [int(c) for c in PartLabel if c != PartLabel.BACKGROUND]


def _nonempty(x, name):
    arr = as_points(x, name)
    if len(arr) == 0:
        raise ContractError(f"{name} must not be empty")
    return arr


# --- chamfer ---------------------------------------------------------------

def chamfer(a, b) -> float:
    """Symmetric chamfer distance: half the sum of both mean NN distances."""
    a = _nonempty(a, "a")
    b = _nonempty(b, "b")
    d_ab = cKDTree(b).query(a)[0]
    d_ba = cKDTree(a).query(b)[0]
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def chamfer_brute(a, b) -> float:
    """O(n*m) reference implementation of chamfer."""
    a = _nonempty(a, "a")
    b = _nonempty(b, "b")
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return 0.5 * (float(d.min(axis=1).mean()) + float(d.min(axis=0).mean()))


# --- point to surface ------------------------------------------------------

def _closest_on_triangles(p, a, b, c):
    """Closest point on each triangle for each (point, triangle) pair.

    All inputs broadcast to (..., 3); standard barycentric region walk.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    bp = p - b
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = p - c
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    def safe_div(num, den):
        return num / np.where(den == 0.0, 1.0, den)

    v_ab = safe_div(d1, d1 - d3)[..., None]
    w_ac = safe_div(d2, d2 - d6)[..., None]
    w_bc = safe_div(d4 - d3, (d4 - d3) + (d5 - d6))[..., None]
    denom = va + vb + vc
    v_in = safe_div(vb, denom)[..., None]
    w_in = safe_div(vc, denom)[..., None]

    out = a + ab * v_in + ac * w_in                       # interior default
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    out = np.where(on_bc[..., None], b + (c - b) * w_bc, out)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    out = np.where(on_ac[..., None], a + ac * w_ac, out)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    out = np.where(on_ab[..., None], a + ab * v_ab, out)
    at_c = (d6 >= 0) & (d5 <= d6)
    out = np.where(at_c[..., None], c, out)
    at_b = (d3 >= 0) & (d4 <= d3)
    out = np.where(at_b[..., None], b, out)
    at_a = (d1 <= 0) & (d2 <= 0)
    out = np.where(at_a[..., None], a, out)
    return out


def point_triangle_distances(points, mesh: Mesh) -> np.ndarray:
    """Exact distance from each point to the nearest triangle of the mesh."""
    points = _nonempty(points, "points")
    if mesh.n_faces == 0:
        raise ContractError("surface mesh has no faces")
    tri = mesh.vertices[mesh.faces]          # (F, 3, 3)

    if mesh.n_faces <= 512:
        best = np.full(len(points), np.inf)
        for start in range(0, len(points), 4096):
            chunk = points[start:start + 4096]
            closest = _closest_on_triangles(
                chunk[:, None, :], tri[None, :, 0], tri[None, :, 1],
                tri[None, :, 2])
            d = np.linalg.norm(chunk[:, None, :] - closest, axis=2)
            best[start:start + 4096] = d.min(axis=1)
        return best

    # prune: distance to nearest vertex bounds the answer from above, and
    # |p - centroid| - max_tri_radius bounds each triangle from below
    centroids = tri.mean(axis=1)
    radius = np.linalg.norm(tri - centroids[:, None, :], axis=2).max()
    upper = cKDTree(mesh.vertices).query(points)[0]
    ctree = cKDTree(centroids)
    best = np.empty(len(points))
    groups = ctree.query_ball_point(points, upper + radius + 1e-12)
    for i, cand in enumerate(groups):
        cand = np.asarray(cand, dtype=np.int64)
        closest = _closest_on_triangles(points[i], tri[cand, 0], tri[cand, 1],
                                        tri[cand, 2])
        best[i] = np.linalg.norm(points[i] - closest, axis=1).min()
    return best


def p2s(points, surface: Mesh) -> float:
    """Mean exact point-to-triangle distance from points to the surface."""
    return float(point_triangle_distances(points, surface).mean())


def p2s_brute(points, surface: Mesh) -> float:
    """O(n*m) reference: test every point against every triangle."""
    points = _nonempty(points, "points")
    if surface.n_faces == 0:
        raise ContractError("surface mesh has no faces")
    tri = surface.vertices[surface.faces]
    closest = _closest_on_triangles(points[:, None, :], tri[None, :, 0],
                                    tri[None, :, 1], tri[None, :, 2])
    d = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return float(d.min(axis=1).mean())


def p2s_mesh(pred: Mesh, gt: Mesh, n_samples: int = DEFAULT_P2S_SAMPLES,
             seed: int = 0) -> float:
    """P2S from area-uniform samples of the reconstruction to the GT surface."""
    samples = sample_surface(pred, n_samples, seed=seed)
    return p2s(samples, gt)


# --- label metrics ---------------------------------------------------------

def label_acc(pred_labels, gt_labels) -> float:
    pred = np.asarray(pred_labels)
    gt = np.asarray(gt_labels)
    if pred.shape != gt.shape:
        raise ContractError(
            f"label arrays must align, got {pred.shape} vs {gt.shape}")
    if pred.size == 0:
        raise ContractError("label arrays must not be empty")
    return float((pred == gt).mean())


def part_cd(pred: Mesh, gt: Mesh) -> tuple[float | None, dict]:
    """Mean chamfer over foreground parts present in both meshes.

    Returns (mean or None, detail) where detail maps part name to its
    chamfer and lists parts excluded because a side lacks them.
    """
    if pred.vertex_labels is None or gt.vertex_labels is None:
        raise ContractError("part_cd requires labeled meshes")
    per_part: dict[str, float] = {}
    excluded: dict[str, str] = {}
    for code in _FOREGROUND:
        name = PartLabel(code).name.lower()
        in_pred = pred.vertices[pred.vertex_labels == code]
        in_gt = gt.vertices[gt.vertex_labels == code]
        if len(in_pred) and len(in_gt):
            per_part[name] = chamfer(in_pred, in_gt)
        elif len(in_pred) or len(in_gt):
            side = "gt" if len(in_pred) else "pred"
            excluded[name] = f"missing on {side} side"
    detail = {"per_part": per_part, "excluded": excluded}
    if not per_part:
        detail["reason"] = "no part present in both meshes"
        return None, detail
    return float(np.mean(list(per_part.values()))), detail


def part_iou(pred_views, gt_views) -> tuple[float, list[float]]:
    """Mean part-mask IoU: per view, average over parts present in either
    map, then average over views."""
    if len(pred_views) != len(gt_views) or not pred_views:
        raise ContractError("need equally many non-empty view lists")
    per_view = []
    for pred, gt in zip(pred_views, gt_views):
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ContractError(
                f"label map resolutions differ: {pred.shape} vs {gt.shape}")
        if max(pred.max(initial=0), gt.max(initial=0)) > MAX_LABEL_CODE:
            raise ContractError("label codes must lie in 0..5")
        ious = []
        for code in _FOREGROUND:
            p = pred == code
            g = gt == code
            union = int((p | g).sum())
            if union == 0:
                continue
            ious.append(int((p & g).sum()) / union)
        per_view.append(float(np.mean(ious)) if ious else 1.0)
    return float(np.mean(per_view)), per_view


def psnr(img_a, img_b, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE), capped at 99 dB for identical images."""
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ContractError("images must not be empty")
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


# --- report ----------------------------------------------------------------

@dataclass
class MetricReport:
    """Serializable bundle of every metric the evaluator can produce.

    Metrics that could not be computed stay None; lpips is always reported
    unavailable because it needs a pretrained perceptual network.
    """

    p2s_cm: float | None = None
    cd_cm: float | None = None
    part_cd_cm: float | None = None
    part_cd_detail: dict = dataclass_field(default_factory=dict)
    part_iou: float | None = None
    part_iou_per_view: list = dataclass_field(default_factory=list)
    label_acc: float | None = None
    psnr_db_per_view: list = dataclass_field(default_factory=list)
    psnr_db_mean: float | None = None
    counts: dict = dataclass_field(default_factory=dict)
    lpips: dict = dataclass_field(default_factory=lambda: {
        "available": False,
        "reason": "requires a pretrained perceptual network",
    })

    def to_json(self) -> dict:
        return {
            "p2s_cm": self.p2s_cm,
            "cd_cm": self.cd_cm,
            "part_cd_cm": self.part_cd_cm,
            "part_cd_detail": self.part_cd_detail,
            "part_iou": self.part_iou,
            "part_iou_per_view": self.part_iou_per_view,
            "label_acc": self.label_acc,
            "psnr_db_per_view": self.psnr_db_per_view,
            "psnr_db_mean": self.psnr_db_mean,
            "counts": self.counts,
            "lpips": self.lpips,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MetricReport":
        return cls(**obj)

    def save(self, path) -> None:
        with open(Path(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "MetricReport":
        with open(Path(path), "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def compare_meshes(pred: Mesh, gt: Mesh, n_samples: int = DEFAULT_P2S_SAMPLES,
                   seed: int = 0, resolution: int = 512) -> MetricReport:
    """Full evaluation of a reconstructed mesh against ground truth.

    Geometry metrics always run; label metrics need labels on both sides;
    IoU and PSNR render the four turntable views at the given resolution.
    """
    from .raster import render_colors, render_labels
    from .views import cardinal_viewpoints, fit_frame

    report = MetricReport()
    # Same seed on both sides: identical meshes then yield identical
    # sample sets, so the chamfer of an identity comparison is exactly 0.
    pred_samples = sample_surface(pred, n_samples, seed=seed)
    gt_samples = sample_surface(gt, n_samples, seed=seed)
    report.p2s_cm = p2s(pred_samples, gt)
    report.cd_cm = chamfer(pred_samples, gt_samples)
    report.counts = {
        "pred_samples": len(pred_samples),
        "gt_samples": len(gt_samples),
        "pred_vertices": pred.n_vertices,
        "gt_vertices": gt.n_vertices,
    }

    both_labeled = pred.vertex_labels is not None and gt.vertex_labels is not None
    if both_labeled:
        report.part_cd_cm, report.part_cd_detail = part_cd(pred, gt)
        if pred.n_vertices == gt.n_vertices:
            report.label_acc = label_acc(pred.vertex_labels, gt.vertex_labels)
        center, half = fit_frame(gt)
        views = [v.framed(center, half).with_resolution(resolution)
                 for v in cardinal_viewpoints()]
        pred_n = pred if pred.vertex_normals is not None else _with_normals(pred)
        gt_n = gt if gt.vertex_normals is not None else _with_normals(gt)
        pred_maps = [render_labels(pred_n, v) for v in views]
        gt_maps = [render_labels(gt_n, v) for v in views]
        report.part_iou, report.part_iou_per_view = part_iou(pred_maps, gt_maps)
        if pred.vertex_colors is not None and gt.vertex_colors is not None:
            vals = []
            for v in views:
                img_p, _ = render_colors(pred_n, pred.vertex_colors, v)
                img_g, _ = render_colors(gt_n, gt.vertex_colors, v)
                vals.append(psnr(img_p, img_g))
            report.psnr_db_per_view = vals
            report.psnr_db_mean = float(np.mean(vals))
        report.counts["iou_views"] = len(views)
    return report


def _with_normals(mesh: Mesh) -> Mesh:
    from .mesh import compute_vertex_normals
    return compute_vertex_normals(mesh)
