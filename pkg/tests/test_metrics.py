"""Metric tests: hand values, brute-force oracles, invariances."""
import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from parttex import Mesh, MetricReport, chamfer, compare_meshes, p2s_mesh, psnr
from parttex.errors import ContractError
from parttex.metrics import (
    PSNR_CAP_DB,
    chamfer_brute,
    label_acc,
    p2s,
    p2s_brute,
    part_cd,
    part_iou,
    point_triangle_distances,
)
from parttex.primitives import icosphere


def five_part_mesh(shift_part=None, offset=(1.0, 0.0, 0.0)):
    """One triangle per foreground part, stacked along y in the x=0 plane.

    Triangles sit in the yz plane, so shifting one part along x moves every
    vertex exactly |offset| away from its own translate and no closer to
    any other vertex of the same part.
    """
    verts, faces, labels = [], [], []
    for k, code in enumerate((1, 2, 3, 4, 5)):
        base = np.array([
            [0.0, 10.0 * k, 0.0],
            [0.0, 10.0 * k + 1.0, 0.0],
            [0.0, 10.0 * k, 1.0],
        ])
        if code == shift_part:
            base = base + np.asarray(offset)
        start = len(verts)
        verts.extend(base)
        faces.append([start, start + 1, start + 2])
        labels.extend([code] * 3)
    return Mesh(vertices=np.array(verts), faces=np.array(faces),
                vertex_labels=np.array(labels, dtype=np.uint8))


# --- chamfer -----------------------------------------------------------------


def test_chamfer_identity_zero():
    pts = np.random.default_rng(0).normal(size=(40, 3))
    assert chamfer(pts, pts) == 0.0


def test_chamfer_hand_value():
    a = np.array([[0.0, 0.0, 0.0]])
    b = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    # one direction: nearest of the two is at distance 1
    # other direction: distances 1 and 2 average to 1.5
    assert chamfer(a, b) == pytest.approx(1.25, abs=1e-15)


def test_chamfer_symmetric():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(30, 3)), rng.normal(size=(50, 3))
    assert chamfer(a, b) == pytest.approx(chamfer(b, a), abs=1e-15)


def test_chamfer_matches_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a = rng.normal(size=(rng.integers(1, 500), 3))
        b = rng.normal(size=(rng.integers(1, 500), 3))
        assert abs(chamfer(a, b) - chamfer_brute(a, b)) < 1e-9


def test_chamfer_rigid_invariance():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(60, 3)), rng.normal(size=(45, 3))
    base = chamfer(a, b)
    for seed in range(5):
        rot = Rotation.random(rng=seed).as_matrix()
        shift = rng.normal(size=3)
        moved = chamfer(a @ rot.T + shift, b @ rot.T + shift)
        assert abs(moved - base) < 1e-9


def test_chamfer_rejects_empty():
    with pytest.raises(ContractError):
        chamfer(np.zeros((0, 3)), np.zeros((3, 3)))
    with pytest.raises(ContractError):
        chamfer(np.zeros((3, 3)), np.zeros((0, 3)))


# --- point to surface ---------------------------------------------------------


def ground_triangle():
    verts = np.array([[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [0.0, 4.0, 0.0]])
    return Mesh(vertices=verts, faces=np.array([[0, 1, 2]]))


def test_p2s_on_surface_points():
    mesh = icosphere(2)
    # vertices and face centroids lie exactly on the surface
    centroids = mesh.vertices[mesh.faces].mean(axis=1)
    pts = np.vstack([mesh.vertices[:20], centroids[:20]])
    assert p2s(pts, mesh) < 1e-12


def test_p2s_height_above_plane():
    assert p2s(np.array([[1.0, 1.0, 1.0]]), ground_triangle()) == pytest.approx(
        1.0, abs=1e-15)


def test_p2s_edge_and_corner_regions():
    mesh = ground_triangle()
    # beyond the corner at the origin: closest point is the corner itself
    d = point_triangle_distances(np.array([[-3.0, -4.0, 0.0]]), mesh)
    assert d[0] == pytest.approx(5.0, abs=1e-12)
    # past the x edge: closest point is on the edge, not a corner
    d = point_triangle_distances(np.array([[2.0, -2.0, 0.0]]), mesh)
    assert d[0] == pytest.approx(2.0, abs=1e-12)


def test_p2s_matches_brute_force():
    rng = np.random.default_rng(4)
    mesh = icosphere(1)  # 80 faces, below the pruning threshold
    assert mesh.n_faces <= 512
    pts = rng.normal(size=(200, 3)) * 2.0
    assert abs(p2s(pts, mesh) - p2s_brute(pts, mesh)) < 1e-9


def test_p2s_pruned_path_matches_brute_force():
    rng = np.random.default_rng(5)
    mesh = icosphere(3)  # 1280 faces forces the KD-tree pruning path
    assert mesh.n_faces > 512
    pts = rng.normal(size=(150, 3)) * 1.5
    fast = point_triangle_distances(pts, mesh)
    tri = mesh.vertices[mesh.faces]
    from parttex.metrics import _closest_on_triangles
    closest = _closest_on_triangles(pts[:, None, :], tri[None, :, 0],
                                    tri[None, :, 1], tri[None, :, 2])
    brute = np.linalg.norm(pts[:, None, :] - closest, axis=2).min(axis=1)
    np.testing.assert_allclose(fast, brute, rtol=0, atol=1e-9)


def test_p2s_mesh_samples_reconstruction():
    sphere = icosphere(2)
    assert p2s_mesh(sphere, sphere, n_samples=500) < 1e-9


def test_p2s_rejects_empty():
    with pytest.raises(ContractError):
        p2s(np.zeros((0, 3)), ground_triangle())
    with pytest.raises(ContractError):
        p2s(np.zeros((1, 3)), Mesh(vertices=np.zeros((3, 3)),
                                   faces=np.zeros((0, 3), dtype=np.int64)))


# --- part chamfer -------------------------------------------------------------


def test_part_cd_identity():
    mesh = five_part_mesh()
    value, detail = part_cd(mesh, mesh)
    assert value == 0.0
    assert len(detail["per_part"]) == 5
    assert detail["excluded"] == {}


def test_part_cd_one_shifted_part():
    pred = five_part_mesh()
    gt = five_part_mesh(shift_part=1)
    value, detail = part_cd(pred, gt)
    assert value == pytest.approx(0.2, abs=1e-15)
    assert detail["per_part"]["face_hair"] == pytest.approx(1.0, abs=1e-15)


def test_part_cd_excludes_one_sided_parts():
    pred = five_part_mesh()
    gt_labels = pred.vertex_labels.copy()
    gt_labels[gt_labels == 4] = 3  # part 4 vanishes from gt
    gt = pred.with_(vertex_labels=gt_labels)
    value, detail = part_cd(pred, gt)
    assert "excluded" in detail
    [(name, reason)] = detail["excluded"].items()
    assert "gt" in reason
    assert name not in detail["per_part"]


def test_part_cd_requires_labels():
    mesh = five_part_mesh()
    with pytest.raises(ContractError):
        part_cd(mesh.with_(vertex_labels=None), mesh)


def test_part_cd_no_common_parts():
    pred = five_part_mesh()
    pred = pred.with_(vertex_labels=np.full(15, 1, dtype=np.uint8))
    gt = pred.with_(vertex_labels=np.full(15, 2, dtype=np.uint8))
    value, detail = part_cd(pred, gt)
    assert value is None
    assert "reason" in detail


# --- part IoU -----------------------------------------------------------------


def test_part_iou_identical():
    rng = np.random.default_rng(6)
    maps = [rng.integers(0, 6, (16, 16), dtype=np.uint8) for _ in range(4)]
    mean, per_view = part_iou(maps, [m.copy() for m in maps])
    assert mean == 1.0
    assert per_view == [1.0] * 4


def test_part_iou_two_by_two_hand_case():
    pred = np.array([[2, 2], [0, 0]], dtype=np.uint8)
    gt = np.array([[2, 0], [0, 0]], dtype=np.uint8)
    mean, per_view = part_iou([pred], [gt])
    assert mean == 0.5
    assert per_view == [0.5]


def test_part_iou_disjoint():
    pred = np.full((4, 4), 1, dtype=np.uint8)
    gt = np.full((4, 4), 2, dtype=np.uint8)
    mean, _ = part_iou([pred], [gt])
    assert mean == 0.0


def test_part_iou_relabel_invariance():
    rng = np.random.default_rng(7)
    pred = [rng.integers(0, 6, (12, 12), dtype=np.uint8) for _ in range(4)]
    gt = [rng.integers(0, 6, (12, 12), dtype=np.uint8) for _ in range(4)]
    base, _ = part_iou(pred, gt)
    # permute foreground codes consistently on both sides; background fixed
    perm = np.array([0, 3, 5, 1, 2, 4], dtype=np.uint8)
    mean, _ = part_iou([perm[m] for m in pred], [perm[m] for m in gt])
    assert mean == pytest.approx(base, abs=1e-15)


def test_part_iou_resolution_mismatch():
    with pytest.raises(ContractError, match="resolution"):
        part_iou([np.zeros((4, 4), dtype=np.uint8)],
                 [np.zeros((5, 5), dtype=np.uint8)])


def test_part_iou_rejects_bad_codes():
    with pytest.raises(ContractError, match="codes"):
        part_iou([np.full((2, 2), 9, dtype=np.uint8)],
                 [np.zeros((2, 2), dtype=np.uint8)])


def test_part_iou_empty_views():
    with pytest.raises(ContractError):
        part_iou([], [])


# --- label accuracy -----------------------------------------------------------


def test_label_acc_values():
    gt = np.array([1, 2, 3, 4], dtype=np.uint8)
    assert label_acc(gt, gt) == 1.0
    pred = gt.copy()
    pred[0] = 5
    assert label_acc(pred, gt) == 0.75


def test_label_acc_relabel_invariance():
    rng = np.random.default_rng(8)
    pred = rng.integers(0, 6, 200, dtype=np.uint8)
    gt = rng.integers(0, 6, 200, dtype=np.uint8)
    perm = np.array([0, 2, 4, 5, 3, 1], dtype=np.uint8)
    assert label_acc(perm[pred], perm[gt]) == label_acc(pred, gt)


def test_label_acc_validation():
    with pytest.raises(ContractError):
        label_acc(np.zeros(3), np.zeros(4))
    with pytest.raises(ContractError):
        label_acc(np.zeros(0), np.zeros(0))


# --- PSNR ---------------------------------------------------------------------


def test_psnr_identical_hits_cap():
    img = np.random.default_rng(9).uniform(0, 1, (8, 8, 3))
    assert psnr(img, img) == PSNR_CAP_DB == 99.0


def test_psnr_hand_value():
    a = np.full((4, 4, 3), 0.5)
    b = np.zeros((4, 4, 3))
    assert psnr(a, b) == pytest.approx(6.0206, abs=1e-3)
    assert psnr(a, b) == pytest.approx(10.0 * np.log10(4.0), abs=1e-12)


def test_psnr_validation():
    with pytest.raises(ContractError):
        psnr(np.zeros((2, 2, 3)), np.zeros((3, 3, 3)))
    with pytest.raises(ContractError):
        psnr(np.zeros((0, 3)), np.zeros((0, 3)))


# --- report -------------------------------------------------------------------


def test_report_round_trip(tmp_path):
    report = MetricReport(p2s_cm=0.5, cd_cm=0.25, part_cd_cm=0.1,
                          part_cd_detail={"per_part": {"face": 0.1}},
                          part_iou=0.9, part_iou_per_view=[0.9, 0.9],
                          label_acc=0.95, psnr_db_per_view=[30.0],
                          psnr_db_mean=30.0, counts={"pred_samples": 10})
    assert MetricReport.from_json(report.to_json()) == report
    path = tmp_path / "report.json"
    report.save(path)
    assert MetricReport.load(path) == report


def test_report_flags_lpips_unavailable():
    report = MetricReport()
    assert report.lpips["available"] is False
    assert "network" in report.lpips["reason"]


def test_compare_meshes_identity(painted_sphere):
    colored = painted_sphere.with_(
        vertex_colors=np.full((painted_sphere.n_vertices, 3), 0.4))
    report = compare_meshes(colored, colored, n_samples=2000, resolution=64)
    assert report.cd_cm == 0.0
    assert report.p2s_cm < 1e-9
    assert report.label_acc == 1.0
    assert report.part_iou == 1.0
    assert report.psnr_db_mean == PSNR_CAP_DB
    assert report.part_cd_cm == 0.0
    assert report.counts["iou_views"] == 4
    assert report.lpips["available"] is False


def test_compare_meshes_unlabeled_skips_label_metrics(small_sphere):
    report = compare_meshes(small_sphere, small_sphere, n_samples=1000)
    assert report.cd_cm == 0.0
    assert report.label_acc is None
    assert report.part_iou is None
    assert report.psnr_db_mean is None
