"""Color field tests: forward semantics, exact gradients, serialization."""
import numpy as np
import pytest

from parttex import ColorField, FieldConfig, load_field, normalize_points, save_field
from parttex.errors import ContractError, MeshFormatError
from parttex.field import NORMALIZE_MARGIN


def loss_at(field, flat, points, upstream):
    # scalar L = sum(upstream * rgb) evaluated at a given parameter vector
    field.unflatten(flat)
    return float(np.sum(upstream * field.eval(points)))


def safe_random_field(config, seed=11, scale=0.4):
    """Field with random params kept away from ReLU kinks and saturation.

    Central differences step across z1 = 0 if any pre-activation sits
    within h of the kink, so the fixture asserts a margin up front.
    """
    field = ColorField(config, seed=0)
    rng = np.random.default_rng(seed)
    field.unflatten(rng.normal(0.0, scale, config.n_params))
    return field


def kink_margins(field, points):
    enc, _ = field._encode(field._prepare(points))
    z1 = enc @ field.w1 + field.b1
    z2 = np.maximum(z1, 0.0) @ field.w2 + field.b2
    return np.abs(z1).min(), np.abs(z2).max()


# --- forward ---------------------------------------------------------------


def test_fresh_field_paints_mid_gray(tiny_field_config):
    field = ColorField(tiny_field_config, seed=3)
    pts = np.random.default_rng(0).uniform(0, 1, (40, 3))
    out = field.eval(pts)
    # zero output layer -> logistic(0) exactly
    np.testing.assert_array_equal(out, np.full((40, 3), 0.5))


def test_eval_clamps_and_counts(tiny_field_config):
    field = ColorField(tiny_field_config, seed=1)
    pts = np.array([
        [0.5, 0.5, 0.5],
        [-0.2, 0.5, 0.5],   # clamps to the x=0 face
        [0.5, 1.7, 2.0],    # two coordinates out, still one point
    ])
    stats = {}
    out = field.eval(pts, stats=stats)
    assert stats["clamped"] == 2
    edge = field.eval(np.array([[0.0, 0.5, 0.5], [0.5, 1.0, 1.0]]))
    np.testing.assert_allclose(out[1:], edge, rtol=0, atol=0)


def test_eval_inside_points_leave_stats_alone(tiny_field_config):
    field = ColorField(tiny_field_config, seed=1)
    stats = {}
    field.eval(np.random.default_rng(2).uniform(0, 1, (10, 3)), stats=stats)
    assert "clamped" not in stats


def test_constant_tables_make_constant_field(tiny_field_config):
    # every table entry equal -> trilinear blend is position independent
    field = safe_random_field(tiny_field_config)
    for i, t in enumerate(field.tables):
        t[:] = 0.3 + 0.1 * i
    pts = np.random.default_rng(5).uniform(0, 1, (50, 3))
    out = field.eval(pts)
    np.testing.assert_allclose(out - out[0], 0.0, rtol=0, atol=1e-12)


def test_outputs_bounded(tiny_field_config):
    # wild parameters saturate the logistic but never escape [0, 1]
    field = ColorField(tiny_field_config, seed=0)
    rng = np.random.default_rng(9)
    with np.errstate(over="ignore"):
        field.unflatten(rng.normal(0.0, 30.0, tiny_field_config.n_params))
        out = field.eval(rng.uniform(0, 1, (100, 3)))
    assert np.all(out >= 0.0) and np.all(out <= 1.0)
    # moderate parameters stay strictly interior
    mild = safe_random_field(tiny_field_config, seed=12)
    out = mild.eval(rng.uniform(0, 1, (100, 3)))
    assert np.all(out > 0.0) and np.all(out < 1.0)


def test_eval_rejects_bad_points(tiny_field_config):
    field = ColorField(tiny_field_config)
    with pytest.raises(ContractError):
        field.eval(np.zeros((3, 2)))
    with pytest.raises(ContractError):
        field.eval(np.array([[0.5, np.nan, 0.5]]))


def test_eval_empty(tiny_field_config):
    field = ColorField(tiny_field_config)
    assert field.eval(np.zeros((0, 3))).shape == (0, 3)
    rgb, grad = field.eval_with_grad(np.zeros((0, 3)), np.zeros((0, 3)))
    assert rgb.shape == (0, 3)
    np.testing.assert_array_equal(grad, np.zeros(tiny_field_config.n_params))


def test_same_seed_same_field(tiny_field_config):
    a = ColorField(tiny_field_config, seed=7)
    b = ColorField(tiny_field_config, seed=7)
    np.testing.assert_array_equal(a.flatten(), b.flatten())


# --- gradients --------------------------------------------------------------


def test_grad_forward_matches_eval(tiny_field_config):
    field = safe_random_field(tiny_field_config)
    pts = np.random.default_rng(3).uniform(0.1, 0.9, (6, 3))
    rgb, _ = field.eval_with_grad(pts, np.ones((6, 3)))
    np.testing.assert_array_equal(rgb, field.eval(pts))


def test_grad_matches_finite_differences(tiny_field_config):
    field = safe_random_field(tiny_field_config)
    rng = np.random.default_rng(4)
    pts = rng.uniform(0.1, 0.9, (5, 3))
    upstream = rng.normal(0.0, 1.0, (5, 3))

    z1_margin, z2_peak = kink_margins(field, pts)
    h = 1e-4
    assert z1_margin > 10 * h, "fixture too close to a ReLU kink for FD"
    assert z2_peak < 4.0, "fixture saturates the squash"

    base = field.flatten()
    _, grad = field.eval_with_grad(pts, upstream)
    assert grad.shape == (tiny_field_config.n_params,)

    fd = np.empty_like(grad)
    for i in range(len(base)):
        step = np.zeros_like(base)
        step[i] = h
        fd[i] = (loss_at(field, base + step, pts, upstream)
                 - loss_at(field, base - step, pts, upstream)) / (2 * h)
    field.unflatten(base)

    scale = np.maximum(np.abs(fd), np.maximum(np.abs(grad), 1e-8))
    rel = np.abs(fd - grad) / scale
    assert rel.max() < 1e-4, f"worst rel error {rel.max():.3e} at {rel.argmax()}"


def test_grad_linear_in_upstream(tiny_field_config):
    field = safe_random_field(tiny_field_config)
    rng = np.random.default_rng(6)
    pts = rng.uniform(0.1, 0.9, (7, 3))
    u1 = rng.normal(size=(7, 3))
    u2 = rng.normal(size=(7, 3))
    _, g1 = field.eval_with_grad(pts, u1)
    _, g2 = field.eval_with_grad(pts, u2)
    _, g12 = field.eval_with_grad(pts, u1 + u2)
    np.testing.assert_allclose(g12, g1 + g2, rtol=0, atol=1e-12)


def test_zero_upstream_zero_grad(tiny_field_config):
    field = safe_random_field(tiny_field_config)
    pts = np.random.default_rng(8).uniform(0, 1, (4, 3))
    _, grad = field.eval_with_grad(pts, np.zeros((4, 3)))
    np.testing.assert_array_equal(grad, np.zeros_like(grad))


def test_grad_rejects_mismatched_upstream(tiny_field_config):
    field = ColorField(tiny_field_config)
    pts = np.zeros((3, 3)) + 0.5
    with pytest.raises(ContractError):
        field.eval_with_grad(pts, np.zeros((2, 3)))
    with pytest.raises(ContractError):
        field.eval_with_grad(pts, np.full((3, 3), np.inf))


# --- parameter layout and config --------------------------------------------


def test_flatten_unflatten_round_trip(tiny_field_config):
    field = safe_random_field(tiny_field_config, seed=21)
    flat = field.flatten()
    other = ColorField(tiny_field_config, seed=99)
    other.unflatten(flat)
    np.testing.assert_array_equal(other.flatten(), flat)
    # mutating the source vector must not alias into the field
    flat[0] += 1.0
    assert other.flatten()[0] != flat[0]


def test_unflatten_rejects_wrong_size(tiny_field_config):
    field = ColorField(tiny_field_config)
    with pytest.raises(ContractError):
        field.unflatten(np.zeros(tiny_field_config.n_params + 1))


def test_n_params_matches_flatten(tiny_field_config):
    field = ColorField(tiny_field_config)
    assert field.flatten().size == tiny_field_config.n_params
    # independent arithmetic for the tiny config
    assert tiny_field_config.n_params == (
        2 * 8 * 2        # two hash tables of 8 entries x 2 features
        + 4 * 8 + 8      # hidden layer on the 4-dim encoding
        + 8 * 3 + 3)     # output layer


def test_default_config_shape():
    c = FieldConfig()
    assert (c.levels, c.base_resolution, c.max_resolution) == (12, 16, 2048)
    assert (c.table_size, c.features, c.hidden) == (1 << 16, 2, 32)
    res = c.resolutions()
    assert res[0] == 16 and res[-1] == 2048
    assert np.all(np.diff(res) > 0)


def test_config_rejects_bad_values():
    with pytest.raises(ContractError):
        FieldConfig(levels=0)
    with pytest.raises(ContractError):
        FieldConfig(base_resolution=32, max_resolution=16)
    with pytest.raises(ContractError):
        FieldConfig(table_size=0)
    with pytest.raises(ContractError):
        # growth too shallow to keep integer resolutions distinct
        FieldConfig(levels=8, base_resolution=16, max_resolution=17)


# --- normalization -----------------------------------------------------------


def test_normalize_points_margins():
    bbox = (np.array([-1.0, 0.0, 2.0]), np.array([1.0, 4.0, 3.0]))
    lo = normalize_points(bbox[0][None], bbox)
    hi = normalize_points(bbox[1][None], bbox)
    np.testing.assert_allclose(lo[0], NORMALIZE_MARGIN)
    np.testing.assert_allclose(hi[0], 1.0 - NORMALIZE_MARGIN)
    mid = normalize_points((bbox[0] * 0.5 + bbox[1] * 0.5)[None], bbox)
    np.testing.assert_allclose(mid[0], 0.5)


def test_normalize_points_degenerate_axis():
    bbox = (np.array([0.0, 2.0, 0.0]), np.array([1.0, 2.0, 1.0]))
    out = normalize_points(np.array([[0.5, 2.0, 0.25]]), bbox)
    assert out[0, 1] == 0.5


# --- serialization -----------------------------------------------------------


def test_checkpoint_round_trip(tmp_path, tiny_field_config):
    field = safe_random_field(tiny_field_config, seed=30)
    path = tmp_path / "field.cfld"
    save_field(path, field)
    loaded = load_field(path)
    assert loaded.config == tiny_field_config
    # storage is float32, so the round trip holds at f32 resolution exactly
    np.testing.assert_array_equal(
        loaded.flatten(), field.flatten().astype("<f4").astype(np.float64))


def test_checkpoint_bytes_deterministic(tmp_path, tiny_field_config):
    field = safe_random_field(tiny_field_config, seed=31)
    a, b = tmp_path / "a.cfld", tmp_path / "b.cfld"
    save_field(a, field)
    save_field(b, load_field(a))
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.cfld"
    path.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(MeshFormatError):
        load_field(path)


def test_checkpoint_truncated(tmp_path, tiny_field_config):
    path = tmp_path / "t.cfld"
    save_field(path, ColorField(tiny_field_config))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(MeshFormatError, match="bytes"):
        load_field(path)


def test_checkpoint_count_mismatch(tmp_path, tiny_field_config):
    path = tmp_path / "c.cfld"
    save_field(path, ColorField(tiny_field_config))
    blob = bytearray(path.read_bytes())
    blob[32:40] = (tiny_field_config.n_params + 1).to_bytes(8, "little")
    path.write_bytes(bytes(blob))
    with pytest.raises(MeshFormatError, match="parameters"):
        load_field(path)
