"""Estimator-style facade over the two pipeline stages.

PartLabelVoter wraps multi-view label voting as a fit/predict estimator;
TextureOptimizer wraps color-field optimization as a fit/transform step
whose predict() is a regressor from 3D points to RGB. Both follow the
scikit-learn parameter conventions (constructor args = hyperparameters,
fitted state in trailing-underscore attributes, get_params/set_params).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ContractError
from .field import ColorField, FieldConfig, normalize_points
from .mesh import Mesh
from .sds import SdsConfig, optimize
from .validation import as_points
from .views import frame_views, sample_viewpoints
from .voting import segment_surface


def _require_mesh(mesh) -> Mesh:
    if not isinstance(mesh, Mesh):
        raise ContractError(f"expected a Mesh, got {type(mesh).__name__}")
    return mesh


class PartLabelVoter(BaseEstimator):
    """Assigns a part label to every vertex by multi-view voting.

    Parameters mirror the pipeline defaults: 30 views on a Fibonacci
    sphere (view 0 facing front) rendered at 512.
    """

    def __init__(self, n_views: int = 30, resolution: int = 512,
                 seed: int = 0, threads: int = 1):
        self.n_views = n_views
        self.resolution = resolution
        self.seed = seed
        self.threads = threads

    def fit(self, mesh: Mesh, label_source) -> "PartLabelVoter":
        mesh = _require_mesh(mesh)
        views = frame_views(
            sample_viewpoints(self.n_views, seed=self.seed), mesh,
            resolution=self.resolution)
        labeled, field = segment_surface(mesh, views, label_source,
                                         threads=self.threads)
        self.mesh_ = labeled
        self.labels_ = field.labels
        self.confidence_ = field.confidence
        self.views_ = views
        return self

    def predict(self) -> np.ndarray:
        self._check_fitted()
        return self.labels_.copy()

    def transform(self, mesh: Mesh | None = None) -> Mesh:
        """The input mesh with the voted labels attached."""
        self._check_fitted()
        if mesh is None:
            return self.mesh_
        mesh = _require_mesh(mesh)
        if mesh.n_vertices != len(self.labels_):
            raise ContractError("mesh does not match the fitted vertex count")
        return mesh.with_(vertex_labels=self.labels_)

    def fit_transform(self, mesh: Mesh, label_source) -> Mesh:
        return self.fit(mesh, label_source).transform()

    def _check_fitted(self):
        if not hasattr(self, "labels_"):
            raise ContractError("PartLabelVoter is not fitted")


class TextureOptimizer(BaseEstimator):
    """Optimizes a surface color field under recon + score-distillation.

    After fit, predict(points) evaluates the learned field at world-space
    points and transform() returns the textured mesh.
    """

    def __init__(self, steps: int = 4000, batch: int = 4,
                 cfg_scale: float = 100.0,
                 t_range: tuple[float, float] = (0.02, 0.98),
                 lr: float = 1e-2, lr_decay: float | None = None,
                 seed: int = 0, sds_weight: float = 1.0,
                 recon_weight: float = 1.0, n_views: int = 30,
                 resolution: int = 512,
                 field_config: FieldConfig | None = None):
        self.steps = steps
        self.batch = batch
        self.cfg_scale = cfg_scale
        self.t_range = t_range
        self.lr = lr
        self.lr_decay = lr_decay
        self.seed = seed
        self.sds_weight = sds_weight
        self.recon_weight = recon_weight
        self.n_views = n_views
        self.resolution = resolution
        self.field_config = field_config

    def _sds_config(self) -> SdsConfig:
        kwargs = dict(steps=self.steps, batch=self.batch,
                      cfg_scale=self.cfg_scale, t_range=tuple(self.t_range),
                      lr=self.lr, seed=self.seed, sds_weight=self.sds_weight,
                      recon_weight=self.recon_weight)
        if self.lr_decay is not None:
            kwargs["lr_decay"] = self.lr_decay
        return SdsConfig(**kwargs)

    def fit(self, mesh: Mesh, score=None, front_image=None, front_mask=None,
            views=None, log_path=None) -> "TextureOptimizer":
        mesh = _require_mesh(mesh)
        if views is None:
            views = frame_views(
                sample_viewpoints(self.n_views, seed=self.seed), mesh,
                resolution=self.resolution)
        config = self._sds_config()
        field = ColorField(self.field_config or FieldConfig(), seed=self.seed)
        result = optimize(mesh, field, score, config, views,
                          front_image=front_image, front_mask=front_mask,
                          log_path=log_path)
        self.field_ = result.field
        self.mesh_ = result.mesh
        self.history_ = result.history
        self.bbox_ = mesh.bbox()
        self.views_ = views
        return self

    def predict(self, points) -> np.ndarray:
        """RGB colors of the learned field at world-space points."""
        self._check_fitted()
        pts = as_points(points, "points")
        return self.field_.eval(normalize_points(pts, self.bbox_))

    def transform(self, mesh: Mesh | None = None) -> Mesh:
        """The mesh with per-vertex colors sampled from the field."""
        self._check_fitted()
        if mesh is None:
            return self.mesh_
        mesh = _require_mesh(mesh)
        return mesh.with_(vertex_colors=self.predict(mesh.vertices))

    def _check_fitted(self):
        if not hasattr(self, "field_"):
            raise ContractError("TextureOptimizer is not fitted")
