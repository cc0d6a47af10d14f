"""Part-guided texturing of textureless human meshes.

The pipeline has two halves. `segment_surface` lifts per-view 2D part
labels onto mesh vertices by visibility-weighted voting, producing a
part-labeled mesh. `optimize` then fits a hash-encoded color field over
the surface under a reconstruction loss against a front reference image
and a score-distillation loss queried from a pluggable score model.

Neural networks never run in-process: anything learned sits behind the
oracle wire protocol (`parttex.oracle`), so the pipeline itself is exact,
deterministic, and testable.
"""
from .errors import (ContractError, MeshFormatError, MeshValidationError,
                     OptimizationError, OracleError, OracleProtocolError,
                     OracleTimeoutError, PartTexError, TranscriptMissError)
from .estimators import PartLabelVoter, TextureOptimizer
from .field import ColorField, FieldConfig, load_field, normalize_points, save_field
from .mesh import Mesh, PartLabel, compute_vertex_normals, extract_part
from .meshio import load_mesh, save_mesh
from .metrics import MetricReport, chamfer, compare_meshes, p2s_mesh, psnr
from .oracle import OracleClient, OracleLabelSource, RemoteScoreModel
from .raster import RenderBuffers, rasterize, render_colors, render_labels
from .sds import (AdamState, Conditions, DeltaScore, OptimizeResult,
                  ScoreModel, SdsConfig, adam_step, cfg_combine, delta_score,
                  load_sds_config, optimize, perturb, recon_grad, recon_loss,
                  save_sds_config, sds_pixel_grad)
from .views import (Viewpoint, cardinal_viewpoints, frame_views, front_view,
                    sample_viewpoints)
from .voting import (CompositeLabelSource, DirectoryLabelSource,
                     MeshLabelSource, PartLabelField, segment_surface)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "ColorField", "CompositeLabelSource", "Conditions",
    "ContractError", "DeltaScore", "DirectoryLabelSource", "FieldConfig",
    "Mesh", "MeshFormatError", "MeshLabelSource", "MeshValidationError",
    "MetricReport", "OptimizationError", "OptimizeResult", "OracleClient",
    "OracleError", "OracleLabelSource", "OracleProtocolError",
    "OracleTimeoutError", "PartLabel", "PartLabelField", "PartLabelVoter",
    "PartTexError", "RemoteScoreModel", "RenderBuffers", "ScoreModel",
    "SdsConfig", "TextureOptimizer", "TranscriptMissError", "Viewpoint",
    "adam_step", "cardinal_viewpoints", "cfg_combine", "chamfer",
    "compare_meshes", "compute_vertex_normals", "delta_score", "extract_part",
    "frame_views", "front_view", "load_field", "load_mesh", "load_sds_config",
    "normalize_points", "optimize", "p2s_mesh", "perturb", "psnr",
    "rasterize", "recon_grad", "recon_loss", "render_colors", "render_labels",
    "sample_viewpoints", "save_field", "save_mesh", "save_sds_config",
    "sds_pixel_grad", "segment_surface",
]
