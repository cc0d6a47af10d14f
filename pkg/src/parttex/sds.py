"""Texture optimization: reconstruction + score-distillation gradients.

The color field is trained so that renders from many viewpoints look
plausible to a denoising score model while the front view stays close to
the reference image. Geometry is frozen: a render depends on the field
only through the RGB values at per-pixel surface points, so the chain
rule factors into (per-pixel upstream) x (field gradient at those points).

Score distillation uses a variance-preserving cosine schedule. For noise
level t in (0,1):

    alpha(t) = cos(pi t / 2)   scale of the clean image
    sigma(t) = sin(pi t / 2)   scale of the injected noise
    w(t)     = sigma(t)^2      per-sample gradient weighting

The per-pixel SDS gradient of one (t, eps) sample is
w(t) * (eps_hat - eps) * alpha(t), where eps_hat is the (guidance-combined)
model prediction on the perturbed render.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field as dataclass_field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import ContractError, OptimizationError
from .field import ColorField, normalize_points
from .mesh import Mesh
from .raster import rasterize, render_labels, surface_points
from .views import Viewpoint

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# exponential decay chosen so lr(4000 steps) = lr0 / 10
LR_DECAY_PER_STEP = 0.1 ** (1.0 / 4000.0)

DEFAULT_PROMPTS = ("a photo of a person", )


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 < t < 1.0:
        raise ContractError(f"noise level t must lie in (0, 1), got {t}")
    return t


class CosineSchedule:
    """Variance-preserving schedule; alpha^2 + sigma^2 = 1 exactly."""

    def alpha(self, t):
        return np.cos(np.pi * np.asarray(t) / 2.0)

    def sigma(self, t):
        return np.sin(np.pi * np.asarray(t) / 2.0)

    def weight(self, t):
        s = self.sigma(t)
        return s * s


SCHEDULE = CosineSchedule()


@dataclass(frozen=True)
class Conditions:
    """Opaque conditioning payload handed to the score model."""

    label_map: np.ndarray | None = None      # (H, W) uint8 part codes
    front_image: np.ndarray | None = None    # (H, W, 3) reference
    prompts: tuple[str, ...] = DEFAULT_PROMPTS


class ScoreModel(Protocol):
    def predict_noise(self, x_t: np.ndarray, t: float,
                      conditions: Conditions,
                      conditional: bool) -> np.ndarray: ...


class DeltaScore:
    """Analytic score model for a point-mass data distribution at y.

    The optimal denoiser then satisfies eps_hat(x_t, t) = (x_t - alpha y)
    / sigma, which makes every SDS quantity available in closed form:
    the pixel gradient reduces to w(t) alpha(t)^2 / sigma(t) * (x - y).
    Conditioning is ignored, so guidance is degenerate by construction.
    """

    def __init__(self, target: np.ndarray, schedule: CosineSchedule = SCHEDULE):
        self.target = np.asarray(target, dtype=np.float64)
        self.schedule = schedule

    def predict_noise(self, x_t, t, conditions=None, conditional=True):
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape != self.target.shape:
            raise ContractError(
                f"noisy image {x_t.shape} does not match target "
                f"{self.target.shape}")
        t = _check_t(t)
        a = self.schedule.alpha(t)
        s = self.schedule.sigma(t)
        return (x_t - a * self.target) / s


def delta_score(target) -> DeltaScore:
    return DeltaScore(target)


def perturb(image, t, eps, schedule: CosineSchedule = SCHEDULE) -> np.ndarray:
    """Forward diffusion sample x_t = alpha(t) x + sigma(t) eps."""
    image = np.asarray(image, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if image.shape != eps.shape:
        raise ContractError(
            f"noise shape {eps.shape} does not match image {image.shape}")
    t = _check_t(t)
    return schedule.alpha(t) * image + schedule.sigma(t) * eps


def cfg_combine(eps_cond, eps_uncond, scale) -> np.ndarray:
    """Classifier-free guidance: uncond + scale * (cond - uncond).

    scale = 1 returns the conditional prediction unchanged rather than
    re-deriving it arithmetically, so the identity holds bitwise.
    """
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise ContractError("guidance operands must share a shape")
    scale = float(scale)
    if scale == 1.0:
        return eps_cond
    return eps_uncond + scale * (eps_cond - eps_uncond)


def sds_pixel_grad(render, score: ScoreModel, conditions: Conditions,
                   t: float, eps, cfg_scale: float = 1.0,
                   schedule: CosineSchedule = SCHEDULE) -> np.ndarray:
    """Per-pixel SDS gradient for one (t, eps) sample.

    Returns w(t) * (eps_hat - eps) * alpha(t); the alpha factor is
    d(x_t)/d(render), so composing with the render sensitivity yields the
    full parameter gradient.
    """
    render = np.asarray(render, dtype=np.float64)
    t = _check_t(t)
    x_t = perturb(render, t, eps, schedule)
    eps_cond = score.predict_noise(x_t, t, conditions, conditional=True)
    if eps_cond.shape != render.shape:
        raise ContractError("score model changed the image shape")
    if cfg_scale == 1.0:
        eps_hat = eps_cond
    else:
        eps_uncond = score.predict_noise(x_t, t, conditions, conditional=False)
        eps_hat = cfg_combine(eps_cond, eps_uncond, cfg_scale)
    w = schedule.weight(t)
    a = schedule.alpha(t)
    return w * a * (eps_hat - np.asarray(eps, dtype=np.float64))


def recon_grad(render, target, mask) -> np.ndarray:
    """Gradient of mean masked squared error w.r.t. the render.

    2 (render - target) / |mask| on masked pixels, zero elsewhere. An
    empty mask yields all zeros with a warning.
    """
    render = np.asarray(render, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if render.shape != target.shape or mask.shape != render.shape[:2]:
        raise ContractError("render, target, mask shapes must agree")
    n = int(mask.sum())
    grad = np.zeros_like(render)
    if n == 0:
        logger.warning("reconstruction mask is empty; zero gradient")
        return grad
    grad[mask] = 2.0 * (render[mask] - target[mask]) / n
    return grad


def recon_loss(render, target, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        return 0.0
    diff = np.asarray(render)[mask] - np.asarray(target)[mask]
    return float((diff * diff).sum() / n)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(params, grads, state: AdamState, lr: float) -> np.ndarray:
    """One bias-corrected Adam update; mutates state, returns new params."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ContractError("Adam operand shapes must agree")
    if not np.isfinite(grads).all():
        raise ContractError("non-finite gradient in Adam update")
    state.step += 1
    state.m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grads
    state.v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grads * grads
    m_hat = state.m / (1.0 - ADAM_BETA1 ** state.step)
    v_hat = state.v / (1.0 - ADAM_BETA2 ** state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass(frozen=True)
class SdsConfig:
    """Optimization settings; defaults follow the reference recipe."""

    steps: int = 4000
    batch: int = 4
    cfg_scale: float = 100.0
    t_range: tuple[float, float] = (0.02, 0.98)
    lr: float = 1e-2
    lr_decay: float = LR_DECAY_PER_STEP
    seed: int = 0
    sds_weight: float = 1.0
    recon_weight: float = 1.0
    prompts: tuple[str, ...] = DEFAULT_PROMPTS

    def __post_init__(self):
        t_min, t_max = self.t_range
        if not 0.0 < t_min < t_max < 1.0:
            raise ContractError(f"need 0 < t_min < t_max < 1, got {self.t_range}")
        if self.cfg_scale < 0:
            raise ContractError("cfg_scale must be >= 0")
        if self.steps < 0:
            raise ContractError("steps must be >= 0")
        if self.batch < 1:
            raise ContractError("batch must be >= 1")

    def to_json(self) -> dict:
        return {
            "steps": self.steps,
            "batch": self.batch,
            "cfg_scale": self.cfg_scale,
            "t_range": list(self.t_range),
            "lr": self.lr,
            "lr_decay": self.lr_decay,
            "seed": self.seed,
            "sds_weight": self.sds_weight,
            "recon_weight": self.recon_weight,
            "prompts": list(self.prompts),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SdsConfig":
        known = {
            "steps", "batch", "cfg_scale", "t_range", "lr", "lr_decay",
            "seed", "sds_weight", "recon_weight", "prompts",
        }
        unknown = set(obj) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(obj)
        if "t_range" in kwargs:
            kwargs["t_range"] = tuple(kwargs["t_range"])
        if "prompts" in kwargs:
            kwargs["prompts"] = tuple(kwargs["prompts"])
        return cls(**kwargs)


def load_sds_config(path) -> SdsConfig:
    with open(Path(path), "r", encoding="utf-8") as fh:
        return SdsConfig.from_json(json.load(fh))


def save_sds_config(path, config: SdsConfig) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(config.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class _ViewBundle:
    """Frozen per-view geometry: everything the step loop reuses."""

    view: Viewpoint
    mask: np.ndarray
    points: np.ndarray        # (P, 3) normalized surface points, mask order
    conditions: Conditions


@dataclass
class OptimizeResult:
    mesh: Mesh
    field: ColorField
    history: list[dict] = dataclass_field(default_factory=list)


def _render_from_field(field: ColorField, bundle: _ViewBundle,
                       stats: dict | None = None) -> np.ndarray:
    image = np.ones((*bundle.mask.shape, 3))
    image[bundle.mask] = field.eval(bundle.points, stats=stats)
    return image


def optimize(mesh: Mesh, color_field: ColorField, score: ScoreModel | None,
             config: SdsConfig, views: list[Viewpoint],
             front_image=None, front_mask=None,
             log_path=None) -> OptimizeResult:
    """Run the texture optimization loop.

    views[0] is the front view: it is part of every batch and is the only
    view the reconstruction term sees. Per step, per selected view, one
    (t, eps) sample drives the SDS gradient; draws happen in a fixed order
    (view choice, then t and eps per view), so a seed fixes the trajectory.
    """
    if mesh.vertex_labels is None:
        raise ContractError("optimize requires a part-labeled mesh")
    if not views:
        raise ContractError("optimize requires at least one view")
    if config.sds_weight != 0.0 and score is None:
        raise ContractError("a score model is required unless sds_weight = 0")
    if front_image is not None:
        front_image = np.asarray(front_image, dtype=np.float64)
        res = views[0].resolution
        if front_image.shape != (res, res, 3):
            raise ContractError(
                f"front image must be ({res}, {res}, 3), got {front_image.shape}")

    bbox = mesh.bbox()
    bundles = []
    for view in views:
        buffers = rasterize(mesh, view)
        points = normalize_points(surface_points(mesh, buffers), bbox)
        labels = render_labels(mesh, view, buffers=buffers)
        conditions = Conditions(label_map=labels, front_image=front_image,
                                prompts=config.prompts)
        bundles.append(_ViewBundle(view=view, mask=buffers.mask,
                                   points=points, conditions=conditions))
    if front_mask is None and front_image is not None:
        front_mask = bundles[0].mask

    rng = np.random.default_rng(config.seed)
    params = color_field.flatten()
    state = AdamState.zeros(params.size)
    history: list[dict] = []
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for step in range(config.steps):
            lr_t = config.lr * config.lr_decay ** step
            chosen = [0]
            others = len(views) - 1
            if others > 0 and config.batch > 1:
                extra = rng.choice(others, size=min(config.batch - 1, others),
                                   replace=False) + 1
                chosen += extra.tolist()

            grad = np.zeros_like(params)
            step_recon = 0.0
            sds_sq = 0.0
            for view_index in chosen:
                bundle = bundles[view_index]
                render = _render_from_field(color_field, bundle)
                upstream = np.zeros_like(render)
                if config.sds_weight != 0.0:
                    t = rng.uniform(*config.t_range)
                    eps = rng.standard_normal(render.shape)
                    try:
                        pix = sds_pixel_grad(render, score, bundle.conditions,
                                             t, eps, cfg_scale=config.cfg_scale)
                    except Exception as exc:
                        raise OptimizationError(
                            f"score model failed: {exc}", step=step,
                            view=view_index) from exc
                    upstream += config.sds_weight * pix
                    sds_sq += float((pix * pix).sum())
                if view_index == 0 and front_image is not None:
                    upstream += config.recon_weight * recon_grad(
                        render, front_image, front_mask)
                    step_recon = recon_loss(render, front_image, front_mask)
                if not np.isfinite(upstream).all():
                    raise OptimizationError("non-finite pixel gradient",
                                            step=step, view=view_index)
                _, g = color_field.eval_with_grad(bundle.points,
                                                  upstream[bundle.mask])
                grad += g

            if not np.isfinite(grad).all():
                raise OptimizationError("non-finite parameter gradient",
                                        step=step, view=chosen[-1])
            params = adam_step(params, grad, state, lr_t)
            color_field.unflatten(params)

            record = {
                "step": step,
                "lr": lr_t,
                "recon_loss": step_recon if front_image is not None else None,
                "sds_grad_norm": float(np.sqrt(sds_sq)),
            }
            history.append(record)
            if log_file:
                log_file.write(json.dumps(record, sort_keys=True) + "\n")
    finally:
        if log_file:
            log_file.close()

    vertex_colors = color_field.eval(normalize_points(mesh.vertices, bbox))
    textured = mesh.with_(vertex_colors=vertex_colors)
    return OptimizeResult(mesh=textured, field=color_field, history=history)
