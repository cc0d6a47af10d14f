"""Answer backends: the analytic stub and the pluggable real loader.

A backend answers two questions about images:

    segment(image, front, view, prompts)      -> (H, W) uint8 part codes
    predict_noise(x_t, t, conditions, conditional) -> array like x_t

The stub needs no weights: segmentation calls every non-white pixel
"others" (code 5), and noise prediction is the exact denoiser for a
point-mass image distribution, so clients can verify it in closed form.
"""
from __future__ import annotations

import importlib
import math

import numpy as np
from PIL import Image

from .config import ConfigError, ServiceConfig

OTHERS_CODE = 5


class StubBackend:
    """Deterministic analytic backend; conditioning is ignored."""

    def __init__(self, target_color=(1.0, 0.0, 0.0), target_image=None):
        self.target_color = np.asarray(target_color, dtype=np.float64)
        self.target_image = target_image

    def _target_for(self, shape):
        if self.target_image is not None:
            if self.target_image.shape != shape:
                raise ValueError(
                    f"stub target {self.target_image.shape} vs image {shape}")
            return self.target_image
        return np.broadcast_to(self.target_color, shape)

    def segment(self, image_u8: np.ndarray, front: bool, view,
                prompts) -> np.ndarray:
        foreground = (image_u8 != 255).any(axis=2)
        return np.where(foreground, OTHERS_CODE, 0).astype(np.uint8)

    def predict_noise(self, x_t: np.ndarray, t: float, conditions: dict,
                      conditional: bool) -> np.ndarray:
        alpha = math.cos(math.pi * t / 2.0)
        sigma = math.sin(math.pi * t / 2.0)
        return (x_t - alpha * self._target_for(x_t.shape)) / sigma


def _load_target_image(path: str) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def make_backend(config: ServiceConfig):
    """Build the backend the config asks for; real mode loads its plugin."""
    config.validate_assets()
    if config.mode == "stub":
        target_image = (_load_target_image(config.target_image)
                        if config.target_image else None)
        return StubBackend(target_color=config.target_color,
                           target_image=target_image)

    module_name, _, attr = config.plugin.partition(":")
    try:
        module = importlib.import_module(module_name)
        factory = getattr(module, attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load backend plugin: {exc}") from exc
    backend = factory(config)
    for required in ("segment", "predict_noise"):
        if not callable(getattr(backend, required, None)):
            raise ConfigError(
                f"plugin backend lacks a callable {required!r}")
    return backend
