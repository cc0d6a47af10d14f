"""Service configuration and startup validation."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

MODES = ("stub", "real")


class ConfigError(ValueError):
    pass


@dataclass
class ServiceConfig:
    """How the sidecar runs.

    Stub mode answers analytically and needs no model assets. Real mode
    loads a backend plugin (a "module:attribute" factory) plus whatever
    model identifiers or asset paths that factory wants; every asset
    path is checked at startup so a misconfigured service dies before
    it accepts a single request.
    """

    mode: str = "stub"
    host: str = "127.0.0.1"
    port: int | None = None
    stdio: bool = False
    target_color: tuple[float, float, float] = (1.0, 0.0, 0.0)
    target_image: str | None = None
    plugin: str | None = None
    segmenter: str | None = None
    denoiser: str | None = None
    device: str = "cpu"
    asset_paths: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.stdio and self.port is not None:
            raise ConfigError("choose either --stdio or --port, not both")
        if self.port is not None and not 0 <= self.port <= 65535:
            raise ConfigError(f"port out of range: {self.port}")
        if len(self.target_color) != 3:
            raise ConfigError("target color needs exactly three channels")

    def validate_assets(self) -> None:
        """Real mode: refuse to start unless every declared asset exists."""
        if self.mode == "stub":
            return
        if not self.plugin:
            raise ConfigError(
                "real mode needs a backend plugin (module:attribute)")
        if ":" not in self.plugin:
            raise ConfigError(
                f"plugin must look like module:attribute, got {self.plugin!r}")
        for path in self.asset_paths:
            if not Path(path).exists():
                raise ConfigError(f"model asset not found: {path}")
