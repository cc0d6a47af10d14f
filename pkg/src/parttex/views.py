"""Deterministic viewpoint sampling on the sphere.

Cameras are orthographic and look at the center of a square frame. The
front view is azimuth 0, elevation 0, on the +z axis in a y-up world.
Directions point from the frame center toward the camera.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError

GOLDEN_RATIO = (1.0 + np.sqrt(5.0)) / 2.0
DEFAULT_RESOLUTION = 512
FRAME_FIT_FACTOR = 0.6  # half-extent = factor * largest bbox dimension

_FRONT = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Viewpoint:
    """Orthographic camera: pose plus square frame.

    Attributes:
        azimuth: radians in [0, 2pi), 0 is the front view.
        elevation: radians in [-pi/2, pi/2].
        rotation: 3x3 camera-to-world; columns are (right, up, backward),
            so the camera forward axis maps to -direction.
        center: world point the camera looks at.
        half_extent: half the side of the square orthographic frame.
        resolution: square image side in pixels.
    """

    azimuth: float
    elevation: float
    rotation: np.ndarray
    center: np.ndarray
    half_extent: float
    resolution: int

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        r = self.rotation
        if r.shape != (3, 3) or np.abs(r @ r.T - np.eye(3)).max() > 1e-9:
            raise ContractError("rotation must be 3x3 orthonormal within 1e-9")
        if not self.half_extent > 0:
            raise ContractError("half_extent must be positive")

    @property
    def direction(self) -> np.ndarray:
        """Unit vector from frame center toward the camera."""
        return self.rotation[:, 2].copy()

    def framed(self, center, half_extent) -> "Viewpoint":
        return replace(self, center=np.asarray(center, dtype=np.float64),
                       half_extent=float(half_extent))

    def with_resolution(self, resolution: int) -> "Viewpoint":
        return replace(self, resolution=int(resolution))

    def to_json(self) -> dict:
        return {
            "azimuth": self.azimuth,
            "elevation": self.elevation,
            "center": self.center.tolist(),
            "half_extent": self.half_extent,
            "resolution": self.resolution,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Viewpoint":
        return make_viewpoint(
            obj["azimuth"], obj["elevation"],
            center=obj.get("center", (0.0, 0.0, 0.0)),
            half_extent=obj.get("half_extent", 1.0),
            resolution=obj.get("resolution", DEFAULT_RESOLUTION),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def direction_from_angles(azimuth: float, elevation: float) -> np.ndarray:
    ce = np.cos(elevation)
    return np.array([np.sin(azimuth) * ce, np.sin(elevation), np.cos(azimuth) * ce])


def angles_from_direction(d) -> tuple[float, float]:
    d = np.asarray(d, dtype=np.float64)
    d = d / np.linalg.norm(d)
    elevation = float(np.arcsin(np.clip(d[1], -1.0, 1.0)))
    azimuth = float(np.arctan2(d[0], d[2])) % (2.0 * np.pi)
    return azimuth, elevation


def look_at_rotation(direction) -> np.ndarray:
    """Camera-to-world rotation for a camera on ``direction`` looking at 0.

    Columns are (right, up, backward) with backward = direction, so the
    camera's forward axis (0, 0, -1) maps exactly to -direction.
    """
    backward = np.asarray(direction, dtype=np.float64)
    backward = backward / np.linalg.norm(backward)
    world_up = np.array([0.0, 1.0, 0.0])
    if abs(backward[1]) > 1.0 - 1e-12:  # looking straight up/down
        world_up = np.array([0.0, 0.0, -np.sign(backward[1])])
    right = np.cross(world_up, backward)
    right = right / np.linalg.norm(right)
    up = np.cross(backward, right)
    return np.column_stack([right, up, backward])


def make_viewpoint(azimuth: float, elevation: float, center=(0.0, 0.0, 0.0),
                   half_extent: float = 1.0,
                   resolution: int = DEFAULT_RESOLUTION) -> Viewpoint:
    azimuth = float(azimuth) % (2.0 * np.pi)
    elevation = float(elevation)
    if not -np.pi / 2 <= elevation <= np.pi / 2:
        raise ContractError(f"elevation must lie in [-pi/2, pi/2], got {elevation}")
    rot = look_at_rotation(direction_from_angles(azimuth, elevation))
    return Viewpoint(azimuth=azimuth, elevation=elevation, rotation=rot,
                     center=np.asarray(center, dtype=np.float64),
                     half_extent=float(half_extent), resolution=int(resolution))


def front_view(center=(0.0, 0.0, 0.0), half_extent: float = 1.0,
               resolution: int = DEFAULT_RESOLUTION) -> Viewpoint:
    return make_viewpoint(0.0, 0.0, center, half_extent, resolution)


def _fibonacci_directions(n: int, phase: float = 0.0) -> np.ndarray:
    """Midpoint Fibonacci lattice on the unit sphere, (n, 3), y as the axis."""
    i = np.arange(n)
    y = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    theta = 2.0 * np.pi * i / GOLDEN_RATIO + phase
    return np.column_stack([r * np.sin(theta), y, r * np.cos(theta)])


def _rotation_between(a, b) -> np.ndarray:
    """Smallest rotation taking unit vector a to unit vector b (Rodrigues)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    s = np.linalg.norm(v)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # opposite vectors: rotate pi about any perpendicular axis
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-8:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        K = np.array([[0, -axis[2], axis[1]],
                      [axis[2], 0, -axis[0]],
                      [-axis[1], axis[0], 0]])
        return np.eye(3) + 2.0 * K @ K
    K = np.array([[0, -v[2], v[1]],
                  [v[2], 0, -v[0]],
                  [-v[1], v[0], 0]])
    return np.eye(3) + K + K @ K * ((1.0 - c) / (s * s))


def sample_viewpoints(n: int, seed: int = 0, center=(0.0, 0.0, 0.0),
                      half_extent: float = 1.0,
                      resolution: int = DEFAULT_RESOLUTION) -> list[Viewpoint]:
    """n near-uniform viewpoints; index 0 is the exact front view.

    A Fibonacci-sphere lattice is rotated so its first direction lands on
    the front axis. Deterministic for fixed (n, seed); a nonzero seed only
    shifts the lattice phase.
    """
    if n < 1:
        raise ContractError(f"need at least one viewpoint, got n={n}")
    phase = 0.0
    if seed:
        # deterministic phase perturbation decoupled from the golden angle
        phase = 2.0 * np.pi * ((seed * GOLDEN_RATIO) % 1.0)
    dirs = _fibonacci_directions(n, phase)
    rot = _rotation_between(dirs[0], _FRONT)
    dirs = dirs @ rot.T
    out = [front_view(center, half_extent, resolution)]
    for d in dirs[1:]:
        az, el = angles_from_direction(d)
        out.append(make_viewpoint(az, el, center, half_extent, resolution))
    return out


def cardinal_viewpoints(center=(0.0, 0.0, 0.0), half_extent: float = 1.0,
                        resolution: int = DEFAULT_RESOLUTION) -> list[Viewpoint]:
    """The four turntable evaluation views at azimuth 0, 90, 180, 270 deg."""
    return [make_viewpoint(k * np.pi / 2.0, 0.0, center, half_extent, resolution)
            for k in range(4)]


def fit_frame(mesh) -> tuple[np.ndarray, float]:
    """Auto-fit frame: bbox center and 0.6 * largest bbox dimension."""
    lo, hi = mesh.bbox()
    extent = float(np.max(hi - lo))
    if extent <= 0:
        extent = 1.0
    return (lo + hi) / 2.0, FRAME_FIT_FACTOR * extent


def frame_views(views: list[Viewpoint], mesh, resolution: int | None = None) -> list[Viewpoint]:
    """Rebind a view list to a mesh's auto-fit frame."""
    center, half_extent = fit_frame(mesh)
    out = [v.framed(center, half_extent) for v in views]
    if resolution is not None:
        out = [v.with_resolution(resolution) for v in out]
    return out
