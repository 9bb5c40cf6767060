"""Pinhole raycasting renderer: RGB, range depth and per-bin free-space labels.

Camera frame: x right, y down, z forward (optical axis). World frame is z-up.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import ContractError, OutOfBoundsError
from .scene import Scene, raycast_many

DEFAULT_MAX_RANGE = 60.0


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 64
    height: int = 64
    horizontal_fov: float = math.pi / 2

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ContractError("image must be at least 8x8")
        if not 0.0 < self.horizontal_fov < math.pi:
            raise ContractError("horizontal_fov must lie in (0, pi)")

    @property
    def tan_half_h(self) -> float:
        return math.tan(self.horizontal_fov / 2.0)

    @property
    def tan_half_v(self) -> float:
        # square pixels
        return self.tan_half_h * self.height / self.width


@dataclass(frozen=True)
class CameraPose:
    position: tuple
    yaw: float
    pitch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))


def camera_basis(yaw: float, pitch: float = 0.0) -> np.ndarray:
    """Rows are the world-frame right, down and forward axes of the camera."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    fwd = np.array([cy * cp, sy * cp, sp])
    right = np.array([sy, -cy, 0.0])
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd])


def image_plane_directions(us, vs) -> np.ndarray:
    """Unit camera-frame directions through image-plane points (u, v, 1)."""
    uu, vv = np.meshgrid(np.asarray(us, float), np.asarray(vs, float))
    d = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def pixel_directions(intr: CameraIntrinsics) -> np.ndarray:
    """(height, width, 3) camera-frame unit rays through pixel centres."""
    us = ((np.arange(intr.width) + 0.5) / intr.width * 2.0 - 1.0) * intr.tan_half_h
    vs = ((np.arange(intr.height) + 0.5) / intr.height * 2.0 - 1.0) * intr.tan_half_v
    return image_plane_directions(us, vs)


def grid_directions(M: int, intr: CameraIntrinsics) -> np.ndarray:
    """(M, M, 3) camera-frame unit rays through the centres of an MxM bin grid."""
    if M < 3 or M % 2 == 0:
        raise ContractError("grid size M must be odd and >= 3")
    c = (np.arange(M) + 0.5) / M * 2.0 - 1.0
    return image_plane_directions(c * intr.tan_half_h, c * intr.tan_half_v)


def to_world(dirs_cam: np.ndarray, yaw: float, pitch: float = 0.0) -> np.ndarray:
    return dirs_cam @ camera_basis(yaw, pitch)


def _check_pose(scene: Scene, pose: CameraPose) -> np.ndarray:
    p = np.asarray(pose.position, dtype=np.float64)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise ContractError("pose position must be a finite 3-vector")
    if not (math.isfinite(pose.yaw) and math.isfinite(pose.pitch)):
        raise ContractError("pose angles must be finite")
    if not scene.contains(p):
        raise OutOfBoundsError(f"camera position {tuple(p)} outside scene")
    return p


def render_rays(scene: Scene, origin, dirs_world, max_range: float = DEFAULT_MAX_RANGE):
    """Shade arbitrary world rays from one origin; returns (rgb (N,3), range (N,))."""
    o = np.ascontiguousarray(origin, dtype=np.float64)
    d = np.ascontiguousarray(dirs_world, dtype=np.float64).reshape(-1, 3)
    pk = scene._packed
    return K.shade_many(o, d, float(max_range), pk.walls, pk.boxes, pk.floor_z, pk.ceil_z,
                        pk.bounds, pk.surf_mat, pk.mat_family, pk.mat_base, pk.mat_accent,
                        pk.mat_scale, pk.mat_axis, pk.mat_seed, pk.lights, float(scene.ambient))


def render(scene: Scene, pose: CameraPose, intr: CameraIntrinsics,
           max_range: float = DEFAULT_MAX_RANGE):
    """RGB image (H, W, 3) and range map (H, W) from a single pass."""
    p = _check_pose(scene, pose)
    dirs = to_world(pixel_directions(intr), pose.yaw, pose.pitch)
    rgb, dist = render_rays(scene, p, dirs.reshape(-1, 3), max_range)
    return rgb.reshape(intr.height, intr.width, 3), dist.reshape(intr.height, intr.width)


def render_rgb(scene: Scene, pose: CameraPose, intr: CameraIntrinsics,
               max_range: float = DEFAULT_MAX_RANGE) -> np.ndarray:
    return render(scene, pose, intr, max_range)[0]


def render_depth(scene: Scene, pose: CameraPose, intr: CameraIntrinsics,
                 max_range: float = DEFAULT_MAX_RANGE) -> np.ndarray:
    """Per-pixel range along the ray (not z-depth); +inf beyond ``max_range``."""
    p = _check_pose(scene, pose)
    dirs = to_world(pixel_directions(intr), pose.yaw, pose.pitch)
    dist, _ = raycast_many(scene, p, dirs.reshape(-1, 3), max_range)
    return dist.reshape(intr.height, intr.width)


def bin_depths(scene: Scene, pose: CameraPose, intr: CameraIntrinsics, M: int,
               max_range: float = DEFAULT_MAX_RANGE) -> np.ndarray:
    """Range through each bin centre, (M, M)."""
    p = _check_pose(scene, pose)
    dirs = to_world(grid_directions(M, intr), pose.yaw, pose.pitch)
    dist, _ = raycast_many(scene, p, dirs.reshape(-1, 3), max_range)
    return dist.reshape(M, M)


def freespace_labels(scene: Scene, pose: CameraPose, intr: CameraIntrinsics, M: int,
                     ray_len: float = 1.0) -> np.ndarray:
    """(M, M) uint8 grid: 1 = FREE (no surface within ``ray_len``), 0 = BLOCKED."""
    if not ray_len > 0:
        raise ContractError("ray_len must be positive")
    p = _check_pose(scene, pose)
    dirs = to_world(grid_directions(M, intr), pose.yaw, pose.pitch)
    dist, _ = raycast_many(scene, p, dirs.reshape(-1, 3), ray_len)
    return np.isinf(dist).reshape(M, M).astype(np.uint8)


# -- image / depth files ---------------------------------------------------

DEPTH_MAGIC = b"SFDEPTH1"


def write_ppm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractError("image must be (H, W, 3)")
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    # header: magic, width, height, maxval, then exactly one whitespace byte
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None or int(m.group(3)) != 255:
        raise ContractError("not an 8-bit binary PPM")
    w, h = int(m.group(1)), int(m.group(2))
    pix = np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=m.end())
    return pix.reshape(h, w, 3).astype(np.float64) / 255.0


def write_depth(path, depth: np.ndarray) -> None:
    """Raw little-endian float32 range map behind an 8-byte magic and width/height."""
    d = np.asarray(depth, dtype="<f4")
    h, w = d.shape
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(d.tobytes())


def read_depth(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != DEPTH_MAGIC:
        raise ContractError("not a depth file")
    w, h = struct.unpack("<II", raw[8:16])
    return np.frombuffer(raw[16:16 + 4 * w * h], dtype="<f4").reshape(h, w).copy()
