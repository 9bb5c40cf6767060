"""Controllers: greedy over a score map, ground-truth free space, straight, and
the three-way left/straight/right classifier."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import procgen, qnet
from .errors import ConfigError, ContractError
from .render import CameraPose, freespace_labels, render_rgb
from .scene import Scene, distance_to_nearest
from .vehicle import BinAction, GridSpec

LRS_CLASSES = ("left", "straight", "right")


def _center_order(M: int) -> np.ndarray:
    """Flat bin indices sorted by distance to the centre, then row-major."""
    rows, cols = np.divmod(np.arange(M * M), M)
    c = M // 2
    d2 = (rows - c) ** 2 + (cols - c) ** 2
    return np.lexsort((np.arange(M * M), d2))


def greedy(qmap) -> BinAction:
    """Argmax bin; ties go to the bin nearest the centre, then row-major."""
    q = np.asarray(qmap, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] % 2 == 0:
        raise ContractError("score map must be square with odd side")
    if not np.all(np.isfinite(q)):
        raise ContractError("score map has non-finite values")
    M = q.shape[0]
    order = _center_order(M)
    flat = q.ravel()[order]
    k = order[int(np.argmax(flat))]  # argmax returns the first maximum
    return BinAction(int(k // M), int(k % M))


def most_central(mask) -> Optional[BinAction]:
    """Most central True bin of a boolean grid, None if there is none."""
    m = np.asarray(mask, dtype=bool)
    M = m.shape[0]
    for k in _center_order(M):
        if m.flat[k]:
            return BinAction(int(k // M), int(k % M))
    return None


def fs_gt(scene: Scene, pose: CameraPose, grid: GridSpec) -> BinAction:
    """Most central bin with no surface within 1 m; the centre bin if all are blocked."""
    labels = freespace_labels(scene, pose, grid.intrinsics, grid.M)
    a = most_central(labels == 1)
    return grid.center if a is None else a


def straight(grid: GridSpec) -> BinAction:
    return grid.center


def lrs_class_to_bin(cls: int, grid: GridSpec) -> BinAction:
    """left/right steer by a fixed column offset of round(M/4) from the centre."""
    c = grid.M // 2
    off = int(round(grid.M / 4))
    return BinAction(c, (c - off, c, c + off)[int(cls)])


# -- policy objects ----------------------------------------------------------------
#
# Perceptual policies get images only. Oracle policies get the scene and the
# camera pose instead and never see images.

class Policy:
    name = "policy"
    oracle = False
    needs_image = True

    def act(self, image, grid: GridSpec, scene: Optional[Scene] = None,
            pose: Optional[CameraPose] = None) -> BinAction:
        raise NotImplementedError

    def act_many(self, images, grid: GridSpec, scene: Optional[Scene] = None,
                 poses: Optional[Sequence[CameraPose]] = None) -> list:
        n = len(images) if images is not None else len(poses)
        return [self.act(None if images is None else images[i], grid, scene,
                         None if poses is None else poses[i]) for i in range(n)]


class StraightPolicy(Policy):
    name = "straight"
    needs_image = False

    def act(self, image, grid, scene=None, pose=None):
        return straight(grid)


class FreeSpaceOracle(Policy):
    name = "fsgt"
    oracle = True
    needs_image = False

    def act(self, image, grid, scene=None, pose=None):
        if scene is None or pose is None:
            raise ContractError("fsgt needs the scene and camera pose")
        return fs_gt(scene, pose, grid)


class GreedyNetPolicy(Policy):
    """Greedy over a score-map network (free-space probabilities or normalized Q)."""

    def __init__(self, params: qnet.NetParams, name: str = "cadrl"):
        if params.arch.head != "map":
            raise ConfigError("greedy policy needs a score-map network")
        self.params = params
        self.name = name

    def act(self, image, grid, scene=None, pose=None):
        self._check(grid)
        return greedy(qnet.forward(self.params, image))

    def act_many(self, images, grid, scene=None, poses=None):
        self._check(grid)
        if len(images) == 0:
            return []
        maps = qnet.forward(self.params, np.asarray(images))
        return [greedy(m) for m in maps]

    def _check(self, grid):
        if grid.M != self.params.arch.M:
            raise ConfigError(f"network predicts {self.params.arch.M}x{self.params.arch.M} bins, "
                              f"grid has M={grid.M}")


class LrsPolicy(Policy):
    name = "lrs"

    def __init__(self, params: qnet.NetParams):
        if params.arch.head != "softmax" or params.arch.n_classes != 3:
            raise ConfigError("LRS policy needs a 3-class softmax network")
        self.params = params

    def act(self, image, grid, scene=None, pose=None):
        return lrs_policy(self.params, image, grid)

    def act_many(self, images, grid, scene=None, poses=None):
        if len(images) == 0:
            return []
        probs = qnet.forward(self.params, np.asarray(images))
        return [lrs_class_to_bin(int(np.argmax(p)), grid) for p in probs]


def lrs_policy(params: qnet.NetParams, image, grid: GridSpec) -> BinAction:
    probs = qnet.forward(params, image)
    return lrs_class_to_bin(int(np.argmax(probs)), grid)


POLICY_NAMES = ("cadrl", "fspred", "fsgt", "straight", "lrs")


def make_policy(name: str, params: Optional[qnet.NetParams] = None) -> Policy:
    if name == "straight":
        return StraightPolicy()
    if name == "fsgt":
        return FreeSpaceOracle()
    if name in ("cadrl", "fspred"):
        if params is None:
            raise ConfigError(f"policy {name!r} needs a checkpoint")
        return GreedyNetPolicy(params, name)
    if name == "lrs":
        if params is None:
            raise ConfigError("policy 'lrs' needs a checkpoint")
        return LrsPolicy(params)
    raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")


# -- LRS training --------------------------------------------------------------------

@dataclass(frozen=True)
class LrsConfig:
    n_poses: int = 600
    epochs: int = 10
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    yaw_offset: float = math.radians(30.0)
    convs: tuple = qnet.Arch().convs
    rerandomize: bool = True
    radius: float = 0.25
    altitude_band: tuple = (0.75, 2.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_poses < 1 or self.epochs < 0:
            raise ConfigError("n_poses must be >= 1 and epochs >= 0")
        if not 0 < self.yaw_offset < math.pi / 2:
            raise ConfigError("yaw_offset must lie in (0, pi/2)")


def medial_axis_pose(scene: Scene, rng: np.random.Generator, radius: float = 0.25,
                     altitude_band=(0.75, 2.0), max_tries: int = 1000) -> CameraPose:
    """Pose on a corridor centre line facing along it (either direction)."""
    axes = procgen.corridor_axes(scene)
    lengths = np.array([math.dist(a, b) for a, b, _ in axes])
    for _ in range(max_tries):
        k = int(rng.choice(len(axes), p=lengths / lengths.sum()))
        (ax, ay), (bx, by), _ = axes[k]
        t = float(rng.uniform(0.0, 1.0))
        z = float(rng.uniform(*altitude_band))
        p = (ax + t * (bx - ax), ay + t * (by - ay), z)
        yaw = math.atan2(by - ay, bx - ax) + (math.pi if rng.random() < 0.5 else 0.0)
        if scene.contains(p) and distance_to_nearest(scene, p) >= radius:
            return CameraPose(p, yaw, 0.0)
    raise ContractError("no free medial-axis pose found")


def lrs_dataset(scenes: Sequence[Scene], cfg: LrsConfig, grid: GridSpec):
    """Three images per rig pose; returns (images, class labels)."""
    if not scenes:
        raise ContractError("no training scenes")
    pool = procgen.texture_pool(procgen.TRAIN_TEXTURE_SEED, procgen.GenConfig().n_textures_pool)
    intr = grid.intrinsics
    images, labels = [], []
    for i in range(cfg.n_poses):
        rng = np.random.default_rng([cfg.seed, i, 0x1A5])
        scene = scenes[int(rng.integers(len(scenes)))]
        pose = medial_axis_pose(scene, rng, cfg.radius, cfg.altitude_band)
        if cfg.rerandomize:
            scene = procgen.randomize_appearance(scene, rng, pool)
        # camera yawed left (+offset) must turn right to re-centre, and vice versa
        for cls, off in ((2, cfg.yaw_offset), (1, 0.0), (0, -cfg.yaw_offset)):
            images.append(render_rgb(scene, CameraPose(pose.position, pose.yaw + off, 0.0), intr))
            labels.append(cls)
    return np.asarray(images, dtype=np.float32), np.asarray(labels, dtype=np.int64)


def lrs_arch(cfg: LrsConfig, grid: GridSpec) -> qnet.Arch:
    intr = grid.intrinsics
    return qnet.Arch(input_hw=(intr.height, intr.width), convs=cfg.convs, head="softmax",
                     M=grid.M, n_classes=3)


def train_lrs(scenes: Sequence[Scene], cfg: LrsConfig, grid: GridSpec, log=None) -> qnet.NetParams:
    images, labels = lrs_dataset(scenes, cfg, grid)
    params = qnet.init_params(lrs_arch(cfg, grid), cfg.seed)
    params, _ = qnet.train_epochs(params, images, labels, epochs=cfg.epochs, lr=cfg.lr,
                                  momentum=cfg.momentum, batch_size=cfg.batch_size,
                                  seed=cfg.seed, log=log)
    return params
