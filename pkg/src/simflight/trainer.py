"""Free-space pretraining and Monte Carlo Q-target regression.

Q targets are discounted returns over H+1 steps divided by their maximum
G_max, so they lie in [0, 1] and can be fit with soft-label cross-entropy.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import procgen, qnet
from ._parallel import pmap
from .errors import ConfigError, ContractError
from .policies import GreedyNetPolicy, Policy
from .render import bin_depths, freespace_labels, render_rgb
from .scene import Scene
from .vehicle import BinAction, GridSpec, RewardConfig, VehicleState, observe, step


@dataclass(frozen=True)
class TrainConfig:
    n_pretrain_images: int = 5000
    pretrain_epochs: int = 10
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    n_rl_iterations: int = 3
    states_per_iteration: int = 200
    rl_epochs: int = 4
    rl_lr: float = 0.01
    K: int = 0  # on-policy chain length; states are sampled i.i.d. instead
    rerandomize: bool = True  # fresh textures and lights for every pretraining image
    reward: RewardConfig = field(default_factory=RewardConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    convs: tuple = qnet.Arch().convs
    seed: int = 0

    def __post_init__(self):
        for name in ("n_pretrain_images", "states_per_iteration", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("pretrain_epochs", "n_rl_iterations", "rl_epochs", "K"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not (self.lr > 0 and self.rl_lr > 0):
            raise ConfigError("learning rates must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")

    def arch(self) -> qnet.Arch:
        intr = self.grid.intrinsics
        return qnet.Arch(input_hw=(intr.height, intr.width), convs=self.convs, M=self.grid.M)


@dataclass
class QTargetBatch:
    images: np.ndarray   # (N, H, W, 3) float32
    targets: np.ndarray  # (N, M, M) in [0, 1]
    masks: np.ndarray    # (N, M, M)
    depths: Optional[np.ndarray] = None  # (N, M, M) range through bin centres, if recorded

    def __post_init__(self):
        n = len(self.images)
        if len(self.targets) != n or len(self.masks) != n:
            raise ContractError("images, targets and masks must have equal length")
        if self.targets.shape != self.masks.shape or self.targets.ndim != 3:
            raise ContractError("targets and masks must be (N, M, M)")
        if n and (self.targets.min() < 0 or self.targets.max() > 1):
            raise ContractError("targets must lie in [0, 1]")

    def __len__(self):
        return len(self.images)

    def manifest_hash(self) -> str:
        h = hashlib.sha256()
        for a in (self.images, self.targets, self.masks):
            h.update(str(a.shape).encode())
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


class RolloutResult(NamedTuple):
    action: BinAction
    discounted_return: float
    normalized_return: float
    steps_survived: int


# -- pretraining -------------------------------------------------------------------

def _pretrain_item(args):
    scenes, grid, seed, i, rerandomize, pool = args
    rng = np.random.default_rng([seed, i, 0xF5])
    scene = scenes[int(rng.integers(len(scenes)))]
    pose = procgen.sample_camera_pose(scene, rng)
    if rerandomize:
        scene = procgen.randomize_appearance(scene, rng, pool)
    img = render_rgb(scene, pose, grid.intrinsics)
    lab = freespace_labels(scene, pose, grid.intrinsics, grid.M)
    depth = bin_depths(scene, pose, grid.intrinsics, grid.M)
    return img.astype(np.float32), lab, depth


def make_pretrain_dataset(scenes: Sequence[Scene], n: int, grid: GridSpec, seed: int,
                          rerandomize: bool = True, pool: Optional[Sequence] = None,
                          workers: int = 1) -> QTargetBatch:
    """n (image, free-space labels, full mask) pairs at random free-space poses.

    With ``rerandomize`` each image gets fresh textures, lights and ambient
    from ``pool`` (the training texture pool by default) on top of its
    scene's geometry. Bin-centre ranges are kept in ``depths``.
    """
    if not scenes or n < 1:
        raise ContractError("need at least one scene and one image")
    if pool is None:
        pool = procgen.texture_pool(procgen.TRAIN_TEXTURE_SEED,
                                    procgen.GenConfig().n_textures_pool)
    scenes = tuple(scenes)
    items = pmap(_pretrain_item, [(scenes, grid, seed, i, rerandomize, tuple(pool))
                                  for i in range(n)], workers)
    images = np.stack([a for a, _, _ in items])
    targets = np.stack([b for _, b, _ in items]).astype(np.float32)
    depths = np.stack([c for _, _, c in items])
    return QTargetBatch(images, targets, np.ones_like(targets), depths)


def pretrain(params: qnet.NetParams, dataset: QTargetBatch, cfg: TrainConfig,
             log: Optional[Callable[[int, float], None]] = None) -> qnet.NetParams:
    """Cross-entropy SGD on free-space labels for ``cfg.pretrain_epochs`` epochs."""
    if len(dataset) == 0:
        raise ContractError("empty pretraining dataset")
    params, _ = qnet.train_epochs(params, dataset.images, dataset.targets, dataset.masks,
                                  epochs=cfg.pretrain_epochs, lr=cfg.lr, momentum=cfg.momentum,
                                  batch_size=cfg.batch_size, seed=cfg.seed, log=log)
    return params


# -- rollouts ----------------------------------------------------------------------

def policy_actions(policy: Policy, scene: Scene, states: Sequence[VehicleState],
                   grid: GridSpec) -> list:
    """One action per state; perceptual policies only ever see rendered images."""
    if not states:
        return []
    if policy.oracle:
        return policy.act_many(None, grid, scene, [s.pose for s in states])
    if not policy.needs_image:
        return policy.act_many([None] * len(states), grid)
    images = np.stack([observe(scene, s, grid) for s in states])
    return policy.act_many(images, grid)


def rollout_return(scene: Scene, state: VehicleState, first_action, policy: Policy,
                   cfg: RewardConfig, grid: GridSpec) -> RolloutResult:
    """Take ``first_action``, then follow ``policy`` for up to H more steps.

    No bootstrap after the last step; a collision ends the sum with reward 0.
    """
    if state.collided:
        raise ContractError("rollout from a collided state")
    first = BinAction(int(first_action[0]), int(first_action[1]))
    total, disc, survived = 0.0, 1.0, 0
    for s in range(cfg.H + 1):
        action = first if s == 0 else policy_actions(policy, scene, [state], grid)[0]
        res = step(scene, state, action, cfg, grid)
        if res.terminal:
            break
        total += disc * res.reward
        survived += 1
        state = res.state
        disc *= cfg.gamma
    return RolloutResult(first, total, total / cfg.g_max, survived)


def rollouts_all_actions(scene: Scene, state: VehicleState, policy: Policy, cfg: RewardConfig,
                         grid: GridSpec):
    """Lockstep rollouts for every first action from one state.

    Returns (normalized returns (M, M), discounted returns (M, M), steps (M, M)).
    Policy queries for all surviving rollouts at a step go out as one batch.
    """
    M = grid.M
    n = M * M
    states = [state] * n
    alive = np.ones(n, dtype=bool)
    totals = np.zeros(n)
    survived = np.zeros(n, dtype=np.int64)
    disc = 1.0
    for s in range(cfg.H + 1):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        if s == 0:
            acts = [BinAction(int(k // M), int(k % M)) for k in idx]
        else:
            acts = policy_actions(policy, scene, [states[k] for k in idx], grid)
        for k, a in zip(idx, acts):
            res = step(scene, states[k], a, cfg, grid)
            if res.terminal:
                alive[k] = False
                continue
            totals[k] += disc * res.reward
            survived[k] += 1
            states[k] = res.state
        disc *= cfg.gamma
    return ((totals / cfg.g_max).reshape(M, M), totals.reshape(M, M), survived.reshape(M, M))


def sample_state(scenes: Sequence[Scene], rng: np.random.Generator, cfg: RewardConfig):
    """(scene index, state) uniform in free space with uniform yaw, level camera."""
    k = int(rng.integers(len(scenes)))
    pose = procgen.sample_camera_pose(scenes[k], rng, radius=cfg.r,
                                      height_band=cfg.altitude_band, pitch_band=0.0)
    return k, VehicleState(pose.position, pose.yaw)


def _qtarget_item(args):
    scenes, policy, cfg, i, iteration = args
    rng = np.random.default_rng([cfg.seed, iteration, i, 0x0A7])
    k, state = sample_state(scenes, rng, cfg.reward)
    img = observe(scenes[k], state, cfg.grid).astype(np.float32)
    grid_ret, _, _ = rollouts_all_actions(scenes[k], state, policy, cfg.reward, cfg.grid)
    return img, grid_ret


def collect_qtargets(scenes: Sequence[Scene], policy: Policy, cfg: TrainConfig,
                     iteration: int = 0, workers: int = 1) -> QTargetBatch:
    """One densely labeled (image, normalized-return grid, full mask) pair per state."""
    if not scenes:
        raise ContractError("no scenes to sample from")
    scenes = tuple(scenes)
    items = pmap(_qtarget_item, [(scenes, policy, cfg, i, iteration)
                                 for i in range(cfg.states_per_iteration)], workers)
    images = np.stack([a for a, _ in items])
    targets = np.stack([b for _, b in items])
    return QTargetBatch(images, targets, np.ones_like(targets))


METRICS_COLUMNS = ("iteration", "mean_return", "loss")


def cadrl_train(cfg: TrainConfig, scenes: Sequence[Scene], params: qnet.NetParams,
                out_dir=None, workers: int = 1, log: Optional[Callable[[dict], None]] = None):
    """Alternate greedy-policy Q-target collection and SGD on the fresh batch.

    The first collection uses the greedy policy over ``params`` as given
    (normally the pretrained free-space net). Returns (params, metrics rows).
    Checkpoints go to ``out_dir/iter_XXX.ckpt`` when ``out_dir`` is set.
    """
    if params.arch != cfg.arch():
        raise ConfigError("initial params do not match the configured architecture")
    metrics = []
    for it in range(cfg.n_rl_iterations):
        policy = GreedyNetPolicy(params, "cadrl")
        batch = collect_qtargets(scenes, policy, cfg, iteration=it, workers=workers)
        params, hist = qnet.train_epochs(params, batch.images, batch.targets, batch.masks,
                                         epochs=cfg.rl_epochs, lr=cfg.rl_lr,
                                         momentum=cfg.momentum, batch_size=cfg.batch_size,
                                         seed=cfg.seed + 7919 * (it + 1))
        row = {"iteration": it, "mean_return": float(batch.targets.mean()),
               "loss": float(hist[-1]) if hist else math.nan}
        metrics.append(row)
        if out_dir is not None:
            qnet.save_checkpoint(params, Path(out_dir) / f"iter_{it:03d}.ckpt")
        if log is not None:
            log(row)
    return params, metrics


def write_metrics_csv(path, rows, header_comment: str = "") -> None:
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(METRICS_COLUMNS)
        for r in rows:
            w.writerow([r["iteration"], repr(float(r["mean_return"])), repr(float(r["loss"]))])
