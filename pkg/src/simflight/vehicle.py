"""Image-space bin actions, vehicle kinematics, reward and collision."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigError, ContractError
from .render import CameraIntrinsics, CameraPose, camera_basis, render_rgb
from .scene import Scene, distance_to_nearest, segment_clearance


@dataclass(frozen=True)
class GridSpec:
    M: int = 11
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    def __post_init__(self):
        if self.M < 3 or self.M % 2 == 0:
            raise ConfigError("grid size M must be odd and >= 3")

    @property
    def n_actions(self) -> int:
        return self.M * self.M

    @property
    def center(self) -> "BinAction":
        c = self.M // 2
        return BinAction(c, c)


class BinAction(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class VehicleState:
    position: tuple
    yaw: float
    collided: bool = False

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))

    @property
    def pose(self) -> CameraPose:
        return CameraPose(self.position, self.yaw, 0.0)


@dataclass(frozen=True)
class RewardConfig:
    r: float = 0.25
    tau_d: float = 1.0
    speed: float = 0.3
    gamma: float = 0.9
    H: int = 5
    altitude_band: tuple = (0.75, 2.0)

    def __post_init__(self):
        if not self.tau_d > self.r > 0:
            raise ConfigError("need tau_d > r > 0")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.H < 0:
            raise ConfigError("H must be >= 0")
        if not self.speed > 0:
            raise ConfigError("speed must be positive")
        lo, hi = self.altitude_band
        if not hi > lo:
            raise ConfigError("altitude band must be increasing")
        object.__setattr__(self, "altitude_band", (float(lo), float(hi)))

    @property
    def g_max(self) -> float:
        """Largest achievable discounted return over H+1 steps.

        Accumulated with the same running discount as the rollouts, so an
        all-safe rollout normalizes to exactly 1.
        """
        total, disc = 0.0, 1.0
        for _ in range(self.H + 1):
            total += disc
            disc *= self.gamma
        return total


class StepResult(NamedTuple):
    state: VehicleState
    reward: float
    terminal: bool


def _check_action(action, grid: GridSpec) -> BinAction:
    row, col = int(action[0]), int(action[1])
    if not (0 <= row < grid.M and 0 <= col < grid.M):
        raise ContractError(f"bin {(row, col)} outside {grid.M}x{grid.M} grid")
    return BinAction(row, col)


def bin_to_direction(action, grid: GridSpec) -> np.ndarray:
    """Unit camera-frame vector through the centre of a bin."""
    a = _check_action(action, grid)
    t = grid.intrinsics
    u = ((a.col + 0.5) / grid.M * 2.0 - 1.0) * t.tan_half_h
    v = ((a.row + 0.5) / grid.M * 2.0 - 1.0) * t.tan_half_v
    d = np.array([u, v, 1.0])
    return d / np.linalg.norm(d)


def reward_from_clearance(d: float, cfg: RewardConfig) -> float:
    return min(1.0, (d - cfg.r) / (cfg.tau_d - cfg.r))


def velocity(state: VehicleState, action, grid: GridSpec, cfg: RewardConfig) -> np.ndarray:
    """World-frame displacement for one step, before altitude limiting."""
    d_cam = bin_to_direction(action, grid)
    return cfg.speed * (d_cam @ camera_basis(state.yaw, 0.0))


def step(scene: Scene, state: VehicleState, action, cfg: RewardConfig,
         grid: GridSpec) -> StepResult:
    """Advance one step at constant speed along the bin direction.

    If the climb or descent would leave the altitude band, the motion is
    flattened to horizontal at full speed so distance per step stays exact.
    Collision is a swept-sphere test over the step segment.
    """
    if state.collided:
        raise ContractError("cannot step a collided state")
    p0 = np.asarray(state.position, dtype=np.float64)
    v = velocity(state, action, grid, cfg)
    lo, hi = cfg.altitude_band
    if not lo <= p0[2] + v[2] <= hi:
        h = math.hypot(v[0], v[1])
        v = np.array([v[0] / h * cfg.speed, v[1] / h * cfg.speed, 0.0])
    p1 = p0 + v
    yaw = math.atan2(v[1], v[0])
    if not scene.contains(p1):
        nxt = VehicleState(tuple(p0), yaw, True)
        return StepResult(nxt, 0.0, True)
    swept = segment_clearance(scene, p0, p1, stop_below=cfg.r)
    d = distance_to_nearest(scene, p1)
    if swept < cfg.r or d < cfg.r:
        return StepResult(VehicleState(tuple(p1), yaw, True), 0.0, True)
    return StepResult(VehicleState(tuple(p1), yaw, False), reward_from_clearance(d, cfg), False)


def observe(scene: Scene, state: VehicleState, grid: GridSpec) -> np.ndarray:
    return render_rgb(scene, state.pose, grid.intrinsics)


TRAJECTORY_COLUMNS = ("step", "x", "y", "z", "yaw", "reward", "action_row", "action_col",
                      "collided")


def write_trajectory_csv(path, rows: Iterable, header_comment: str = "") -> None:
    """Rows are dicts or tuples in TRAJECTORY_COLUMNS order."""
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(TRAJECTORY_COLUMNS)
        for r in rows:
            if isinstance(r, dict):
                r = [r[c] for c in TRAJECTORY_COLUMNS]
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v

