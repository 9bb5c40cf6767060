"""Run configuration: strict JSON schema, canonical form and hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .policies import LrsConfig
from .procgen import GenConfig
from .render import CameraIntrinsics
from .trainer import TrainConfig
from .vehicle import GridSpec, RewardConfig


@dataclass(frozen=True)
class GridSection:
    M: int = 11
    width: int = 64
    height: int = 64
    horizontal_fov_deg: float = 90.0


@dataclass(frozen=True)
class TrainSection:
    n_pretrain_images: int = 5000
    pretrain_epochs: int = 10
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    n_rl_iterations: int = 3
    states_per_iteration: int = 200
    rl_epochs: int = 4
    rl_lr: float = 0.01
    K: int = 0
    rerandomize: bool = True
    convs: tuple = TrainConfig().convs
    seed: int = 0


@dataclass(frozen=True)
class LrsSection:
    n_poses: int = 600
    epochs: int = 8
    yaw_offset_deg: float = 30.0


@dataclass(frozen=True)
class SplitSection:
    scenes_per_template: int = 2
    test_furnish: Optional[bool] = None


@dataclass(frozen=True)
class EvalSection:
    n_init_points: int = 100
    max_steps: int = 6000
    speed: float = 0.3
    seed: int = 0
    record_trajectories: bool = True
    top_n: Optional[int] = None
    n_scenes: Optional[int] = None  # evaluate on the first n test scenes only


@dataclass(frozen=True)
class FsEvalSection:
    n_images: int = 500
    seed: int = 99


@dataclass(frozen=True)
class RunConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    grid: GridSection = field(default_factory=GridSection)
    reward: RewardConfig = field(default_factory=RewardConfig)
    train: TrainSection = field(default_factory=TrainSection)
    lrs: LrsSection = field(default_factory=LrsSection)
    split: SplitSection = field(default_factory=SplitSection)
    eval: EvalSection = field(default_factory=EvalSection)
    fseval: FsEvalSection = field(default_factory=FsEvalSection)
    run_root: str = "runs"

    # -- derived runtime objects --

    def grid_spec(self) -> GridSpec:
        g = self.grid
        intr = CameraIntrinsics(g.width, g.height, math.radians(g.horizontal_fov_deg))
        return GridSpec(g.M, intr)

    def train_config(self) -> TrainConfig:
        t = dataclasses.asdict(self.train)
        t["convs"] = tuple(tuple(c) for c in t["convs"])
        return TrainConfig(reward=self.reward, grid=self.grid_spec(), **t)

    def lrs_config(self) -> LrsConfig:
        t = self.train
        return LrsConfig(n_poses=self.lrs.n_poses, epochs=self.lrs.epochs, lr=t.lr,
                         momentum=t.momentum, batch_size=t.batch_size,
                         yaw_offset=math.radians(self.lrs.yaw_offset_deg),
                         convs=tuple(tuple(c) for c in t.convs), radius=self.reward.r,
                         altitude_band=self.reward.altitude_band, seed=t.seed)

    def validate(self) -> "RunConfig":
        self.grid_spec()
        self.train_config()
        self.lrs_config()
        if self.split.scenes_per_template < 1:
            raise ConfigError("split.scenes_per_template must be >= 1")
        e = self.eval
        if e.n_init_points < 1 or e.max_steps < 1 or not e.speed > 0:
            raise ConfigError("eval needs n_init_points >= 1, max_steps >= 1, speed > 0")
        if self.fseval.n_images < 1:
            raise ConfigError("fseval.n_images must be >= 1")
        return self


_SECTIONS = {"gen": GenConfig, "grid": GridSection, "reward": RewardConfig, "train": TrainSection,
             "lrs": LrsSection, "split": SplitSection, "eval": EvalSection,
             "fseval": FsEvalSection}


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def _section(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kw = {}
    for k, v in data.items():
        default = getattr(cls(), k)
        if isinstance(default, tuple) and isinstance(v, list):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        if isinstance(default, bool) and not isinstance(v, bool):
            raise ConfigError(f"{where}.{k}: expected true/false")
        if isinstance(default, (int, float)) and not isinstance(default, bool) \
                and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise ConfigError(f"{where}.{k}: expected a number")
        if isinstance(default, int) and not isinstance(default, bool) and isinstance(v, float):
            raise ConfigError(f"{where}.{k}: expected an integer")
        kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(_SECTIONS) - {"run_root"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    kw = {name: _section(cls, data[name], name) for name, cls in _SECTIONS.items() if name in data}
    if "run_root" in data:
        if not isinstance(data["run_root"], str):
            raise ConfigError("run_root must be a string")
        kw["run_root"] = data["run_root"]
    return RunConfig(**kw).validate()


def config_to_dict(cfg: RunConfig) -> dict:
    out = {}
    for name in _SECTIONS:
        sec = getattr(cfg, name)
        out[name] = {f.name: _jsonable(getattr(sec, f.name)) for f in dataclasses.fields(sec)}
    out["run_root"] = cfg.run_root
    return out


def canonical_json(cfg: RunConfig) -> str:
    """Sorted keys, no whitespace; ``run_root`` is excluded because it only says where
    outputs go."""
    d = config_to_dict(cfg)
    d.pop("run_root")
    return json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), sort_keys=True, indent=2) + "\n")
