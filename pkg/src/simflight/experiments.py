"""Desk-scale experiment drivers shared by scripts/ and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import evaluation as ev
from . import procgen, qnet, trainer
from .policies import LrsConfig, make_policy, train_lrs
from .scene import Scene
from .vehicle import GridSpec, RewardConfig


@dataclass(frozen=True)
class FreeSpaceReport:
    pixel_accuracy: float
    jaccard_fs: float
    jaccard_obstacle: float
    mean_ap: float
    majority_accuracy: float
    pr: ev.PRTable = field(repr=False)


def heldout_pool():
    return procgen.texture_pool(procgen.TEST_TEXTURE_SEED, procgen.TEST_POOL_SIZE)


def heldout_freespace_set(test_scenes: Sequence[Scene], n: int, grid: GridSpec, seed: int,
                          workers: int = 1) -> trainer.QTargetBatch:
    """Images from held-out scenes, re-textured from the held-out texture pool."""
    return trainer.make_pretrain_dataset(test_scenes, n, grid, seed, rerandomize=True,
                                         pool=heldout_pool(), workers=workers)


def score_freespace(params: qnet.NetParams, data: trainer.QTargetBatch,
                    batch: int = 64) -> FreeSpaceReport:
    probs = np.concatenate([qnet.forward(params, data.images[i:i + batch])
                            for i in range(0, len(data), batch)])
    gt = data.targets > 0.5
    scores = ev.precision_jaccard(probs > 0.5, gt)
    pr = ev.fs_pr_sweep(probs, data.depths)
    majority = max(gt.mean(), 1.0 - gt.mean())
    return FreeSpaceReport(scores.pixel_accuracy, scores.jaccard_fs, scores.jaccard_obstacle,
                           pr.mean_average_precision(), float(majority), pr)


def train_freespace(scenes: Sequence[Scene], cfg: trainer.TrainConfig, rerandomize: bool = True,
                    workers: int = 1, log=None) -> qnet.NetParams:
    data = trainer.make_pretrain_dataset(scenes, cfg.n_pretrain_images, cfg.grid, cfg.seed,
                                         rerandomize=rerandomize, workers=workers)
    params = qnet.init_params(cfg.arch(), cfg.seed)
    return trainer.pretrain(params, data, cfg, log=log)


# -- randomization ablation -------------------------------------------------------------

def fixed_texture_scenes(gen: procgen.GenConfig, template_ids: Sequence[int],
                         scenes_per_template: int) -> list:
    """Training-template scenes with one fixed texture set and fixed lights."""
    out = []
    for tid in template_ids:
        for k in range(scenes_per_template):
            cfg = replace(gen, seed=procgen.scene_seed(gen.seed, tid, k), template_id=tid,
                          texture_pool="train", randomize_appearance=False)
            out.append(procgen.generate_scene(cfg))
    return out


def randomization_ablation(gen: procgen.GenConfig, cfg: trainer.TrainConfig,
                           scenes_per_template: int, heldout: trainer.QTargetBatch,
                           full_params: Optional[qnet.NetParams] = None, workers: int = 1,
                           log=print) -> dict:
    """Held-out mean AP of nets trained with full randomization, fixed textures on
    all nine training templates, and fixed textures on three of them."""
    split = procgen.evaluation_split(gen, scenes_per_template)
    train_ids = split.train_templates
    results = {}
    if full_params is None:
        full_params = train_freespace(split.train, cfg, True, workers)
    results["full"] = score_freespace(full_params, heldout)
    ft9 = fixed_texture_scenes(gen, train_ids, scenes_per_template)
    results["ft9"] = score_freespace(train_freespace(ft9, cfg, False, workers), heldout)
    ft3 = [s for s in ft9 if s.meta["template_id"] in train_ids[:3]]
    results["ft3"] = score_freespace(train_freespace(ft3, cfg, False, workers), heldout)
    if log:
        for k, r in results.items():
            log(f"{k}: mean AP {r.mean_ap:.4f}  pixel accuracy {r.pixel_accuracy:.4f}")
    return results


# -- policy comparison ---------------------------------------------------------------------

@dataclass(frozen=True)
class PolicyRun:
    name: str
    outcomes: tuple
    curve: ev.SurvivalCurve
    mean_distance: float
    seconds: float


def compare_policies(policies: dict, scenes: Sequence[Scene], trials: Sequence[ev.TrialSpec],
                     grid: GridSpec, reward: RewardConfig = RewardConfig(), workers: int = 1,
                     log=print) -> dict:
    runs = {}
    for name, pol in policies.items():
        t0 = time.time()
        out = ev.run_trials(scenes, pol, trials, grid, reward, workers=workers)
        runs[name] = PolicyRun(name, tuple(out), ev.survival_curve(out), ev.mean_distance(out),
                               time.time() - t0)
        if log:
            log(f"{name}: mean distance {runs[name].mean_distance:.2f} m "
                f"({runs[name].seconds:.0f} s)")
    return runs


def build_policies(fs_params: qnet.NetParams, cadrl_params: Optional[qnet.NetParams] = None,
                   lrs_params: Optional[qnet.NetParams] = None) -> dict:
    pols = {"straight": make_policy("straight"), "fsgt": make_policy("fsgt"),
            "fspred": make_policy("fspred", fs_params)}
    if cadrl_params is not None:
        pols["cadrl"] = make_policy("cadrl", cadrl_params)
    if lrs_params is not None:
        pols["lrs"] = make_policy("lrs", lrs_params)
    return pols


def train_lrs_baseline(scenes: Sequence[Scene], cfg: trainer.TrainConfig, n_poses: int = 600,
                       epochs: int = 8) -> qnet.NetParams:
    lcfg = LrsConfig(n_poses=n_poses, epochs=epochs, lr=cfg.lr, momentum=cfg.momentum,
                     batch_size=cfg.batch_size, convs=cfg.convs, radius=cfg.reward.r,
                     altitude_band=cfg.reward.altitude_band, seed=cfg.seed)
    return train_lrs(scenes, lcfg, cfg.grid)


# -- end-to-end determinism -----------------------------------------------------------------

def small_pipeline_config(run_root: str = "runs") -> dict:
    """Full-resolution pipeline with small counts: 2 Q-target iterations, 10 trials."""
    return {
        "train": {"n_pretrain_images": 200, "pretrain_epochs": 1, "n_rl_iterations": 2,
                  "states_per_iteration": 8, "rl_epochs": 1},
        "split": {"scenes_per_template": 1},
        "eval": {"n_init_points": 10, "max_steps": 150},
        "run_root": run_root,
    }


def run_pipeline(config_path, out_dir, workers: int = 1) -> dict:
    """gen -> pretrain -> train -> eval through the CLI; returns {relative path: bytes}
    for every CSV written."""
    from pathlib import Path

    from .cli import EXIT_OK, dispatch

    out = Path(out_dir)
    c = ["--config", str(config_path), "--workers", str(workers)]
    steps = [
        ["gen", "--config", str(config_path), "--out", str(out / "scenes")],
        ["pretrain", *c, "--scenes", str(out / "scenes"), "--out", str(out / "fs.ckpt")],
        ["train", *c, "--scenes", str(out / "scenes"), "--init", str(out / "fs.ckpt"),
         "--out", str(out / "train")],
        ["eval", *c, "--scenes", str(out / "scenes"), "--policy", "cadrl",
         "--checkpoint", str(out / "train" / "final.ckpt"), "--out", str(out / "eval")],
    ]
    for argv in steps:
        code = dispatch(argv)
        if code != EXIT_OK:
            raise RuntimeError(f"'{' '.join(argv[:1])}' exited with {code}")
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*.csv"))}
