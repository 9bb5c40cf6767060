"""Episode runner, survival curves and free-space prediction metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._parallel import pmap
from .errors import ContractError, MetricError
from .policies import Policy
from .procgen import sample_camera_pose
from .scene import Scene, distance_to_nearest
from .trainer import policy_actions
from .vehicle import GridSpec, RewardConfig, VehicleState, step, write_trajectory_csv

DEPTH_THRESHOLDS = tuple(round(1.0 + 0.3 * k, 1) for k in range(11))  # 1.0 .. 4.0 m
PROB_THRESHOLDS = tuple(np.linspace(0.0, 1.0, 101))


@dataclass(frozen=True)
class TrialSpec:
    scene_id: int
    position: tuple
    yaw: float
    max_steps: int = 6000
    speed: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if self.max_steps < 1:
            raise ContractError("max_steps must be >= 1")
        if not self.speed > 0:
            raise ContractError("speed must be positive")


class TrialOutcome(NamedTuple):
    steps_survived: int
    distance_m: float
    collided: bool
    max_steps: int
    speed: float
    trajectory: Optional[tuple] = None


def make_trials(scenes: Sequence[Scene], n: int, seed: int, max_steps: int = 6000,
                speed: float = 0.3, reward: RewardConfig = RewardConfig()) -> list:
    """Fixed random init points, cycling through the scenes; shared by all policies."""
    trials = []
    for i in range(n):
        rng = np.random.default_rng([seed, i, 0xE7A1])
        k = i % len(scenes)
        pose = sample_camera_pose(scenes[k], rng, radius=reward.r,
                                  height_band=reward.altitude_band, pitch_band=0.0)
        trials.append(TrialSpec(k, pose.position, pose.yaw, max_steps, speed))
    return trials


def run_episode(scene: Scene, policy: Policy, trial: TrialSpec, grid: GridSpec,
                reward: RewardConfig = RewardConfig(), record: bool = False) -> TrialOutcome:
    """observe -> act -> step until a collision or ``max_steps``."""
    cfg = replace(reward, speed=trial.speed)
    if not scene.contains(trial.position) or distance_to_nearest(scene, trial.position) < cfg.r:
        raise ContractError("trial must start in free space")
    state = VehicleState(trial.position, trial.yaw)
    rows = [] if record else None
    if record:
        rows.append((0, *state.position, state.yaw, 0.0, -1, -1, False))
    steps = 0
    collided = False
    while steps < trial.max_steps:
        action = policy_actions(policy, scene, [state], grid)[0]
        res = step(scene, state, action, cfg, grid)
        if record:
            rows.append((steps + 1, *res.state.position, res.state.yaw, res.reward,
                         action[0], action[1], res.terminal))
        if res.terminal:
            collided = True
            break
        state = res.state
        steps += 1
    return TrialOutcome(steps, steps * trial.speed, collided, trial.max_steps, trial.speed,
                        tuple(rows) if record else None)


def _episode_item(args):
    scenes, policy, trial, grid, reward, record = args
    return run_episode(scenes[trial.scene_id], policy, trial, grid, reward, record)


def run_trials(scenes: Sequence[Scene], policy: Policy, trials: Sequence[TrialSpec],
               grid: GridSpec, reward: RewardConfig = RewardConfig(), record: bool = False,
               workers: int = 1) -> list:
    scenes = tuple(scenes)
    return pmap(_episode_item, [(scenes, policy, t, grid, reward, record) for t in trials],
                workers)


# -- survival ------------------------------------------------------------------------

class SurvivalCurve(NamedTuple):
    distances: tuple
    fractions: tuple

    def at(self, d: float) -> float:
        i = int(np.searchsorted(self.distances, d, side="right")) - 1
        return self.fractions[max(i, 0)]


def fraction_reaching(outcomes: Sequence[TrialOutcome], d: float) -> float:
    """Trials that flew at least ``d`` metres; uncollided trials count at any distance."""
    if not outcomes:
        raise MetricError("no outcomes")
    dist = np.array([o.distance_m for o in outcomes])
    ok = np.array([not o.collided for o in outcomes])
    return float(np.mean(ok | (dist >= d)))


def survival_curve(outcomes: Sequence[TrialOutcome], distances=None,
                   spacing: float = 10.0) -> SurvivalCurve:
    """Fraction of trials reaching each distance.

    By default distances run from 0 every ``spacing`` metres up to the longest
    possible flight, which is appended if it is not on the grid.
    """
    if not outcomes:
        raise MetricError("no outcomes")
    if distances is None:
        top = max(o.max_steps * o.speed for o in outcomes)
        distances = list(np.arange(0.0, top + 1e-9, spacing))
        if top - distances[-1] > 1e-9:
            distances.append(top)
    ds = tuple(float(d) for d in distances)
    if any(b < a for a, b in zip(ds, ds[1:])):
        raise MetricError("distances must be sorted")
    return SurvivalCurve(ds, tuple(fraction_reaching(outcomes, d) for d in ds))


def mean_distance(outcomes: Sequence[TrialOutcome]) -> float:
    return float(np.mean([o.distance_m for o in outcomes]))


# -- free-space prediction metrics --------------------------------------------------

@dataclass(frozen=True)
class PRTable:
    prob_thresholds: np.ndarray   # (P,)
    depth_thresholds: np.ndarray  # (D,)
    precision: np.ndarray         # (D, P)
    recall: np.ndarray            # (D, P)

    @property
    def precision_mean(self):
        return self.precision.mean(axis=0)

    @property
    def precision_std(self):
        return self.precision.std(axis=0)

    @property
    def recall_mean(self):
        return self.recall.mean(axis=0)

    @property
    def recall_std(self):
        return self.recall.std(axis=0)

    def average_precision(self) -> np.ndarray:
        """Per depth threshold: sum over thresholds of precision times recall gained."""
        ap = []
        for p, r in zip(self.precision, self.recall):
            order = np.argsort(-np.asarray(self.prob_thresholds), kind="stable")
            rr, pp = r[order], p[order]
            gain = np.diff(np.concatenate([[0.0], rr]))
            ap.append(float(np.sum(gain * pp)))
        return np.asarray(ap)

    def mean_average_precision(self) -> float:
        return float(self.average_precision().mean())


def fs_pr_sweep(pred_maps, depth_maps, prob_thresholds=PROB_THRESHOLDS,
                depth_thresholds=DEPTH_THRESHOLDS) -> PRTable:
    """Precision/recall of "free" (probability > t) against depth > depth threshold.

    Precision with no predicted positives is 1 by convention.
    """
    p = np.asarray(pred_maps, dtype=np.float64).ravel()
    d = np.asarray(depth_maps, dtype=np.float64).ravel()
    if np.shape(pred_maps) != np.shape(depth_maps):
        raise MetricError("prediction and depth maps must have the same shape")
    if p.size == 0:
        raise MetricError("no pixels")
    pt = np.asarray(prob_thresholds, dtype=np.float64)
    dt = np.asarray(depth_thresholds, dtype=np.float64)
    # counts via sorting: number of predictions above each threshold
    order = np.argsort(p, kind="stable")
    ps = p[order]
    above = p.size - np.searchsorted(ps, pt, side="right")
    prec = np.empty((len(dt), len(pt)))
    rec = np.empty_like(prec)
    for i, t in enumerate(dt):
        gt = (d > t)[order]
        pos = int(gt.sum())
        if pos == 0:
            raise MetricError(f"no free ground truth at depth threshold {t}: recall undefined")
        # positives among the k highest predictions
        top_pos = np.concatenate([[0], np.cumsum(gt[::-1])])
        tp = top_pos[above].astype(np.float64)
        prec[i] = np.where(above > 0, tp / np.maximum(above, 1), 1.0)
        rec[i] = tp / pos
    return PRTable(pt, dt, prec, rec)


class PixelScores(NamedTuple):
    pixel_accuracy: float
    jaccard_fs: float
    jaccard_obstacle: float


def _jaccard(a, b) -> float:
    union = np.count_nonzero(a | b)
    return 1.0 if union == 0 else np.count_nonzero(a & b) / union


def precision_jaccard(pred, gt) -> PixelScores:
    """Pixel accuracy (share of correctly labeled pixels) and per-class IoU.

    True means free. A class absent from both masks scores IoU 1.
    """
    a = np.asarray(pred, dtype=bool)
    b = np.asarray(gt, dtype=bool)
    if a.shape != b.shape:
        raise MetricError("masks must have equal shapes")
    if a.size == 0:
        raise MetricError("empty masks")
    return PixelScores(float(np.mean(a == b)), float(_jaccard(a, b)), float(_jaccard(~a, ~b)))


# -- CSV output ---------------------------------------------------------------------

OUTCOME_COLUMNS = ("trial", "scene_id", "x0", "y0", "z0", "yaw0", "steps_survived",
                   "distance_m", "collided")


def _comment(f, header_comment):
    if header_comment:
        f.write(f"# {header_comment}\n")


def write_outcomes_csv(path, trials: Sequence[TrialSpec], outcomes: Sequence[TrialOutcome],
                       header_comment: str = "") -> None:
    with open(path, "w", newline="") as f:
        _comment(f, header_comment)
        w = csv.writer(f)
        w.writerow(OUTCOME_COLUMNS)
        for i, (t, o) in enumerate(zip(trials, outcomes)):
            w.writerow([i, t.scene_id, *map(repr, t.position), repr(t.yaw), o.steps_survived,
                        repr(o.distance_m), int(o.collided)])


def write_survival_csv(path, curve: SurvivalCurve, header_comment: str = "") -> None:
    """Two whitespace-free columns, plottable directly with gnuplot (``set datafile separator ','``)."""
    with open(path, "w", newline="") as f:
        _comment(f, header_comment)
        w = csv.writer(f)
        w.writerow(("distance_m", "fraction"))
        for d, fr in zip(curve.distances, curve.fractions):
            w.writerow([repr(d), repr(fr)])


def top_n_longest(outcomes: Sequence[TrialOutcome], n: Optional[int]) -> list:
    """Indices of the ``n`` longest flights, longest first, ties by trial index."""
    idx = sorted(range(len(outcomes)), key=lambda i: (-outcomes[i].distance_m, i))
    return idx if n is None else idx[:n]


def write_trajectories(out_dir, outcomes: Sequence[TrialOutcome], top_n: Optional[int] = None,
                       header_comment: str = "") -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in top_n_longest(outcomes, top_n):
        if outcomes[i].trajectory is None:
            raise ContractError("outcome was run without trajectory recording")
        p = out / f"trial_{i:04d}.csv"
        write_trajectory_csv(p, outcomes[i].trajectory, header_comment)
        paths.append(p)
    return paths


def write_pr_csv(path, table: PRTable, header_comment: str = "") -> None:
    with open(path, "w", newline="") as f:
        _comment(f, header_comment)
        w = csv.writer(f)
        w.writerow(("prob_threshold", "precision_mean", "precision_std", "recall_mean",
                    "recall_std"))
        for k, t in enumerate(table.prob_thresholds):
            w.writerow([repr(float(t)), repr(float(table.precision_mean[k])),
                        repr(float(table.precision_std[k])), repr(float(table.recall_mean[k])),
                        repr(float(table.recall_std[k]))])


def write_pixel_summary_csv(path, scores: PixelScores, mean_ap: float,
                            header_comment: str = "") -> None:
    with open(path, "w", newline="") as f:
        _comment(f, header_comment)
        w = csv.writer(f)
        w.writerow(("pixel_accuracy", "jaccard_fs", "jaccard_obstacle", "mean_average_precision"))
        w.writerow([repr(scores.pixel_accuracy), repr(scores.jaccard_fs),
                    repr(scores.jaccard_obstacle), repr(mean_ap)])
