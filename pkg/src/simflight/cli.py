"""Command-line entry point: ``simflight <subcommand> ...``.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from importlib import resources
from pathlib import Path


from . import evaluation as ev
from . import experiments, procgen, qnet, trainer
from .config import RunConfig, config_hash, load_config, save_config
from .errors import ConfigError, SimflightError
from .policies import POLICY_NAMES, make_policy, train_lrs
from .render import (CameraPose, freespace_labels, render, write_depth, write_ppm)
from .scene import load_scene, save_scene

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def smoke_scene_path() -> Path:
    return Path(str(resources.files("simflight") / "data" / "smoke_scene.json"))


def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig().validate()


def _run_dir(cfg: RunConfig, out, default_leaf: str) -> Path:
    d = Path(out) if out else Path(cfg.run_root) / config_hash(cfg) / default_leaf
    d.mkdir(parents=True, exist_ok=True)
    return d


def _stamp(cfg: RunConfig) -> str:
    return f"config_hash: {config_hash(cfg)}"


def _write_provenance(cfg: RunConfig, directory: Path) -> None:
    save_config(cfg, directory / "config.json")
    (directory / "config_hash.txt").write_text(config_hash(cfg) + "\n")


def _scene_list(directory, which: str) -> list:
    d = Path(directory) / which
    files = sorted(d.glob("scene_*.json"))
    if not files:
        raise ConfigError(f"no scenes under {d}")
    return [load_scene(f) for f in files]


def _split_scenes(cfg: RunConfig, scenes_dir):
    """(train, test) scenes from a ``gen`` output directory, or generated on the fly."""
    if scenes_dir:
        return _scene_list(scenes_dir, "train"), _scene_list(scenes_dir, "test")
    split = procgen.evaluation_split(cfg.gen, cfg.split.scenes_per_template,
                                     cfg.split.test_furnish)
    return list(split.train), list(split.test)


# -- subcommands ----------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _config(args)
    out = _run_dir(cfg, args.out, "scenes")
    split = procgen.evaluation_split(cfg.gen, cfg.split.scenes_per_template,
                                     cfg.split.test_furnish)
    for which, scenes in (("train", split.train), ("test", split.test)):
        (out / which).mkdir(exist_ok=True)
        for i, s in enumerate(scenes):
            save_scene(s, out / which / f"scene_{i:03d}.json")
    _write_provenance(cfg, out)
    print(f"wrote {len(split.train)} training and {len(split.test)} test scenes to {out}")
    return EXIT_OK


def _parse_pose(text: str) -> CameraPose:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad pose {text!r}") from exc
    if len(vals) not in (4, 5):
        raise ConfigError("pose is x,y,z,yaw_deg[,pitch_deg]")
    pitch = math.radians(vals[4]) if len(vals) == 5 else 0.0
    return CameraPose(vals[:3], math.radians(vals[3]), pitch)


def _load_scene_arg(text: str):
    return load_scene(smoke_scene_path() if text == "smoke" else text)


def cmd_render(args) -> int:
    cfg = _config(args)
    scene = _load_scene_arg(args.scene)
    if args.pose:
        pose = _parse_pose(args.pose)
    else:
        pose = procgen.sample_camera_pose(scene, args.seed)
    grid = cfg.grid_spec()
    rgb, depth = render(scene, pose, grid.intrinsics)
    write_ppm(args.out, rgb)
    if args.depth:
        write_depth(args.depth, depth)
    if args.labels:
        lab = freespace_labels(scene, pose, grid.intrinsics, grid.M)
        with open(args.labels, "w", newline="") as f:
            f.write(f"# {_stamp(cfg)}\n")
            csv.writer(f).writerows(lab.tolist())
    print(f"rendered {args.out} from pose {pose.position} yaw {math.degrees(pose.yaw):.1f} deg")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    tc = cfg.train_config()
    out = Path(args.out) if args.out else _run_dir(cfg, None, "pretrain") / (
        "lrs.ckpt" if args.model == "lrs" else "freespace.ckpt")
    out.parent.mkdir(parents=True, exist_ok=True)
    train, _ = _split_scenes(cfg, args.scenes)
    losses = []

    def log(epoch, value):
        losses.append((epoch, value))
        print(f"epoch {epoch}: loss {value:.6f}")

    if args.model == "lrs":
        params = train_lrs(train, cfg.lrs_config(), tc.grid, log=log)
    else:
        data = trainer.make_pretrain_dataset(train, tc.n_pretrain_images, tc.grid, tc.seed,
                                             rerandomize=tc.rerandomize, workers=args.workers)
        params = trainer.pretrain(qnet.init_params(tc.arch(), tc.seed), data, tc, log=log)
    qnet.save_checkpoint(params, out)
    with open(out.with_suffix(".log.csv"), "w", newline="") as f:
        f.write(f"# {_stamp(cfg)}\n")
        w = csv.writer(f)
        w.writerow(("epoch", "loss"))
        w.writerows([(e, repr(v)) for e, v in losses])
    print(f"checkpoint written to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    tc = cfg.train_config()
    out = _run_dir(cfg, args.out, "train")
    train, _ = _split_scenes(cfg, args.scenes)
    params = qnet.load_checkpoint(args.init, expected_arch=tc.arch())
    params, metrics = trainer.cadrl_train(
        tc, train, params, out_dir=out, workers=args.workers,
        log=lambda r: print(f"iteration {r['iteration']}: mean return {r['mean_return']:.4f}, "
                            f"loss {r['loss']:.4f}"))
    qnet.save_checkpoint(params, out / "final.ckpt")
    trainer.write_metrics_csv(out / "metrics.csv", metrics, _stamp(cfg))
    _write_provenance(cfg, out)
    print(f"final checkpoint written to {out / 'final.ckpt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    grid = cfg.grid_spec()
    e = cfg.eval
    if args.scene:
        scenes = [_load_scene_arg(args.scene)]
    else:
        _, scenes = _split_scenes(cfg, args.scenes)
        if e.n_scenes is not None:
            scenes = scenes[:e.n_scenes]
    params = None
    if args.policy in ("cadrl", "fspred", "lrs"):
        if not args.checkpoint:
            raise ConfigError(f"--policy {args.policy} needs --checkpoint")
        expected = None
        if args.policy != "lrs":
            expected = cfg.train_config().arch()
        params = qnet.load_checkpoint(args.checkpoint, expected_arch=expected)
    policy = make_policy(args.policy, params)
    trials = ev.make_trials(scenes, e.n_init_points, e.seed, e.max_steps, e.speed, cfg.reward)
    outcomes = ev.run_trials(scenes, policy, trials, grid, cfg.reward,
                             record=e.record_trajectories, workers=args.workers)
    out = _run_dir(cfg, args.out, f"eval_{args.policy}")
    stamp = _stamp(cfg)
    ev.write_outcomes_csv(out / "outcomes.csv", trials, outcomes, stamp)
    ev.write_survival_csv(out / "survival.csv", ev.survival_curve(outcomes), stamp)
    if e.record_trajectories:
        top = args.top_n if args.top_n is not None else e.top_n
        ev.write_trajectories(out / "trajectories", outcomes, top, stamp)
    _write_provenance(cfg, out)
    print(f"{args.policy}: mean collision-free distance {ev.mean_distance(outcomes):.2f} m "
          f"over {len(outcomes)} trials; results in {out}")
    return EXIT_OK


def cmd_fseval(args) -> int:
    cfg = _config(args)
    tc = cfg.train_config()
    _, scenes = _split_scenes(cfg, args.scenes)
    params = qnet.load_checkpoint(args.checkpoint, expected_arch=tc.arch())
    data = experiments.heldout_freespace_set(scenes, cfg.fseval.n_images, tc.grid,
                                             cfg.fseval.seed, workers=args.workers)
    rep = experiments.score_freespace(params, data)
    out = _run_dir(cfg, args.out, "fseval")
    stamp = _stamp(cfg)
    ev.write_pr_csv(out / "pr.csv", rep.pr, stamp)
    ev.write_pixel_summary_csv(out / "pixel_summary.csv",
                               ev.PixelScores(rep.pixel_accuracy, rep.jaccard_fs,
                                              rep.jaccard_obstacle), rep.mean_ap, stamp)
    _write_provenance(cfg, out)
    print(json.dumps({"pixel_accuracy": rep.pixel_accuracy, "jaccard_fs": rep.jaccard_fs,
                      "jaccard_obstacle": rep.jaccard_obstacle, "mean_ap": rep.mean_ap}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="simflight", description="Randomized hallway flight simulator, "
                "collision-avoidance training and evaluation.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, workers=True):
        sp.add_argument("--config", help="JSON run configuration (defaults if omitted)")
        if workers:
            sp.add_argument("--workers", type=int, default=1,
                            help="worker processes; results do not depend on this")

    g = sub.add_parser("gen", help="generate training and held-out scenes")
    common(g, workers=False)
    g.add_argument("--out", help="output directory (default: run directory)")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("render", help="render one view of a scene")
    common(r, workers=False)
    r.add_argument("--scene", required=True, help="scene JSON, or 'smoke' for the packaged one")
    r.add_argument("--pose", help="x,y,z,yaw_deg[,pitch_deg]; random free pose if omitted")
    r.add_argument("--seed", type=int, default=0, help="seed for the random pose")
    r.add_argument("--out", required=True, help="output PPM image")
    r.add_argument("--depth", help="also write the range map here")
    r.add_argument("--labels", help="also write the free-space bin grid (CSV) here")
    r.set_defaults(func=cmd_render)

    pt = sub.add_parser("pretrain", help="train the free-space net (or the LRS classifier)")
    common(pt)
    pt.add_argument("--scenes", help="directory written by 'gen' (generated if omitted)")
    pt.add_argument("--model", choices=("freespace", "lrs"), default="freespace")
    pt.add_argument("--out", help="checkpoint path")
    pt.set_defaults(func=cmd_pretrain)

    t = sub.add_parser("train", help="Monte Carlo Q-target training from a pretrained net")
    common(t)
    t.add_argument("--scenes", help="directory written by 'gen' (generated if omitted)")
    t.add_argument("--init", required=True, help="pretrained checkpoint")
    t.add_argument("--out", help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="fly episodes from fixed init points, write survival CSVs")
    common(e)
    e.add_argument("--policy", required=True, choices=POLICY_NAMES)
    e.add_argument("--checkpoint", help="network checkpoint for cadrl, fspred and lrs")
    e.add_argument("--scenes", help="directory written by 'gen'; held-out scenes are used")
    e.add_argument("--scene", help="single scene JSON, or 'smoke' for the packaged one")
    e.add_argument("--top-n", type=int, help="only write trajectories of the N longest flights")
    e.add_argument("--out", help="output directory")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("fseval", help="free-space precision/recall and pixel accuracy")
    common(f)
    f.add_argument("--scenes", help="directory written by 'gen'; held-out scenes are used")
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--out", help="output directory")
    f.set_defaults(func=cmd_fseval)
    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimflightError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
