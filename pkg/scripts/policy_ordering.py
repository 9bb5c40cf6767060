"""Pretrain the free-space net, fine-tune it with Monte Carlo Q-targets, and fly
every policy from the same init points in the held-out hallways.

    python3 scripts/policy_ordering.py --out runs/policy_ordering
"""

import argparse
import json
import time
from pathlib import Path

from simflight import evaluation as ev
from simflight import experiments as X
from simflight import procgen, qnet, trainer


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/policy_ordering")
    ap.add_argument("--fs-checkpoint", help="reuse a pretrained free-space net")
    ap.add_argument("--cadrl-checkpoint", help="skip RL and use this net")
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--max-steps", type=int, default=1000)
    ap.add_argument("--rl-iterations", type=int, default=3)
    ap.add_argument("--states", type=int, default=200)
    ap.add_argument("--spt", type=int, default=2, help="training scenes per template")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    a = ap.parse_args(argv)

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    cfg = trainer.TrainConfig(n_rl_iterations=a.rl_iterations, states_per_iteration=a.states,
                              seed=a.seed)
    gen = procgen.GenConfig(seed=a.seed)
    split = procgen.evaluation_split(gen, a.spt, test_furnish=True)
    hallways = [next(s for s in split.test if s.meta["template_id"] == t)
                for t in split.test_templates]

    if a.fs_checkpoint:
        fs = qnet.load_checkpoint(a.fs_checkpoint, cfg.arch())
    else:
        fs = X.train_freespace(split.train, cfg, workers=a.workers,
                               log=lambda e, l: print(f"pretrain epoch {e} loss {l:.4f}", flush=True))
        qnet.save_checkpoint(fs, out / "freespace.ckpt")
    print(f"free-space net ready ({time.time() - t0:.0f} s)", flush=True)

    if a.cadrl_checkpoint:
        rl = qnet.load_checkpoint(a.cadrl_checkpoint, cfg.arch())
    else:
        rl, rows = trainer.cadrl_train(cfg, split.train, fs, out_dir=out, workers=a.workers,
                                       log=lambda r: print(r, flush=True))
        trainer.write_metrics_csv(out / "metrics.csv", rows)
        qnet.save_checkpoint(rl, out / "cadrl.ckpt")
    print(f"rl done ({time.time() - t0:.0f} s)", flush=True)

    trials = ev.make_trials(hallways, a.trials, a.seed, max_steps=a.max_steps,
                            speed=cfg.reward.speed, reward=cfg.reward)
    runs = X.compare_policies(X.build_policies(fs, rl), hallways, trials, cfg.grid, cfg.reward,
                              workers=a.workers, log=lambda m: print(m, flush=True))
    for name, run in runs.items():
        ev.write_survival_csv(out / f"survival_{name}.csv", run.curve)
    summary = {k: r.mean_distance for k, r in runs.items()}
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    m = summary
    print("cadrl > fspred > straight:", m["cadrl"] > m["fspred"] > m["straight"])
    print("fsgt >= fspred:", m["fsgt"] >= m["fspred"])
    print(f"total {time.time() - t0:.0f} s")


if __name__ == "__main__":
    main()
