"""Held-out mean AP of free-space nets trained with full appearance randomization,
fixed textures on all nine training floorplans, and fixed textures on three.

    python3 scripts/randomization_ablation.py --out runs/ablation
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
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--full-checkpoint", help="reuse a fully randomized free-space net")
    ap.add_argument("--images", type=int, default=5000)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--heldout", type=int, default=500)
    ap.add_argument("--spt", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    a = ap.parse_args(argv)

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    cfg = trainer.TrainConfig(n_pretrain_images=a.images, pretrain_epochs=a.epochs, seed=a.seed)
    gen = procgen.GenConfig(seed=a.seed)
    split = procgen.evaluation_split(gen, a.spt)
    held = X.heldout_freespace_set(split.test, a.heldout, cfg.grid, seed=99, workers=a.workers)
    full = qnet.load_checkpoint(a.full_checkpoint, cfg.arch()) if a.full_checkpoint else None
    res = X.randomization_ablation(gen, cfg, a.spt, held, full, workers=a.workers)
    for name, rep in res.items():
        ev.write_pr_csv(out / f"pr_{name}.csv", rep.pr)
    summary = {k: {"mean_ap": r.mean_ap, "pixel_accuracy": r.pixel_accuracy,
                   "jaccard_obstacle": r.jaccard_obstacle} for k, r in res.items()}
    summary["seconds"] = time.time() - t0
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    print(json.dumps(summary, indent=1))
    print("full > ft9 and full > ft3:",
          res["full"].mean_ap > res["ft9"].mean_ap and res["full"].mean_ap > res["ft3"].mean_ap)


if __name__ == "__main__":
    main()
