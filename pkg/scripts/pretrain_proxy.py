"""Train the free-space net on randomized renders and score it on held-out
floorplans re-textured from the held-out texture pool.

    python3 scripts/pretrain_proxy.py --out runs/pretrain_proxy
"""

import argparse
import json
import time
from pathlib import Path

from simflight import experiments as X
from simflight import procgen, qnet, trainer


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/pretrain_proxy")
    ap.add_argument("--images", type=int, default=5000)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--heldout", type=int, default=500)
    ap.add_argument("--spt", type=int, default=2, help="training scenes per template")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    a = ap.parse_args(argv)

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    cfg = trainer.TrainConfig(n_pretrain_images=a.images, pretrain_epochs=a.epochs, seed=a.seed)
    split = procgen.evaluation_split(procgen.GenConfig(seed=a.seed), a.spt)
    params = X.train_freespace(split.train, cfg, workers=a.workers,
                               log=lambda e, v: print(f"epoch {e}: loss {v:.4f}", flush=True))
    qnet.save_checkpoint(params, out / "freespace.ckpt")
    held = X.heldout_freespace_set(split.test, a.heldout, cfg.grid, seed=99, workers=a.workers)
    rep = X.score_freespace(params, held)
    summary = {"pixel_accuracy": rep.pixel_accuracy, "jaccard_fs": rep.jaccard_fs,
               "jaccard_obstacle": rep.jaccard_obstacle, "mean_ap": rep.mean_ap,
               "majority_accuracy": rep.majority_accuracy, "seconds": time.time() - t0}
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    print(json.dumps(summary, indent=1))


if __name__ == "__main__":
    main()
