"""Run gen -> pretrain -> train -> eval twice with one worker and once with four,
and compare every CSV byte for byte.

    python3 scripts/determinism.py --out runs/determinism
"""

import argparse
import json
from pathlib import Path

from simflight.experiments import run_pipeline, small_pipeline_config


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/determinism")
    a = ap.parse_args(argv)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = out / "config.json"
    cfg.write_text(json.dumps(small_pipeline_config(str(out / "runs"))))
    runs = {name: run_pipeline(cfg, out / name, w) for name, w in
            (("w1a", 1), ("w1b", 1), ("w4", 4))}
    ref = runs["w1a"]
    for name, files in runs.items():
        same = files == ref
        print(f"{name}: {len(files)} CSV files, identical to w1a: {same}")
        if not same:
            for k in sorted(set(files) | set(ref)):
                if files.get(k) != ref.get(k):
                    print("  differs:", k)


if __name__ == "__main__":
    main()
