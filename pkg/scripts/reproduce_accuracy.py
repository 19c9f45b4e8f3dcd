#!/usr/bin/env python3
"""Multi-seed test accuracy for one dataset/mode pair.

Retrains from scratch for every seed with the published per-dataset
hyperparameters and reports mean and standard deviation over seeds.

    python3 scripts/reproduce_accuracy.py --dataset data/cora --mode gain
    python3 scripts/reproduce_accuracy.py --dataset data/citeseer --mode again --seeds 0-9
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from again.cli import _obtain_split, load_dataset
from again.evaluation import evaluate_accuracy
from again.training import MODES, default_train_config, train


def parse_seeds(spec: str) -> list[int]:
    if "-" in spec:
        lo, hi = spec.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in spec.split(",")]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", required=True, help="dataset directory or name")
    ap.add_argument("--mode", choices=MODES, default="again")
    ap.add_argument("--n", type=int, default=20, help="labeled nodes per class")
    ap.add_argument("--seeds", default="0-9", help="e.g. 0-9 or 0,3,7")
    ap.add_argument("--epochs", type=int, default=None)
    args = ap.parse_args()

    name = Path(args.dataset).name.lower()
    cfg0 = default_train_config(name, args.n, args.mode)
    g, split_path, _ = load_dataset(args.dataset)
    split = _obtain_split(g, split_path, cfg0)

    accs = []
    for seed in parse_seeds(args.seeds):
        cfg = default_train_config(name, args.n, args.mode, seed=seed)
        if args.epochs is not None:
            cfg.max_epochs = args.epochs
        started = time.perf_counter()
        params, _ = train(g, split, cfg)
        acc = evaluate_accuracy(g, split, params, cfg, seed=seed)
        accs.append(acc)
        print(f"seed {seed}: {acc:.4f}  ({time.perf_counter() - started:.0f}s)", flush=True)

    arr = np.array(accs)
    print(f"{name} {args.mode} n={args.n}: {100 * arr.mean():.1f} +/- {100 * arr.std():.1f} "
          f"over {len(arr)} seeds")
    return 0


if __name__ == "__main__":
    sys.exit(main())
