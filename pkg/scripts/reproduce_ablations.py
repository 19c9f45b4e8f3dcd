#!/usr/bin/env python3
"""Aggregator ablation on one dataset: attention vs mean vs features-only.

Trains all three variants over the same seeds and prints a small table, the
attention/mean gap and the margin over the features-only baseline.

    python3 scripts/reproduce_ablations.py --dataset data/cora
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from again.cli import _obtain_split, load_dataset
from again.evaluation import evaluate_accuracy
from again.training import default_train_config, train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", required=True)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--seeds", type=int, default=10, help="number of seeds (0..k-1)")
    args = ap.parse_args()

    name = Path(args.dataset).name.lower()
    g, split_path, _ = load_dataset(args.dataset)
    split = _obtain_split(g, split_path, default_train_config(name, args.n, "gain"))

    means = {}
    for mode in ("mlp", "gs-mean", "gain"):
        accs = []
        for seed in range(args.seeds):
            cfg = default_train_config(name, args.n, mode, seed=seed)
            params, _ = train(g, split, cfg)
            accs.append(evaluate_accuracy(g, split, params, cfg, seed=seed))
        means[mode] = 100 * float(np.mean(accs))
        print(f"{mode:8s} {means[mode]:.1f} +/- {100 * float(np.std(accs)):.1f}", flush=True)

    print(f"attention - mean aggregation: {means['gain'] - means['gs-mean']:+.1f}")
    print(f"attention - features-only:    {means['gain'] - means['mlp']:+.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
