"""Train the toy set with AMP on and off and compare test accuracy.

Also reruns the full-precision model to confirm bit-identical results.
"""

import argparse
import hashlib
import json
import time

from adgsyn.config import ModelConfig, RunConfig, TrainConfig
from adgsyn.synthetic import toy_triplets
from adgsyn.trainer import fit


def run_once(amp, epochs, seed, n, genes):
    triplets, raw = toy_triplets(n=n, seed=seed, n_genes=genes)
    run = RunConfig(model=ModelConfig(cell_dim=genes),
                    train=TrainConfig(epochs=epochs, folds=1, amp=amp, seed=seed)).validate()
    t0 = time.perf_counter()
    res = fit(run, triplets, raw)
    fold = res.folds[0]
    history = [{k: v for k, v in row.items() if k != "seconds"} for row in fold.history]
    digest = hashlib.sha256(json.dumps(history, sort_keys=True).encode()).hexdigest()
    return {"amp": amp, "test_acc": fold.test.acc, "train_acc": fold.train_acc,
            "best_epoch": fold.best_epoch, "history_sha": digest, "seconds": time.perf_counter() - t0}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--genes", type=int, default=954)
    args = p.parse_args()
    rows = [run_once(amp, args.epochs, args.seed, args.n, args.genes) for amp in (True, False, False)]
    for r in rows:
        print(json.dumps(r))
    print("acc gap", abs(rows[0]["test_acc"] - rows[1]["test_acc"]),
          "fp32 deterministic", rows[1]["history_sha"] == rows[2]["history_sha"])


if __name__ == "__main__":
    main()
