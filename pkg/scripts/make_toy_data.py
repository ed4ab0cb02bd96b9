"""Write a synthetic triplet table and expression matrix with a separable labeling rule.

A triplet is synergistic exactly when its cell line is in the responsive
group, so any working model should reach full training accuracy.
"""

import argparse
import json

from adgsyn.config import ModelConfig, RunConfig, TrainConfig
from adgsyn.synthetic import write_toy_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out", help="output directory")
    p.add_argument("--n", type=int, default=64, help="labeled triplets")
    p.add_argument("--excluded", type=int, default=8, help="extra rows inside the [0, 10] band")
    p.add_argument("--genes", type=int, default=954)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200, help="epochs written into the sample config")
    args = p.parse_args()
    paths = write_toy_dataset(args.out, n=args.n, seed=args.seed, n_genes=args.genes, n_excluded=args.excluded)
    run = RunConfig(triplets=str(paths["triplets"]), expression=str(paths["expression"]),
                    out_dir=f"{args.out}/run", model=ModelConfig(cell_dim=args.genes),
                    train=TrainConfig(epochs=args.epochs, seed=args.seed))
    run.save(f"{args.out}/config.json")
    print(json.dumps({k: str(v) for k, v in paths.items()} | {"config": f"{args.out}/config.json"}))


if __name__ == "__main__":
    main()
