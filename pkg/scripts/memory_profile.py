"""Peak activation bytes of one training step with AMP on and off.

Sweeps batch sizes on the synthetic dataset and prints the reduction ratio.
"""

import argparse

from adgsyn.config import ModelConfig, RunConfig, TrainConfig
from adgsyn.data import ExpressionScaler
from adgsyn.synthetic import toy_triplets
from adgsyn.trainer import profile_step


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--batch-sizes", type=int, nargs="+", default=[16, 64, 128])
    p.add_argument("--genes", type=int, default=954)
    p.add_argument("--graph-layer", choices=("gat", "gcn"), default="gat")
    args = p.parse_args()
    triplets, raw = toy_triplets(n=max(args.batch_sizes), n_genes=args.genes)
    profiles = ExpressionScaler().fit(raw).transform(raw)
    print(f"{'batch':>6} {'fp32 MiB':>10} {'amp MiB':>10} {'reduction':>10}")
    for b in args.batch_sizes:
        peak = {}
        for amp in (False, True):
            run = RunConfig(model=ModelConfig(cell_dim=args.genes, graph_layer=args.graph_layer),
                            train=TrainConfig(amp=amp, batch_size=b)).validate()
            peak[amp] = profile_step(run, triplets, profiles)["peak_bytes"]
        print(f"{b:>6} {peak[False] / 2**20:>10.2f} {peak[True] / 2**20:>10.2f} {1 - peak[True] / peak[False]:>10.3f}")


if __name__ == "__main__":
    main()
