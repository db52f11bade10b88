"""How far boosted trees with the pinned settings can go on product-peak.

Trains on uniform-random and full-grid databases of growing size and reports
held-out mean R^2, to show where the regressor itself saturates.

    python scripts/trees_ceiling.py [--sizes 100 300 1000 3000] [--dims 2 3 4]
"""

import argparse

import numpy as np

from aldb.core import ParameterSpace, Strategy
from aldb.downstream import RegressorKind, evaluate, train
from aldb.harness import heldout_set
from aldb.oracles import synthetic_oracle
from aldb.samplers import build_ubd_inputs, label


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="*", default=[100, 300, 1000, 3000])
    ap.add_argument("--dims", type=int, nargs="*", default=[2, 3, 4])
    ap.add_argument("--test-size", type=int, default=500)
    args = ap.parse_args()
    for d in args.dims:
        space = ParameterSpace.unit(d)
        oracle = synthetic_oracle("product-peak", d)
        test = heldout_set(space, oracle, args.test_size, seed=0)
        for n in args.sizes:
            rand = label(space, np.random.default_rng(n).random((n, d)), oracle, Strategy.URBD)
            grid = label(space, build_ubd_inputs(space, n), oracle, Strategy.UBD)
            r = [evaluate(train(RegressorKind.TREES, ds), test).r2_mean for ds in (rand, grid)]
            print(f"d={d} N={n:5d}  random {r[0]:.3f}  grid {r[1]:.3f}")


if __name__ == "__main__":
    main()
