"""Relative sample efficiency of BBD against the grid baselines, per dimension.

Runs (or reuses) the sweep in configs/efficiency.yaml and prints the
points-to-target table for the configured target and a few lower ones.

    python scripts/efficiency_vs_dimension.py [--config FILE] [--targets 0.8 0.9 0.95]
"""

import argparse
from pathlib import Path

from aldb import harness, plots
from aldb.harness import learning_curve

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "efficiency.yaml")
    ap.add_argument("--targets", type=float, nargs="*")
    ap.add_argument("--rerun", action="store_true", help="ignore results already on disk")
    args = ap.parse_args()

    cfg = harness.load_config(args.config)
    results = None if args.rerun else harness.cached_results(cfg)
    if results is None:
        results = harness.run_experiment(cfg)

    for res in results:
        print(f"\nd = {res.dimension}: mean R^2 over {len(cfg.seeds)} seeds")
        for s in harness.STRATEGY_ORDER:
            c = learning_curve(res.reports, s, "trees")
            print(f"  {s.value:5s} " + "  ".join(f"{n}:{v:.3f}" for n, v in c.points()))

    targets = args.targets or sorted({0.8, 0.9, cfg.target})
    for t in targets:
        reports = [harness.efficiency_from_results(r.reports, t, r.dimension) for r in results]
        print(f"\ntarget R^2 >= {t}")
        print(harness.efficiency_csv_text(reports), end="")
        if t == cfg.target:
            plots.efficiency_chart(reports, cfg.output_dir / "efficiency.svg")


if __name__ == "__main__":
    main()
