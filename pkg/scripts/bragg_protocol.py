"""Cross-database protocol on the six-parameter grating surrogate.

Trains each regressor on one database and tests it on the partner database
of equal size (BBD against URBD, UBD against BBD), then prints the curves.

    python scripts/bragg_protocol.py [--config configs/bragg_cross.yaml]
"""

import argparse
from pathlib import Path

from aldb import harness, plots
from aldb.harness import learning_curve

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "bragg_cross.yaml")
    args = ap.parse_args()
    cfg = harness.load_config(args.config)
    (res,) = harness.run_experiment(cfg)
    plots.emit_plots(res.reports, cfg.output_dir)
    for kind in cfg.regressors:
        print(f"\n{kind.value}: mean R^2 on the partner database")
        for s in cfg.strategies:
            c = learning_curve(res.reports, s, kind)
            print(f"  {s.value:5s} (tested on {harness.CROSS_PARTNER[s].value:4s}) "
                  + "  ".join(f"{n}:{v:.3f}" for n, v in c.points()))
    print(f"\nwrote {res.path}")


if __name__ == "__main__":
    main()
