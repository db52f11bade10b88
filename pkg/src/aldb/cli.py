"""Command line entry point: ``aldb {build,eval,sweep,efficiency,plot}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness, plots
from .core import AldbError, Strategy, load_dataset, save_dataset
from .downstream import RegressorKind, evaluate, train
from .harness import ConfigError
from .oracles import BraggOracle, make_oracle, write_spectrum_csv
from .samplers import build_dataset

log = logging.getLogger("aldb")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _cmd_build(args) -> int:
    cfg = harness.load_config(args.config)
    space = cfg.space
    oracle = make_oracle(cfg.oracle, space, cfg.bragg)
    strategy = Strategy.parse(args.strategy)
    ds = build_dataset(strategy, space, args.n, oracle, args.seed, cfg.bbd_config(args.seed))
    out = Path(args.out) / f"{strategy.value.lower()}_n{args.n}_s{args.seed}.csv"
    save_dataset(ds, out)
    if args.dump_spectra:
        if not isinstance(oracle, BraggOracle):
            raise ConfigError("--dump-spectra needs the bragg oracle")
        for i, x in enumerate(ds.X):
            write_spectrum_csv(oracle.spectrum(x), Path(args.out) / "spectra" / f"{out.stem}_{i:04d}.csv")
    print(out)
    return EXIT_OK


def _cmd_eval(args) -> int:
    tr = load_dataset(args.train)
    if args.test.startswith("heldout:"):
        if args.config is None:
            raise ConfigError("a held-out test set needs --config to know the oracle")
        cfg = harness.load_config(args.config)
        size = int(args.test.split(":", 1)[1])
        test = harness.heldout_set(tr.space, make_oracle(cfg.oracle, tr.space, cfg.bragg), size, args.seed)
    else:
        test = load_dataset(args.test)
    model = train(RegressorKind(args.regressor), tr)
    rep = evaluate(model, test, train_size=len(tr), strategy=tr.strategy, seed=tr.seed)
    text = harness.results_csv_text([rep])
    if args.results:
        path = Path(args.results)
        if path.exists() and path.stat().st_size:
            with path.open("a", encoding="utf-8") as fh:
                fh.write(text.split("\n", 1)[1])
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _efficiency_reports(results: list[harness.ExperimentResult], target: float) -> list[harness.EfficiencyReport]:
    out = []
    for res in results:
        rows = harness.as_rows(res.reports)
        kinds = [k for k in harness.REGRESSOR_ORDER if any(r.regressor is k for r in rows)]
        strategies = {r.strategy for r in rows}
        if not kinds or strategies != set(harness.STRATEGY_ORDER):
            continue
        kind = RegressorKind.TREES if RegressorKind.TREES in kinds else kinds[0]
        out.append(harness.efficiency_from_results(rows, target, res.dimension, kind))
    return out


def _cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    results = harness.run_experiment(cfg)
    effs = _efficiency_reports(results, cfg.target)
    for res in results:
        suffix = "" if cfg.dimensions is None else f"_d{res.dimension}"
        plots.emit_plots(res.reports, cfg.output_dir, suffix=suffix)
        print(res.path)
    if effs:
        print(harness.write_efficiency(effs, cfg.output_dir / "efficiency.csv"))
        plots.efficiency_chart(effs, cfg.output_dir / "efficiency.svg")
    return EXIT_OK


def _cmd_efficiency(args) -> int:
    cfg = harness.load_config(args.config)
    results = harness.cached_results(cfg) or harness.run_experiment(cfg)
    effs = _efficiency_reports(results, args.target)
    if not effs:
        raise ConfigError("efficiency needs UBD, URBD and BBD in the strategy list")
    path = harness.write_efficiency(effs, cfg.output_dir / "efficiency.csv")
    plots.efficiency_chart(effs, cfg.output_dir / "efficiency.svg")
    sys.stdout.write(harness.efficiency_csv_text(effs))
    log.info("wrote %s", path)
    return EXIT_OK


def _cmd_plot(args) -> int:
    results = []
    for i, f in enumerate(args.results):
        meta = harness.read_results_meta(f)
        dim = int(meta.get("dimension", i + 1))
        results.append(harness.ExperimentResult(dim, harness.read_results(f), Path(f)))
    for res in results:
        suffix = "" if len(results) == 1 else f"_d{res.dimension}"
        for p in plots.emit_plots(res.reports, args.out, suffix=suffix):
            print(p)
    effs = _efficiency_reports(results, args.target)
    if effs:
        print(plots.efficiency_chart(effs, Path(args.out) / "efficiency.svg"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aldb", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build and label one database")
    b.add_argument("--strategy", required=True, choices=["ubd", "urbd", "bbd"], type=str.lower)
    b.add_argument("--n", required=True, type=int)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--dump-spectra", action="store_true", help="write each bragg spectrum as CSV")
    b.set_defaults(func=_cmd_build)

    e = sub.add_parser("eval", help="train on one database and test on another")
    e.add_argument("--train", required=True)
    e.add_argument("--test", required=True, help="dataset CSV or heldout:K")
    e.add_argument("--regressor", required=True, choices=[k.value for k in RegressorKind])
    e.add_argument("--config", help="needed for heldout:K")
    e.add_argument("--seed", type=int, default=0, help="held-out set seed")
    e.add_argument("--results", help="append the result row to this CSV")
    e.set_defaults(func=_cmd_eval)

    s = sub.add_parser("sweep", help="run every configured cell")
    s.add_argument("--config", required=True)
    s.set_defaults(func=_cmd_sweep)

    f = sub.add_parser("efficiency", help="points-to-target ratios against BBD")
    f.add_argument("--config", required=True)
    f.add_argument("--target", type=float, default=0.97)
    f.set_defaults(func=_cmd_efficiency)

    g = sub.add_parser("plot", help="render SVG charts from results CSVs")
    g.add_argument("--results", required=True, nargs="+")
    g.add_argument("--out", required=True)
    g.add_argument("--target", type=float, default=0.97)
    g.set_defaults(func=_cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AldbError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
