"""Command-line interface: run sweeps to CSV (optionally with a rendered
figure), replot existing results, and run the built-in invariant suite."""

import argparse
import sys
from pathlib import Path

from .config import parse_config_file, parse_snr_grid, with_overrides
from .harness import emit_csv, read_csv, run_sweep
from .plotting import render_ber_figure


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="smsim",
        description="Monte Carlo link simulator for the SM-MIMO uplink",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a BER sweep and write CSV results")
    run.add_argument("--config", required=True, help="key = value config file")
    run.add_argument("--snr-db", help="override grid: start:step:stop or comma list")
    run.add_argument("--trials", type=int, help="override trial count")
    run.add_argument("--seed", type=int, help="override base seed")
    run.add_argument("--out", default="results.csv", help="output CSV path")
    run.add_argument("--detectors", help="override detector list (comma separated)")
    run.add_argument("--workers", type=int, default=1,
                     help="worker processes for the trial loop")
    run.add_argument("--plot", action="store_true",
                     help="render a BER figure next to the CSV")

    plot = sub.add_parser("plot", help="render a BER figure from an existing CSV")
    plot.add_argument("csv", help="results CSV produced by 'smsim run'")
    plot.add_argument("--out", help="output image path (default: CSV stem + .png)")

    selftest = sub.add_parser("selftest", help="run the invariant suite")
    selftest.add_argument("--full", action="store_true",
                          help="include slower statistical ordering checks")
    return parser


def _cmd_run(args):
    config = parse_config_file(args.config)
    config = with_overrides(
        config,
        snr_grid_db=parse_snr_grid(args.snr_db) if args.snr_db else None,
        trials=args.trials,
        seed=args.seed,
        detectors=tuple(args.detectors.split(",")) if args.detectors else None,
    )
    records = run_sweep(config, workers=args.workers)
    emit_csv(records, args.out)
    for r in records:
        if r.note:
            print(f"warning: {r.detector} skipped at {r.snr_db:g} dB: {r.note}",
                  file=sys.stderr)
        print(f"snr={r.snr_db:g} dB  {r.detector:>6}  ber={r.ber:.4e}  "
              f"({r.total_bit_errors}/{r.total_bits} bits, {r.trials} trials)")
    print(f"wrote {args.out}")
    if args.plot:
        figure = Path(args.out).with_suffix(".png")
        render_ber_figure(records, figure)
        print(f"wrote {figure}")
    return 0


def _cmd_plot(args):
    records = read_csv(args.csv)
    out = args.out or str(Path(args.csv).with_suffix(".png"))
    render_ber_figure(records, out)
    print(f"wrote {out}")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "plot":
        return _cmd_plot(args)
    from .selftest import run_selftest
    return run_selftest(full=args.full)


if __name__ == "__main__":
    raise SystemExit(main())
