"""Command-line interface.

Subcommands::

    heraldsim simulate --config run.ini --out DIR [--seed N] [--bins N] [--threads N]
    heraldsim sweep    --config run.ini --sweep plan.ini --out DIR [...]
    heraldsim analyze  --counts a.json [b.json ...] [--background bg.json] --out DIR
    heraldsim plot     --report report.json --out figure.svg
    heraldsim bounds energy PULSE_DURATION BIN_WIDTH PULSE_ENERGY THRESHOLD_ENERGY
    heraldsim bounds counts PULSE_DURATION BIN_WIDTH N_1 N_2 DURATION

Exit codes: 0 success; 1 runtime or statistics failure (an estimator ran
out of counts, a file was malformed); 2 configuration error (bad INI,
invalid parameter, bad usage).  All artifacts are deterministic functions
of their inputs — rerunning a command overwrites files with identical
bytes.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import pcsft, report, runner, svgplot
from .coincidence import (accumulate, read_counts_json, write_counts_json,
                          write_segment_csv)
from .core import (ConfigError, ExperimentConfig, config_from_dict,
                   config_to_dict, load_config)
from .streams import write_sparse_csv, write_streams

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heraldsim",
        description="Heralded single-photon source simulator and analyser.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one configuration, write "
                         "click streams and coincidence counts")
    sim.add_argument("--config", required=True, help="experiment INI file")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=None,
                     help="override the configured seed")
    sim.add_argument("--bins", type=int, default=None,
                     help="override the configured number of bins")
    sim.add_argument("--threads", type=int, default=1,
                     help="worker threads (never changes results)")

    swp = sub.add_parser("sweep", help="run an attenuation sweep and "
                         "write per-point counts plus the analysis report")
    swp.add_argument("--config", required=True, help="experiment INI file")
    swp.add_argument("--sweep", required=True, help="sweep plan INI file")
    swp.add_argument("--out", required=True, help="output directory")
    swp.add_argument("--seed", type=int, default=None)
    swp.add_argument("--bins", type=int, default=None,
                     help="override the per-point bin budget")
    swp.add_argument("--threads", type=int, default=1)
    swp.add_argument("--background", default=None,
                     help="counts JSON from a source-off run")

    ana = sub.add_parser("analyze", help="build a report from stored "
                         "counts files")
    ana.add_argument("--counts", required=True, nargs="+",
                     help="counts JSON files, one per sweep point")
    ana.add_argument("--background", default=None,
                     help="counts JSON from a source-off run")
    ana.add_argument("--out", required=True, help="output directory")

    plo = sub.add_parser("plot", help="render a report to SVG")
    plo.add_argument("--report", required=True, help="report JSON file")
    plo.add_argument("--out", required=True, help="output SVG path")

    bnd = sub.add_parser("bounds", help="print a threshold-field ceiling")
    bnd_sub = bnd.add_subparsers(dest="bound_kind", required=True)
    be = bnd_sub.add_parser("energy", help="ceiling from pulse energy")
    for name in ("pulse_duration", "bin_width", "pulse_energy",
                 "threshold_energy"):
        be.add_argument(name, type=float)
    bc = bnd_sub.add_parser("counts", help="ceiling from observed singles")
    for name, kind in (("pulse_duration", float), ("bin_width", float),
                       ("counts_1", int), ("counts_2", int),
                       ("duration", float)):
        bc.add_argument(name, type=kind)
    return parser


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "bins", None) is not None:
        if args.bins < 1:
            raise ConfigError(f"--bins must be >= 1, got {args.bins}")
        cfg = replace(cfg, n_bins=args.bins,
                      segment_bins=min(cfg.segment_bins, args.bins))
    return cfg


def _read_background(path: Optional[str]):
    if path is None:
        return None
    counts, _ = read_counts_json(path)
    return counts


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    streams = runner.simulate_run(cfg, threads=args.threads)
    counts = accumulate(streams, segment_bins=cfg.segment_bins)

    write_streams(streams, out / "streams.pstm")
    write_sparse_csv(streams, out / "clicks.csv")
    write_segment_csv(counts, out / "counts.csv")
    write_counts_json(counts, out / "counts.json",
                      config=config_to_dict(cfg))

    totals = counts.totals()
    print(f"simulated {cfg.n_bins} bins ({counts.duration:.6g} s) "
          f"under {cfg.theory.value}")
    print("  " + "  ".join(f"{k}={totals[k]}" for k in
                           ("N_H", "N_1", "N_2", "N_H1", "N_H2", "N_12",
                            "N_H12")))
    print(f"wrote {out / 'streams.pstm'}, {out / 'clicks.csv'}, "
          f"{out / 'counts.csv'}, {out / 'counts.json'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    plan = runner.load_sweep_plan(args.sweep)
    if getattr(args, "bins", None) is not None:
        plan = replace(plan, max_bins=args.bins)
    background = _read_background(args.background)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    points = runner.run_sweep(cfg, plan, threads=args.threads)

    records = []
    failures = 0
    from .analysis import InsufficientStatistics
    from .core import with_attenuation
    for point in points:
        point_cfg = with_attenuation(cfg, point.attenuation)
        stem = out / f"point_{point.point_index:03d}"
        write_segment_csv(point.counts, stem.with_suffix(".csv"))
        write_counts_json(point.counts, stem.with_suffix(".json"),
                          config=config_to_dict(point_cfg))
        try:
            records.append(report.point_record(point_cfg, point.counts,
                                               background=background))
        except InsufficientStatistics as exc:
            failures += 1
            print(f"point {point.point_index} "
                  f"(attenuation {point.attenuation}): {exc}",
                  file=sys.stderr)

    rep = report.build_report(cfg, records)
    report.write_report_json(rep, out / "report.json")
    report.write_report_csv(rep, out / "report.csv")

    for record in records:
        limit = " (upper limit)" if record["upper_limit"] else ""
        print(f"attenuation {record['attenuation']:g}: "
              f"g2 = {record['g2']:.6g} +/- {record['sigma']:.6g}{limit}  "
              f"x = {record['x_rate']:.6g} /s")
    if rep["fit"] is not None:
        fit = rep["fit"]
        print(f"fit: slope = {fit['slope']:.6g} +/- {fit['slope_sigma']:.6g}, "
              f"intercept = {fit['intercept']:.6g} +/- "
              f"{fit['intercept_sigma']:.6g}, "
              f"reduced chi2 = {fit['reduced_chi2']:.4g} (dof {fit['dof']})")
    else:
        print(rep["fit_note"])
    print(f"wrote {out / 'report.json'}, {out / 'report.csv'}")
    return 1 if failures else 0


def cmd_analyze(args) -> int:
    background = _read_background(args.background)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    from .analysis import InsufficientStatistics
    records = []
    base_cfg = None
    failures = 0
    for path in args.counts:
        counts, cfg_dict = read_counts_json(path)
        if cfg_dict is None:
            raise ConfigError(
                f"{path}: counts file carries no configuration echo; "
                "reanalysis needs the generating parameters")
        cfg = config_from_dict(cfg_dict)
        if base_cfg is None:
            base_cfg = cfg
        try:
            records.append(report.point_record(cfg, counts,
                                               background=background))
        except InsufficientStatistics as exc:
            failures += 1
            print(f"{path}: {exc}", file=sys.stderr)

    if base_cfg is None:
        print("no usable points", file=sys.stderr)
        return 1
    rep = report.build_report(base_cfg, records)
    if background is None:
        rep["note"] = "raw-only: no background run supplied"
    report.write_report_json(rep, out / "report.json")
    report.write_report_csv(rep, out / "report.csv")
    print(f"wrote {out / 'report.json'}, {out / 'report.csv'}")
    if rep["fit_note"]:
        print(rep["fit_note"])
    return 1 if failures else 0


def cmd_plot(args) -> int:
    import json
    with open(args.report, "r", encoding="utf-8") as fh:
        rep = json.load(fh)
    if rep.get("format") != report.REPORT_FORMAT:
        raise ValueError(f"{args.report}: not a {report.REPORT_FORMAT} file")
    svgplot.write_report_svg(rep, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_bounds(args) -> int:
    if args.bound_kind == "energy":
        value = pcsft.bound_energy(args.pulse_duration, args.bin_width,
                                   args.pulse_energy, args.threshold_energy)
    else:
        value = pcsft.bound_counts(args.pulse_duration, args.bin_width,
                                   args.counts_1, args.counts_2,
                                   args.duration)
    print(repr(value))
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "plot": cmd_plot,
    "bounds": cmd_bounds,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
