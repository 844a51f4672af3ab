"""Command-line entry point: ``mrbc run | analyze | plot | sweep``."""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .analysis import PositivityError, StabilityReport, analyze_config
from .output import emit, plot, read_trace
from .scenario import ConfigError, ScenarioConfig, bundled_config_names, bundled_config_text, load_config, parse_config
from .simulation import InadmissibleStart, run
from .sweep import parse_grid, sweep, trend_report, write_table

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ENVELOPE = 2
EXIT_NUMERIC = 3

_STATUS_EXIT = {"completed": EXIT_OK, "envelope_violation": EXIT_ENVELOPE, "numeric_failure": EXIT_NUMERIC}


def _err(msg: str) -> None:
    print(f"mrbc: {msg}", file=sys.stderr)


def resolve_config(spec: str) -> ScenarioConfig:
    """Load a config file, or a bundled scenario by name (``exp1``); apply ``MRBC_SEED``."""
    if os.path.exists(spec):
        cfg = load_config(spec)
    elif spec in bundled_config_names():
        cfg = parse_config(bundled_config_text(spec))
    else:
        raise ConfigError(f"no such config file or bundled scenario: {spec}")
    seed = os.environ.get("MRBC_SEED")
    if seed is not None and seed.strip():
        try:
            cfg = cfg.with_seed(int(seed))
        except ValueError:
            raise ConfigError(f"MRBC_SEED must be an integer, got {seed!r}") from None
    return cfg


def _grid_text(spec: str) -> str:
    if os.path.exists(spec):
        return Path(spec).read_text(encoding="utf-8")
    from importlib import resources

    res = resources.files("mrbc") / "grids" / f"{spec}.grid"
    if res.is_file():
        return res.read_text(encoding="utf-8")
    raise ConfigError(f"no such grid file or bundled grid: {spec}")


def cmd_run(args) -> int:
    cfg = resolve_config(args.config)
    trace, verdict = run(cfg)
    emit(trace, args.out)
    if verdict.ok:
        print(f"{cfg.name}: completed, {len(trace)} samples -> {args.out}")
    else:
        print(f"{cfg.name}: {verdict.status}: {verdict.message}")
    return _STATUS_EXIT[verdict.status]


def cmd_analyze(args) -> int:
    cfg = resolve_config(args.config)
    trace = read_trace(args.trace)
    if trace.n != cfg.n:
        raise ConfigError(f"trace has {trace.n} subsystems but the config has {cfg.n}")
    rep = analyze_config(trace, cfg)
    Path(args.report).write_text(rep.to_text(), encoding="utf-8")
    if args.csv:
        import csv

        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(StabilityReport.csv_header())
            w.writerow(rep.csv_row())
    print(rep.to_text(), end="")
    return EXIT_OK


def cmd_plot(args) -> int:
    trace = read_trace(args.trace)
    cols = plot(trace, args.signals.split(","), args.out)
    print(f"plotted {', '.join(cols)} -> {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = resolve_config(args.config)
    grid = parse_grid(_grid_text(args.grid), cfg)
    rows = sweep(grid, workers=args.workers)
    write_table(rows, args.out)
    for r in rows:
        if r["status"] != "completed":
            print(f"point {dict((p, r[p]) for p in grid.paths)}: {r['status']} {r['message']}")
    for res in trend_report(rows, grid.claims):
        print(res.line())
    print(f"{len(rows)} points -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrbc", description="Simulate and analyze barrier-Lyapunov adaptive control of strict-feedback plants.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write its trace CSV")
    r.add_argument("--config", required=True, help="config file or bundled scenario name")
    r.add_argument("--out", required=True, help="trace CSV path")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="run the stability monitors on a trace")
    a.add_argument("--trace", required=True)
    a.add_argument("--config", required=True)
    a.add_argument("--report", required=True, help="key = value text report path")
    a.add_argument("--csv", help="also write the report as a one-row CSV")
    a.set_defaults(func=cmd_analyze)

    pl = sub.add_parser("plot", help="plot trace columns (tracking errors get envelope overlays)")
    pl.add_argument("--trace", required=True)
    pl.add_argument("--signals", required=True, help="comma-separated columns or prefixes, e.g. ebar,u_sat")
    pl.add_argument("--out", required=True, help="image path; format from the extension")
    pl.set_defaults(func=cmd_plot)

    s = sub.add_parser("sweep", help="run a parameter grid and check its trend claims")
    s.add_argument("--config", required=True, help="base scenario")
    s.add_argument("--grid", required=True, help="grid file or bundled grid name")
    s.add_argument("--out", required=True, help="table CSV path")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which is reserved for envelope violations
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            _err(e)
        return EXIT_USAGE
    except (InadmissibleStart, PositivityError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
