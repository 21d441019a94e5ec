"""Command line: ``run``, ``analyze``, ``resume``, ``plot``.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import bubbletree as bt
from .. import diagnostics as dg
from .. import flow
from ..geometry import GeometryError
from . import plots
from .checkpoint import CheckpointError, load_checkpoint, read_series_csv
from .config import ConfigError, parse_config
from .scenarios import NumericalFailure, _jsonable, _summary_of_run, _Writer, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _load_config(path):
    try:
        return parse_config(Path(path).read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from None


def cmd_run(args):
    cfg = _load_config(args.config)
    res = run_scenario(cfg, args.out)
    print(json.dumps(_jsonable(res.summary), indent=2, sort_keys=True))
    return EXIT_NUMERICAL if res.failed else EXIT_OK


def cmd_analyze(args):
    reports = []
    for path in args.checkpoints:
        try:
            ck = load_checkpoint(path)
        except OSError as exc:
            raise ConfigError([f"{path}: {exc}"]) from None
        params = flow.FlowParams(ck.alpha, ck.r_scale)
        fld = ck.state.field
        rep = dg.energy_report(fld, params)
        tree = bt.build_tree(fld, args.epsilon_1)
        conc = dg.detect_concentration(fld, ck.state.t, args.epsilon_0)
        reports.append({"checkpoint": str(path), "t": ck.state.t, "alpha": ck.alpha,
                        "E": rep.E, "E_alpha": rep.E_alpha, "sup_e": rep.sup_e,
                        "tau_norm": rep.tau_norm, "degree_real": rep.degree_real,
                        "degree": rep.degree_int, "concentration_centers": [list(c) for c in conc.centers],
                        "bubbles": [{"center": list(n.center), "scale": n.scale,
                                     "bubble_energy": n.bubble_energy, "neck_energy": n.neck_energy}
                                    for n in tree.all_nodes()],
                        "identity_residual": tree.identity_residual})
    print(json.dumps(_jsonable(reports), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_resume(args):
    cfg = _load_config(args.config)
    try:
        ck = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise ConfigError([f"{args.checkpoint}: {exc}"]) from None
    g = ck.state.grid
    if (g.nx, g.side_length, ck.state.field.k) != (cfg.nx, cfg.L, cfg.k):
        raise ConfigError([f"checkpoint grid {g.nx} x {g.nx}, L={g.side_length}, k={ck.state.field.k}"
                           f" does not match config nx={cfg.nx}, L={cfg.L}, k={cfg.k}"])
    if ck.state.t >= cfg.t_max:
        raise ConfigError([f"checkpoint time {ck.state.t} is already past t_max={cfg.t_max}"])
    params = cfg.flow_params()
    run = flow.run(ck.state, params, t_max=cfg.t_max, tau_below=True if cfg.stop_on_tau else None,
                   sup_e_above=True, snapshot_stride=cfg.snapshot_stride, max_steps=cfg.max_steps)
    w = _Writer(cfg.output_dir if args.out is None else args.out, True)
    w.run("resume", run)
    summary = {"scenario": "resume", "from": str(args.checkpoint), "t_start": ck.state.t,
               **_summary_of_run(run)}
    w.text("summary.json", json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    return EXIT_NUMERICAL if run.stop_reason == "blow_up" else EXIT_OK


def cmd_plot(args):
    for path in args.csv:
        path = Path(path)
        try:
            cols = read_series_csv(path.read_text())
            svg = plots.energy_plot(cols, path.stem)
        except OSError as exc:
            raise ConfigError([f"{path}: {exc}"]) from None
        except ValueError as exc:
            raise ConfigError([f"{path}: {exc}"]) from None
        out = path.with_suffix(".svg") if args.out is None else Path(args.out) / (path.stem + ".svg")
        plots.write(out, svg)
        print(out)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="alphaflow", description="alpha-flow simulator for maps from the torus to the sphere")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run the scenario described by a config file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: output_dir from the config)")
    r.set_defaults(func=cmd_run)
    a = sub.add_parser("analyze", help="energy, degree, concentration and bubble tree of checkpoints")
    a.add_argument("checkpoints", nargs="+")
    a.add_argument("--epsilon-0", type=float, default=1.0)
    a.add_argument("--epsilon-1", type=float, default=bt.EPSILON_1)
    a.set_defaults(func=cmd_analyze)
    s = sub.add_parser("resume", help="continue a checkpoint with the flow settings of a config")
    s.add_argument("checkpoint")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_resume)
    pl = sub.add_parser("plot", help="energy plots from series CSV files")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, GeometryError, bt.BubbleError) as exc:
        for line in getattr(exc, "violations", [str(exc)]):
            print(f"error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, flow.NumericalBlowUp, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
