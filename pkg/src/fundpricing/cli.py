"""Command-line entry point.

Subcommands: simulate, mc-jump-error, mc-size-power, classify-events,
fit-jumps, test-events, emit-figures.  Every run writes its result files
plus a run manifest (config echo, seed, version, wall time) into the output
directory.  Result files are byte-identical across reruns with the same
seed and any thread count; only the manifest's wall-time field varies.

Exit codes: 0 success, 2 configuration error, 3 input error, 4 runtime
numeric error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cross_event import RegressionError, build_factors, fit_jump_regression
from .inference import InferenceError
from .market_data import (
    TickDataError,
    descriptives,
    load_events,
    run_event_tests,
)
from .mc import (
    McDesign,
    run_jump_error_study,
    run_size_power_study,
    write_jump_error_csv,
    write_power_curves_csv,
)
from .preaveraging import EstimationError, PreAvgConfig, event_return
from .simulation import (
    HestonParams,
    JumpSpec,
    NoiseSpec,
    SimulationError,
    TransitionSpec,
    observe,
    save_series_csv,
    simulate_efficient_path,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4

OUTPUT_DIR_ENV = "FUNDPRICING_OUTDIR"


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(OUTPUT_DIR_ENV, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, config: dict, seed, t0: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "wall_time_s": round(time.time() - t0, 3),
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))


def _write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in fields})


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".12g")
    return value


def _parse_deltas(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad delta list {text!r}") from exc


def _cmd_simulate(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    params = HestonParams(annualization=args.annualization)
    tau = args.window / 2.0
    jump = JumpSpec(tau=tau, jump_size=args.jump_size,
                    vol_jump=args.vol_jump, vol_jump_decay=args.vol_jump_decay)
    trans = TransitionSpec(eta=args.eta, theta_pn=args.theta_pn,
                           tau_bar=tau + args.transition,
                           terminal_dev=args.terminal_dev)
    noise = NoiseSpec(q=args.q)
    path = simulate_efficient_path(params, jump, args.n, args.window, args.seed)
    series = observe(path, jump, trans, noise, seed=args.seed + 1)
    save_series_csv(path, series, out / "path.csv", out / "path_specs.json")
    config = {
        "n": args.n, "window": args.window, "jump_size": args.jump_size,
        "vol_jump": args.vol_jump, "vol_jump_decay": args.vol_jump_decay,
        "eta": args.eta, "theta_pn": args.theta_pn, "transition": args.transition,
        "terminal_dev": args.terminal_dev, "q": args.q,
        "annualization": args.annualization,
    }
    _write_manifest(out, "simulate", config, args.seed, t0)
    print(f"wrote {out / 'path.csv'}")
    return EXIT_OK


def _mc_design(args, profile: str) -> McDesign:
    if profile == "jump_error":
        design = McDesign.jump_error_default(rounds=args.rounds, master_seed=args.seed)
    else:
        design = McDesign.size_power_default(rounds=args.rounds, master_seed=args.seed)
    overrides = {}
    if args.deltas is not None:
        overrides["deltas"] = args.deltas
    if args.block is not None:
        overrides["block_s"] = args.block
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    return replace(design, **overrides) if overrides else design


def _cmd_mc_jump_error(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    design = _mc_design(args, "jump_error")
    result = run_jump_error_study(design, threads=args.threads)
    result.to_json(out / "jump_error.json")
    write_jump_error_csv(result, out / "jump_error.csv")
    _write_manifest(out, "mc-jump-error", result.design, design.master_seed, t0)
    print(f"wrote {out / 'jump_error.csv'} ({design.rounds} rounds)")
    return EXIT_OK


def _cmd_mc_size_power(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    design = _mc_design(args, "size_power")
    result = run_size_power_study(design, threads=args.threads)
    result.to_json(out / "size_power.json")
    write_power_curves_csv(result, out / "size_power.csv")
    _write_manifest(out, "mc-size-power", result.design, design.master_seed, t0)
    print(f"wrote {out / 'size_power.csv'} ({design.rounds} rounds)")
    return EXIT_OK


def _load_pipeline_events(args):
    events = load_events(args.events, args.manifest)
    if not events:
        raise TickDataError(f"{args.events}: no events")
    return events


def _cmd_classify_events(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    events = _load_pipeline_events(args)
    rows = []
    for ev in events:
        row = {"event_id": ev.event_id, "class": None,
               "time_to_first_break_s": None, "total_stop_time_s": None,
               "note": ev.note}
        if ev.series is not None:
            row["class"] = ev.cls
            if ev.break_info is not None:
                row.update(ev.break_info.to_record())
        rows.append(row)
    _write_csv(out / "event_classes.csv",
               ["event_id", "class", "time_to_first_break_s", "total_stop_time_s", "note"],
               rows)
    summary = descriptives([e for e in events if e.series is not None])
    (out / "descriptives.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
    _write_manifest(out, "classify-events",
                    {"events": str(args.events), "manifest": str(args.manifest)},
                    None, t0)
    print(f"wrote {out / 'event_classes.csv'}")
    return EXIT_OK


def _cmd_fit_jumps(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    events = _load_pipeline_events(args)
    usable = [e for e in events if e.series is not None and e.cls == "regular"]
    if len(usable) < 6:
        raise RegressionError(f"only {len(usable)} usable regular events")
    config = PreAvgConfig(args.block)
    rows = []
    for delta in args.deltas:
        factors = build_factors(usable)
        returns = np.array([
            event_return(ev.series, ev.tau, delta, config).value * 100.0
            for ev in usable
        ])
        fit = fit_jump_regression(returns, factors)
        for label, coef, se in zip(fit.labels, fit.coef, fit.robust_se):
            rows.append({"delta_s": delta, "factor": label, "coef": coef,
                         "robust_se": se, "r2": fit.r2, "n": len(usable)})
    _write_csv(out / "jump_regressions.csv",
               ["delta_s", "factor", "coef", "robust_se", "r2", "n"], rows)
    _write_manifest(out, "fit-jumps",
                    {"events": str(args.events), "manifest": str(args.manifest),
                     "deltas": list(args.deltas), "block": args.block},
                    None, t0)
    print(f"wrote {out / 'jump_regressions.csv'}")
    return EXIT_OK


def _cmd_test_events(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    events = _load_pipeline_events(args)
    config = PreAvgConfig(args.block)
    report = run_event_tests(events, args.deltas, alpha=args.alpha, config=config)
    _write_csv(out / "test_aggregate.csv",
               ["class", "delta_s", "n_events", "n_rejected", "rejection_pct",
                "overshoot_pct"],
               report.aggregate())
    _write_csv(out / "test_scatter.csv",
               ["event_id", "class", "delta_s", "jump_estimate", "event_return",
                "critical", "reject"],
               report.scatter_rows())
    per_event = {
        "alpha": report.alpha,
        "outcomes": [r.to_record() for r in report.rows],
        "skipped": report.skipped,
    }
    (out / "test_events.json").write_text(json.dumps(per_event, sort_keys=True, indent=2))
    _write_manifest(out, "test-events",
                    {"events": str(args.events), "manifest": str(args.manifest),
                     "alpha": args.alpha, "deltas": list(args.deltas),
                     "block": args.block},
                    None, t0)
    print(f"wrote {out / 'test_aggregate.csv'}")
    return EXIT_OK


def _cmd_emit_figures(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    try:
        payload = json.loads(Path(args.result).read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise TickDataError(f"{args.result}: not a result JSON") from exc
    cells = payload.get("cells", [])
    if payload.get("study") == "size_power":
        fields = ["delta_s", "terminal_frac", "rejection_rate", "se", "rounds"]
    else:
        fields = ["estimator", "n_train", "delta_s", "mape", "mape_se",
                  "mse_pct2", "rounds"]
    _write_csv(out / "figure_data.csv", fields, cells)
    _write_manifest(out, "emit-figures", {"result": str(args.result)}, None, t0)
    print(f"wrote {out / 'figure_data.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fundpricing",
        description="Simulation, estimation and testing of post-release pricing",
    )
    parser.add_argument("--out-dir", default=None,
                        help=f"output directory (default: ${OUTPUT_DIR_ENV} or ./out)")
    parser.add_argument("--config", default=None,
                        help="JSON file of flag defaults; explicit flags override it")
    subparsers = parser.add_subparsers(dest="command", required=True)
    parser.fp_subparsers = {}

    def sub_parser(name, **kwargs):
        p = subparsers.add_parser(name, **kwargs)
        parser.fp_subparsers[name] = p
        return p

    p = sub_parser("simulate", help="simulate one event window")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=21600)
    p.add_argument("--window", type=float, default=10800.0)
    p.add_argument("--jump-size", type=float, default=-0.027, dest="jump_size")
    p.add_argument("--vol-jump", type=float, default=0.225, dest="vol_jump")
    p.add_argument("--vol-jump-decay", type=float, default=2500.0, dest="vol_jump_decay")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--theta-pn", type=float, default=0.45, dest="theta_pn")
    p.add_argument("--transition", type=float, default=30.0)
    p.add_argument("--terminal-dev", type=float, default=0.0, dest="terminal_dev")
    p.add_argument("--q", type=float, default=4.0e-5)
    p.add_argument("--annualization", type=float,
                   default=HestonParams().annualization)
    p.set_defaults(func=_cmd_simulate)

    for name, func in (("mc-jump-error", _cmd_mc_jump_error),
                       ("mc-size-power", _cmd_mc_size_power)):
        p = sub_parser(name, help=f"run the {name[3:].replace('-', '/')} study")
        p.add_argument("--rounds", type=int, default=2000)
        p.add_argument("--seed", type=int, default=20240914)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--deltas", type=_parse_deltas, default=None)
        p.add_argument("--block", type=float, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.set_defaults(func=func)

    for name, func, extra in (
        ("classify-events", _cmd_classify_events, False),
        ("fit-jumps", _cmd_fit_jumps, True),
        ("test-events", _cmd_test_events, True),
    ):
        p = sub_parser(name, help=f"{name.replace('-', ' ')} from tick data")
        p.add_argument("--events", required=True, help="events CSV")
        p.add_argument("--manifest", required=True, help="event-to-tick-file JSON")
        if extra:
            p.add_argument("--deltas", type=_parse_deltas,
                           default=(20.0, 30.0, 40.0, 60.0, 120.0, 300.0, 600.0))
            p.add_argument("--block", type=float, default=15.0)
        if name == "test-events":
            p.add_argument("--alpha", type=float, default=0.01)
        p.set_defaults(func=func)

    p = sub_parser("emit-figures", help="re-emit plot data from a result JSON")
    p.add_argument("--result", required=True, help="study result JSON")
    p.set_defaults(func=_cmd_emit_figures)
    return parser


class ConfigError(ValueError):
    """Malformed configuration file."""


def _apply_config_defaults(parser: argparse.ArgumentParser, argv) -> None:
    """Let a JSON config file override built-in defaults; flags still win."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" not in argv:
        return
    try:
        path = Path(argv[argv.index("--config") + 1])
    except IndexError as exc:
        raise ConfigError("--config requires a file path") from exc
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid config file") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    defaults = {k.replace("-", "_"): v for k, v in config.items()}
    unknown = set(defaults)
    for sub in parser.fp_subparsers.values():
        known = {a.dest for a in sub._actions}
        hits = {k: v for k, v in defaults.items() if k in known}
        sub.set_defaults(**hits)
        unknown -= set(hits)
    top_known = {a.dest for a in parser._actions}
    unknown -= {k for k in defaults if k in top_known}
    parser.set_defaults(**{k: v for k, v in defaults.items() if k in top_known})
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(json.dumps({"error": "input", "message": str(exc)}), file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (FileNotFoundError, TickDataError) as exc:
        _report_error(args, "input", exc)
        return EXIT_INPUT
    except (SimulationError, EstimationError, InferenceError, RegressionError,
            ValueError, FloatingPointError) as exc:
        _report_error(args, "runtime", exc)
        return EXIT_RUNTIME


def _report_error(args, kind: str, exc: Exception) -> None:
    report = {"error": kind, "message": str(exc)}
    print(json.dumps(report, sort_keys=True), file=sys.stderr)
    try:
        out = _out_dir(args)
        (out / "error.json").write_text(json.dumps(report, sort_keys=True, indent=2))
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
