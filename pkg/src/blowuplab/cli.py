"""Command-line entry point: ``blowuplab {run,rescale,scan,bisect,scenario}``.

Exit codes: 0 success, 2 config error, 3 data-range error, 4 bracket
error, 5 budget exhaustion.  Failures also write ``error.json`` to the
output directory and print it to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .config import defaults_yaml, load_config, scenario_from_config
from .exceptions import BlowupLabError, BracketError, BudgetExhausted, ConfigError, DataRangeError
from .integrator import StopReason, estimate_omega, load_trajectory, run, save_trajectory
from .io import write_csv, write_json
from .rate import rate_curve
from .regularity import covering_dimension, extract_singular_set
from .scenarios import CATALOGUE, TIERS, analyze, bisect_borderline, run_scenario
from .selfsim import blowup_center, local_energy_series, rescale, resolved_s_range

__all__ = ["main", "build_parser"]

log = logging.getLogger("blowuplab")


def _apply_threads():
    val = os.environ.get("BLOWUPLAB_THREADS")
    if not val:
        return
    try:
        n = int(val)
    except ValueError as exc:
        raise ConfigError(f"BLOWUPLAB_THREADS must be an integer, got {val!r}") from exc
    if n < 1:
        raise ConfigError("BLOWUPLAB_THREADS must be positive")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _load(args) -> dict:
    return load_config(args.config) if args.config else {}


def _tier(args, cfg: dict) -> str:
    return args.tier or cfg.get("tier", "reference")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ledger_columns(traj) -> dict:
    return traj.ledger.as_dict()


def _trajectory(args, cfg: dict):
    """Load ``--trajectory`` if given, else simulate the configured scenario."""
    if getattr(args, "trajectory", None):
        try:
            return load_trajectory(args.trajectory)
        except (OSError, KeyError, ValueError) as exc:
            raise DataRangeError(f"cannot load trajectory {args.trajectory}: {exc}") from exc
    spec = scenario_from_config(cfg)
    tier = _tier(args, cfg)
    params = spec.model(tier)
    return run(spec.datum.build(params.grid), spec.solver_config(tier), params)


def _write_rate(out: Path, traj, rep):
    if rep.rate is None or rep.omega is None:
        return
    curve = rate_curve(traj, rep.omega)
    write_csv(out / "rate.csv", curve.as_table())


def cmd_run(args) -> int:
    cfg = _load(args)
    spec = scenario_from_config(cfg)
    tier = _tier(args, cfg)
    params = spec.model(tier)
    scfg = spec.solver_config(tier)
    if args.resume:
        try:
            prev = load_trajectory(args.resume)
        except (OSError, KeyError, ValueError) as exc:
            raise DataRangeError(f"cannot load checkpoint {args.resume}: {exc}") from exc
        if prev.grid.M != params.grid.M or prev.grid.spec != params.grid.spec or prev.p != params.p:
            raise ConfigError("checkpoint grid or exponent differs from the config")
        traj = run(None, scfg, prev.params, resume=prev)
    else:
        traj = run(spec.datum.build(params.grid), scfg, params)
    rep = analyze(traj)
    out = _out(args)
    write_csv(out / "ledger.csv", _ledger_columns(traj))
    write_json(out / "verdict.json", {"scenario": spec.to_dict(), "tier": tier, "report": rep.to_dict()},
               "verdict")
    _write_rate(out, traj, rep)
    save_trajectory(out / "checkpoint.npz", traj)
    print(json.dumps({"stop": traj.stop.value, "entries": len(traj.ledger),
                      "omega": None if rep.omega is None else rep.omega.omega}))
    return 0


def cmd_rescale(args) -> int:
    cfg = _load(args)
    traj = _trajectory(args, cfg)
    if traj.stop is not StopReason.BLOWUP:
        raise DataRangeError(f"trajectory did not blow up ({traj.stop.value})")
    est = estimate_omega(traj)
    rs = {**{"a": None, "s_min": None, "s_max": None, "ds": 0.1}, **cfg.get("rescale", {})}
    a = args.a if args.a is not None else rs["a"]
    a = blowup_center(traj) if a is None else float(a)
    lo_spec = traj.grid.spec
    if not lo_spec.R0 <= a <= lo_spec.R or (traj.grid.radial and a != 0.0):
        raise ConfigError(f"centre a={a} is not admissible for domain {lo_spec.to_dict()}")
    s_lo, s_hi = resolved_s_range(traj, est)
    if args.s_range:
        s_min, s_max = args.s_range
    else:
        s_min = rs["s_min"] if rs["s_min"] is not None else s_lo
        s_max = rs["s_max"] if rs["s_max"] is not None else s_hi
    if not (s_lo - 1e-12 <= s_min <= s_max <= s_hi + 1e-12):
        raise DataRangeError(f"s range [{s_min}, {s_max}] outside the resolved coverage [{s_lo}, {s_hi}]")
    n = max(int(round((s_max - s_min) / rs["ds"])), 1) + 1
    s_grid = np.linspace(s_min, s_max, n)
    try:
        ser = local_energy_series(traj, a, est, s_grid)
        frames = [rescale(traj, a, est, s) for s in s_grid[:: max(1, n // 10)]]
    except ValueError as exc:
        raise DataRangeError(str(exc)) from exc
    out = _out(args)
    write_csv(out / "local_energy.csv", ser.as_table())
    cols = {"s": [], "y": [], "w": [], "rho": [], "mask": []}
    for f in frames:
        m = len(f.w)
        cols["s"] += [f.s] * m
        cols["y"] += list(f.y.nodes)
        cols["w"] += list(f.w)
        cols["rho"] += list(f.rho)
        cols["mask"] += list(f.mask)
    write_csv(out / "frames.csv", cols)
    write_json(out / "rescale.json", {"a": a, "omega": est.to_dict(), "s_range": [s_min, s_max],
                                      "monotone": ser.monotone, "max_positive_jump": ser.max_positive_jump,
                                      "audit_tol": ser.audit_tol}, "rescale")
    return 0


def cmd_scan(args) -> int:
    cfg = _load(args)
    traj = _trajectory(args, cfg)
    out = _out(args)
    spec = scenario_from_config(cfg)
    rcfg = spec.regularity_config()
    if traj.stop is not StopReason.BLOWUP:
        write_json(out / "dimension.json", {"empty": True, "note": "empty; dimension -inf by convention",
                                            "stop": traj.stop.value, "slope": float("-inf")}, "dimension")
        return 0
    est = estimate_omega(traj)
    try:
        sm = extract_singular_set(traj, est, rcfg)
    except ValueError as exc:
        raise DataRangeError(f"trajectory not resolved enough for a scan: {exc}") from exc
    dim = covering_dimension(sm, rcfg.q_list)
    rows = sm.table()
    write_csv(out / "densities.csv", {k: [r[k] for r in rows] for k in rows[0]})
    write_json(out / "dimension.json", {**dim.to_dict(), "eps": sm.eps, "blowup_set": sm.bands(),
                                        "r_list": sm.r_list, "truncation": sm.truncation,
                                        "criterion": sm.criterion, "omega": est.to_dict()}, "dimension")
    return 0


def cmd_bisect(args) -> int:
    cfg = _load(args)
    spec = scenario_from_config(cfg)
    tier = _tier(args, cfg)
    b = {"lambda_lo": 1.0, "lambda_hi": 100.0, "tol": 1e-3, "budget": 60, **cfg.get("bisect", {})}
    out = _out(args)
    try:
        rep = bisect_borderline(spec.datum, spec.model(tier), spec.solver_config(tier),
                                (b["lambda_lo"], b["lambda_hi"]), b["tol"], b["budget"])
    except BudgetExhausted as exc:
        write_json(out / "bisection.json", {"partial": exc.details, "error": str(exc)}, "bisection")
        raise
    write_json(out / "bisection.json", rep.to_dict(), "bisection")
    if rep.trajectory_hi is not None:
        write_csv(out / "ledger_hi.csv", _ledger_columns(rep.trajectory_hi))
    print(json.dumps({"lambda_star": rep.lambda_star, "relative_width": rep.relative_width}))
    return 0


def cmd_scenario(args) -> int:
    cfg = _load(args)
    if args.name:
        if cfg.get("scenario") not in (None, args.name):
            raise ConfigError(f"scenario {args.name!r} conflicts with config scenario {cfg['scenario']!r}")
        cfg = {**cfg, "scenario": args.name}
    if cfg.get("scenario") is None:
        raise ConfigError(f"name a scenario; catalogue: {sorted(CATALOGUE)}")
    spec = scenario_from_config(cfg)
    tier = _tier(args, cfg)
    rep = run_scenario(spec, tier)
    out = _out(args)
    write_csv(out / "ledger.csv", _ledger_columns(rep.trajectory))
    _write_rate(out, rep.trajectory, rep.blowup)
    write_json(out / "verdict.json", {"scenario": spec.to_dict(), "tier": tier,
                                      "report": rep.blowup.to_dict()}, "verdict")
    if rep.setmap is not None:
        rows = rep.setmap.table()
        write_csv(out / "densities.csv", {k: [r[k] for r in rows] for k in rows[0]})
        write_json(out / "dimension.json", {**rep.dimension.to_dict(), "eps": rep.setmap.eps,
                                            "blowup_set": rep.setmap.bands()}, "dimension")
    write_json(out / "summary.json", rep.summary(), "summary")
    print(json.dumps(rep.summary()["mismatches"]))
    return 0


COMMANDS = {"run": cmd_run, "rescale": cmd_rescale, "scan": cmd_scan, "bisect": cmd_bisect,
            "scenario": cmd_scenario}


def _common(top: bool) -> argparse.ArgumentParser:
    # subcommand copies suppress their defaults so options given before the command survive
    d = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=d(None), help="YAML run configuration")
    common.add_argument("--out", metavar="DIR", default=d("out"), help="output directory (default: out)")
    common.add_argument("--tier", choices=sorted(TIERS), default=d(None),
                        help="resolution tier (overrides the config)")
    common.add_argument("--print-defaults", action="store_true", default=d(False),
                        help="print the default config and exit")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(False)
    ap = argparse.ArgumentParser(prog="blowuplab", parents=[_common(True)],
                                 description="Numerical laboratory for blowup of u_t - Lap u = |u|^(p-1) u.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command")
    p = sub.add_parser("run", parents=[common], help="integrate one datum and classify it")
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a checkpoint.npz")
    p = sub.add_parser("rescale", parents=[common], help="self-similar frames and local energy")
    p.add_argument("--trajectory", metavar="NPZ", help="use a saved trajectory instead of simulating")
    p.add_argument("--a", type=float, help="centre (default: the blowup point)")
    p.add_argument("--s-range", type=float, nargs=2, metavar=("S_MIN", "S_MAX"))
    p = sub.add_parser("scan", parents=[common], help="regularity densities and blowup set")
    p.add_argument("--trajectory", metavar="NPZ", help="use a saved trajectory instead of simulating")
    sub.add_parser("bisect", parents=[common], help="bisect the borderline amplitude")
    p = sub.add_parser("scenario", parents=[common], help="run a catalogue scenario end to end")
    p.add_argument("name", nargs="?", choices=sorted(CATALOGUE))
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults:
        sys.stdout.write(defaults_yaml())
        return 0
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 2
    try:
        _apply_threads()
        return COMMANDS[args.command](args)
    except BlowupLabError as exc:
        err = exc.to_dict()
    except FloatingPointError as exc:
        err = DataRangeError(str(exc)).to_dict()
    text = json.dumps(err, sort_keys=True, default=str)
    print(text, file=sys.stderr)
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "error.json").write_text(text + "\n")
    except OSError:
        pass
    return int(err["exit_code"])


if __name__ == "__main__":
    sys.exit(main())
