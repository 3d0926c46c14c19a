"""Command-line front end.

Exit status: 0 success, 1 invalid specification, 2 numerical failure,
64 usage error.  Failures print ``ERROR <code>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import io
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._csv import fmt
from .errors import (
    EvalError,
    FormatError,
    NumericError,
    ParseError,
    RangeError,
    SpecRejected,
    SwitchingError,
)
from .evaluator import evaluate_exact, evaluate_mc, worst_case_control
from .lattice import build_lattice
from .oracle import enumerate_policies, game_dp
from .problem import load_spec, validate
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, solve_direct, solve_picard
from .strategy import extract_policy, random_control, random_policy, worst_control

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 64
COMMANDS = ("validate", "solve", "policy", "simulate", "oracle", "sweep")
SADDLE_SAMPLES = 20
DEFAULT_SWEEP = "50,100,200,400"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    spec: Path
    steps: tuple
    method: str = "direct"
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    paths: int = 100_000
    seed: int = 0
    u_grid_size: int = 3
    output: Path | None = None
    enumerate: bool = False


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="knightswitch",
                description="Optimal switching under drift ambiguity on a binomial lattice.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("spec", type=Path, help="problem specification file")
    p.add_argument("--steps", default=None,
                   help="time steps N (default 200; sweep takes a comma list, "
                        f"default {DEFAULT_SWEEP})")
    p.add_argument("--method", choices=("direct", "picard"), default="direct")
    p.add_argument("--tol", type=_positive_float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=_positive_int, default=DEFAULT_MAX_ITER)
    p.add_argument("--paths", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--u-grid-size", type=_positive_int, default=3)
    p.add_argument("-o", "--output", type=Path, default=None,
                   help="write the CSV here instead of standard output")
    p.add_argument("--enumerate", action="store_true",
                   help="oracle: also search all policies (tiny lattices only)")
    return p


def parse_args(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    raw = ns.steps or (DEFAULT_SWEEP if ns.command == "sweep" else "200")
    parts = raw.split(",")
    if ns.command != "sweep" and len(parts) != 1:
        raise UsageError("--steps takes a single value for this command")
    try:
        steps = tuple(_positive_int(s.strip()) for s in parts)
    except argparse.ArgumentTypeError as err:
        raise UsageError(f"--steps: {err}")
    return RunConfig(ns.command, ns.spec, steps, ns.method, ns.tol, ns.max_iter, ns.paths,
                     ns.seed, ns.u_grid_size, ns.output, ns.enumerate)


# --------------------------------------------------------------------------
# commands; each returns (exit status, main text, summary text)
# --------------------------------------------------------------------------

def _solve(cfg, spec, N):
    lat = build_lattice(spec.factor, spec.horizon, N)
    if cfg.method == "picard":
        return solve_picard(spec, lat, tol=cfg.tol, max_iter=cfg.max_iter)
    return solve_direct(spec, lat)


def _cmd_validate(cfg, spec):
    report = validate(spec, build_lattice(spec.factor, spec.horizon, cfg.steps[0]))
    return (EXIT_OK if report.ok else EXIT_INVALID), str(report) + "\n", ""


def _cmd_solve(cfg, spec):
    sol = _solve(cfg, spec, cfg.steps[0])
    summary = f"Y0={fmt(sol.y0)}\n"
    if cfg.method == "picard":
        summary += f"iterations={sol.iterations}\n"
    return EXIT_OK, sol.to_csv(), summary


def _cmd_policy(cfg, spec):
    sol = _solve(cfg, spec, cfg.steps[0])
    pol = extract_policy(spec, sol)
    ctl = worst_control(spec, sol)
    return EXIT_OK, (pol.to_csv(), ctl.to_csv()), f"Y0={fmt(sol.y0)}\n"


def _cmd_simulate(cfg, spec):
    sol = _solve(cfg, spec, cfg.steps[0])
    lat = sol.lattice
    pol = extract_policy(spec, sol)
    ctl = worst_control(spec, sol)
    grid = spec.ambiguity.default_grid(cfg.u_grid_size)
    out = io.StringIO()
    out.write("label,method,estimate,stderr,paths,seed\n")
    out.write("optimal," + evaluate_mc(spec, lat, pol, ctl, cfg.paths, cfg.seed).to_csv_row() + "\n")
    out.write("optimal," + evaluate_exact(spec, lat, pol, ctl).to_csv_row() + "\n")
    y0 = sol.y0
    worst_gap = 0.0
    for i in range(SADDLE_SAMPLES):
        s = cfg.seed * 1000 + i
        rep = evaluate_exact(spec, lat, pol, random_control(spec, lat, s, grid))
        worst_gap = max(worst_gap, y0 - rep.estimate)
        out.write(f"random_control,exact,{fmt(rep.estimate)},0,0,{s}\n")
    for i in range(SADDLE_SAMPLES):
        s = cfg.seed * 1000 + i
        _, value = worst_case_control(spec, lat, random_policy(spec, lat, s), grid)
        worst_gap = max(worst_gap, value - y0)
        out.write(f"random_policy,worst_case,{fmt(value)},0,0,{s}\n")
    summary = f"Y0={fmt(y0)}\nsaddle_violation={fmt(worst_gap)}\n"
    return EXIT_OK, out.getvalue(), summary


def _cmd_oracle(cfg, spec):
    sol = _solve(cfg, spec, cfg.steps[0])
    lat = sol.lattice
    grid = spec.ambiguity.default_grid(cfg.u_grid_size)
    dp = game_dp(spec, lat, grid)
    mask = lat.mask()
    node_diff = float(np.max(np.abs(sol.Y[:, mask] - dp.values[:, mask])))
    enum = enumerate_policies(spec, lat, grid) if cfg.enumerate else None
    out = io.StringIO()
    out.write("mode,solver,game_dp,abs_diff" + (",enumeration" if enum else "") + "\n")
    for j in range(spec.modes):
        y, v = float(sol.Y[j, 0, 0]), dp.V0[j]
        row = f"{j + 1},{fmt(y)},{fmt(v)},{fmt(abs(y - v))}"
        if enum:
            row += f",{fmt(enum.V0[j])}"
            node_diff = max(node_diff, abs(enum.V0[j] - y))
        out.write(row + "\n")
    return EXIT_OK, out.getvalue(), f"max_abs_diff={fmt(node_diff)}\n"


def _cmd_sweep(cfg, spec):
    out = io.StringIO()
    out.write("N,Y0,delta_to_previous\n")
    prev = None
    for N in cfg.steps:
        y = _solve(cfg, spec, N).y0
        delta = "" if prev is None else fmt(abs(y - prev))
        out.write(f"{N},{fmt(y)},{delta}\n")
        prev = y
    return EXIT_OK, out.getvalue(), ""


HANDLERS = {
    "validate": _cmd_validate,
    "solve": _cmd_solve,
    "policy": _cmd_policy,
    "simulate": _cmd_simulate,
    "oracle": _cmd_oracle,
    "sweep": _cmd_sweep,
}


def _emit(cfg, body, summary, stdout, stderr):
    if cfg.output is None:
        if isinstance(body, tuple):
            body = "\n".join(body)
        stdout.write(body)
        stderr.write(summary)
        return
    if isinstance(body, tuple):
        main, control = body
        cfg.output.write_text(main, encoding="utf-8", newline="\n")
        side = cfg.output.with_name(cfg.output.stem + "_control" + (cfg.output.suffix or ".csv"))
        side.write_text(control, encoding="utf-8", newline="\n")
    else:
        cfg.output.write_text(body, encoding="utf-8", newline="\n")
    stdout.write(summary)


def _fail(stderr, code, message, status):
    stderr.write(f"ERROR {code}: {message}\n")
    return status


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as err:
        return _fail(stderr, "UsageError", str(err), EXIT_USAGE)
    try:
        text = cfg.spec.read_text(encoding="utf-8")
    except OSError as err:
        return _fail(stderr, "UsageError", f"cannot read {cfg.spec}: {err.strerror}", EXIT_USAGE)
    try:
        spec = load_spec(text)
        status, body, summary = HANDLERS[cfg.command](cfg, spec)
    except SpecRejected as err:
        stderr.write(str(err.report) + "\n")
        return _fail(stderr, err.code, str(err), EXIT_INVALID)
    except (FormatError, RangeError, ParseError) as err:
        return _fail(stderr, err.code, str(err), EXIT_INVALID)
    except (NumericError, EvalError) as err:
        return _fail(stderr, err.code, str(err), EXIT_NUMERIC)
    except SwitchingError as err:
        return _fail(stderr, err.code, str(err), EXIT_NUMERIC)
    try:
        _emit(cfg, body, summary, stdout, stderr)
    except OSError as err:
        return _fail(stderr, "UsageError", f"cannot write {cfg.output}: {err.strerror}", EXIT_USAGE)
    return status


def main():
    sys.exit(run())
