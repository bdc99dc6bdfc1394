"""Command-line front end.

    branchcat <subcommand> --config RUN.cfg [--seed S] [--threads N] [--out DIR]

Subcommands: validate, criteria, classify, simulate, estimate, decay,
martingale. Exit status is 0 on success, 1 on a domain or numerical error
and 2 on a configuration error. The output directory is ``--out``, else
``$BRANCHCAT_OUT``, else ``[output] directory``, else the working directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .criteria import sweep, sweep_csv
from .errors import BranchcatError, ConfigError, ModelError
from .model import validate_assumptions
from .montecarlo import (McEstimate, estimate_event_prob, martingale_check, results_csv,
                         survival_decay_fit)
from .regimes import classify, decay_rate_bounds, reports_csv
from .rng import STREAM_ID
from .simulate import events_csv, path_csv, simulate_path

OUT_ENV = "BRANCHCAT_OUT"


class Run:
    def __init__(self, rc: RunConfig, args):
        self.rc = rc
        self.args = args
        self.seed = args.seed
        self.workers = args.threads
        self.out = args.out or os.environ.get(OUT_ENV) or rc.get("output", "directory") or "."

    def header(self, seed=None):
        lines = [f"tool branchcat {__version__}", f"config sha256:{self.rc.digest}"]
        if seed is not None:
            lines += [f"seed {seed}", f"stream {STREAM_ID}"]
        return lines

    def write(self, name: str, text: str) -> str:
        os.makedirs(self.out, exist_ok=True)
        path = os.path.join(self.out, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(f"wrote {path}")
        return path


def cmd_validate(run: Run) -> int:
    m = run.rc.model()
    near, large = run.rc.grids()
    rep = validate_assumptions(m, np.concatenate([near, large]))
    sys.stdout.write(rep.to_text())
    return 0 if rep.passed else 1


def cmd_criteria(run: Run) -> int:
    m = run.rc.model()
    near, large = run.rc.grids()
    a_values = run.rc.get("grids", "a_values", (0.5, 1.0, 2.0))
    pts = sweep(m, np.concatenate([near, large]), a_values)
    run.write("criteria.csv", sweep_csv(pts, run.header()))
    return 0


def cmd_classify(run: Run) -> int:
    m = run.rc.model()
    summ = classify(m, run.rc.sections.get("regimes", {}), run.rc.grids())
    run.write("regimes.csv", reports_csv(summ.reports, run.header()))
    sys.stdout.write(summ.to_text())
    return 0


def _sim(run: Run):
    run.rc.require("sim", "mc")
    return run.rc.sim(run.seed)


def cmd_simulate(run: Run) -> int:
    m = run.rc.model()
    cfg = _sim(run)
    x0 = run.rc.need("mc", "x0")
    for i in range(run.rc.get("mc", "paths", 1)):
        rec = simulate_path(m, cfg, x0, i)
        hdr = run.header(cfg.seed)
        run.write(f"path_{i}.csv", path_csv(rec, hdr))
        run.write(f"events_{i}.csv", events_csv(rec, hdr))
        print(f"path {i}: {rec.outcome} at t={rec.outcome_time!r}, {len(rec.events)} events")
    return 0


def cmd_estimate(run: Run) -> int:
    m = run.rc.model()
    cfg = _sim(run)
    x0 = run.rc.need("mc", "x0")
    n = run.rc.need("mc", "n")
    t = run.rc.get("mc", "t", cfg.t_max)
    events = [e.strip() for e in run.rc.need("mc", "event").split(",")]
    ests = [estimate_event_prob(m, cfg, x0, ev, t, n, run.workers) for ev in events]
    body = results_csv(ests, run.header(cfg.seed))
    run.write("estimate.csv", body)
    sys.stdout.write(body)
    return 0


def cmd_decay(run: Run) -> int:
    m = run.rc.model()
    cfg = _sim(run)
    x0 = run.rc.need("mc", "x0")
    n = run.rc.need("mc", "n")
    times = run.rc.need("mc", "times")
    near, large = run.rc.grids()
    grid = np.concatenate([near, large])
    eta = run.rc.need("mc", "eta")
    floor = run.rc.get("mc", "rate_floor", float(np.min(m.r(grid))))
    bound = decay_rate_bounds(m, eta, floor, grid)
    power = run.rc.get("mc", "poly_power", bound.poly_power)
    tol = run.rc.get("mc", "tolerance", 0.1)
    fit = survival_decay_fit(m, cfg, x0, times, power, n, run.workers)
    hdr = run.header(cfg.seed)
    run.write("survival.csv", fit.curve.to_csv(hdr))
    ok = fit.respects_bound(bound.exponent, tol)
    rows = [("poly_power", "slope", "intercept", "slope_ci_lo", "slope_ci_hi", "bound_case",
             "bound_exponent", "tolerance", "respects_bound")]
    rows.append((repr(power), repr(fit.slope), repr(fit.intercept), repr(fit.slope_ci[0]),
                 repr(fit.slope_ci[1]), bound.case, repr(bound.exponent), repr(tol), str(ok)))
    body = "".join(f"# {h}\n" for h in hdr) + "".join(",".join(r) + "\n" for r in rows)
    run.write("decay.csv", body)
    print(f"fitted slope {fit.slope!r} vs bound exponent {bound.exponent!r} ({bound.case}) + {tol!r}: "
          f"{'consistent' if ok else 'VIOLATED'} (one-sided check)")
    return 0


def cmd_martingale(run: Run) -> int:
    m = run.rc.model()
    cfg = _sim(run)
    g = lambda k: run.rc.need("mc", k)
    rep = martingale_check(m, cfg, g("x0"), g("a"), g("c"), g("b"), g("checkpoints"), g("n"),
                           run.rc.get("mc", "budget", 0.02), run.workers)
    ests: list[McEstimate] = [r.estimate for r in rep.rows]
    run.write("martingale.csv", results_csv(ests, run.header(cfg.seed)))
    sys.stdout.write(rep.to_text())
    return 0


COMMANDS = {
    "validate": (cmd_validate, ("model",)),
    "criteria": (cmd_criteria, ("model",)),
    "classify": (cmd_classify, ("model",)),
    "simulate": (cmd_simulate, ("model", "sim", "mc")),
    "estimate": (cmd_estimate, ("model", "sim", "mc")),
    "decay": (cmd_decay, ("model", "sim", "mc")),
    "martingale": (cmd_martingale, ("model", "sim", "mc")),
}


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _threads(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="branchcat", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"branchcat {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--seed", type=_seed, default=None, help="overrides [sim] seed")
        sp.add_argument("--threads", type=_threads, default=1)
        sp.add_argument("--out", default=None, metavar="DIR")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    fn, needed = COMMANDS[args.command]
    try:
        rc = load_config(args.config)
        rc.require(*needed)
        return fn(Run(rc, args))
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (BranchcatError, ValueError, ArithmeticError) as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
