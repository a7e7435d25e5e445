"""Command-line interface.

Subcommands
-----------
experiment
    Run a JSON-configured experiment; writes ``records.csv`` and
    ``summary.json`` to ``--out-dir`` or prints the summary JSON.
threshold
    Print a threshold rule as JSON.
bounds
    Print one JSON object per requested bound (a JSON list).
select-stream
    Read observations from standard input (one per line, comma or whitespace
    separated) and write one tab-separated decision line per row:
    ``SELECT|SKIP  weighted_norm  threshold  forced(0|1)``. Rows arriving after
    the budget is spent are reported as ``SKIP`` with threshold ``inf``.
dataset-check
    Validate a CSV file and print its dimensions and centering diagnostics.

Exit status is 0 on success, 1 on usage errors (help is printed) and 2 on
runtime errors, which are reported on stderr as
``{"error": <exception class>, "message": <text>}``.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import bounds as bnd
from .errors import ActiveRegError, ParseError
from .harness import (
    ExperimentConfig,
    read_csv_dataset,
    run_experiment,
    split_dataset,
    summary_json,
    write_records_csv,
    write_summary_json,
)
from .numerics import eig_sym
from .selectors import adaptive_selector, fixed_selector, step_adaptive, step_fixed
from .thresholds import (
    ThresholdMethod,
    ThresholdRule,
    clt_threshold,
    gaussian_threshold,
    solve_threshold_empirical,
)
from .whitening import fit_covariance_batch, whitening_from_covariance

DEFAULT_SEED = 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _dump(obj) -> str:
    return json.dumps(obj, default=_json_default, sort_keys=True)


def _parse_row(line: str, lineno: int) -> np.ndarray:
    parts = line.replace(",", " ").split()
    try:
        row = np.array([float(p) for p in parts])
    except ValueError:
        raise ParseError(f"non-numeric value on input line {lineno}", row=lineno, column=None) from None
    if not np.all(np.isfinite(row)):
        raise ParseError(f"non-finite value on input line {lineno}", row=lineno, column=None)
    return row


def read_matrix(path) -> np.ndarray:
    """Whitespace- or comma-separated numeric matrix, one row per line."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip() and not line.lstrip().startswith("#"):
                rows.append(_parse_row(line, lineno))
    if not rows or len({r.shape[0] for r in rows}) != 1:
        raise ParseError(f"{path}: expected a non-empty rectangular matrix", row=None, column=None)
    return np.array(rows)


# --- subcommands ------------------------------------------------------------------

def cmd_experiment(args, out) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.replications is not None:
        config.replications = args.replications
    report = run_experiment(config, workers=args.workers)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        write_records_csv(report, os.path.join(args.out_dir, "records.csv"))
        write_summary_json(report, os.path.join(args.out_dir, "summary.json"))
        out.write(_dump({"records": len(report.records), "failures": len(report.failures),
                         "out_dir": args.out_dir}) + "\n")
    else:
        out.write(summary_json(report) + "\n")
    return 0


def _budget_pair(args):
    """(n, k) from --n/--k or --ratio (n/k)."""
    if args.ratio is not None:
        if args.n is not None and args.k is not None:
            raise UsageError("give either --ratio or both --n and --k")
        return float(args.ratio), 1.0
    if args.n is None or args.k is None:
        raise UsageError("--n and --k are required unless --ratio is given")
    return args.n, args.k


def _rule_for(method: str, d: int, n, k, c_bar=1.0, epsilon=0.0, fourth_moment=None, pilot=None) -> ThresholdRule:
    method = ThresholdMethod(method)
    if method is ThresholdMethod.GAUSSIAN_EXACT:
        return gaussian_threshold(d, n, k, "exact", epsilon=epsilon)
    if method is ThresholdMethod.GAUSSIAN_CLOSED_FORM:
        return gaussian_threshold(d, n, k, "closed-form", c_bar=c_bar, epsilon=epsilon)
    if method is ThresholdMethod.CLT:
        if fourth_moment is None:
            raise UsageError("--method clt needs --fourth-moment")
        return clt_threshold(d, n, k, fourth_moment, epsilon=epsilon)
    if method is ThresholdMethod.EMPIRICAL:
        if pilot is None:
            raise UsageError("--method empirical needs --pilot-file")
        return solve_threshold_empirical(pilot, k, n)
    raise UsageError(f"method {method.value!r} is not available here")


def cmd_threshold(args, out) -> int:
    n, k = _budget_pair(args)
    pilot = read_matrix(args.pilot_file) if args.pilot_file else None
    rule = _rule_for(args.method, args.d, n, k, args.c_bar, args.epsilon, args.fourth_moment, pilot)
    out.write(_dump(rule.to_dict()) + "\n")
    return 0


def cmd_bounds(args, out) -> int:
    reports = []
    if args.upper_main:
        _need(args, "d", "k", "phi")
        reports.append(bnd.upper_bound_main(args.d, args.k, args.alpha, args.phi))
    if args.upper_gaussian:
        _need(args, "d", "k", "n")
        reports.append(bnd.upper_bound_gaussian(args.d, args.k, args.n, args.alpha))
    if args.upper_sparse:
        _need(args, "s", "k2", "n2")
        reports.append(bnd.upper_bound_sparse(args.s, args.k2, args.n2, args.alpha))
    if args.lower_gaussian:
        _need(args, "d", "k", "n")
        reports.append(bnd.lower_bound_gaussian(args.d, args.k, args.n, args.lower_alpha))
    if args.lower_clt:
        _need(args, "d", "k", "n", "gamma")
        reports.append(bnd.lower_bound_clt(args.d, args.k, args.n, args.gamma))
    if args.ridge:
        _need(args, "lambda_min", "R", "sigma", "d", "beta_norm_sq")
        reports.append(bnd.ridge_bound_report(args.lambda_min, args.R, args.sigma, args.d, args.beta_norm_sq))
    if not reports:
        raise UsageError("choose at least one bound flag")
    out.write(_dump([r.to_dict() for r in reports]) + "\n")
    return 0


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError("missing " + ", ".join("--" + m.replace("_", "-") for m in missing))


def cmd_select_stream(args, out, stdin) -> int:
    if args.gamma is None and args.n is None:
        raise UsageError("--n is required unless --gamma is given")
    if args.adaptive and (args.gamma is not None or args.n is None):
        raise UsageError("--adaptive needs --n and cannot be combined with --gamma")
    if args.sigma_file and args.online_sigma:
        raise UsageError("--sigma-file and --online-sigma are exclusive")
    whitener = None
    if args.sigma_file:
        whitener = whitening_from_covariance(read_matrix(args.sigma_file))
    pilot = None
    if args.pilot_file:
        pilot = read_matrix(args.pilot_file)
        if whitener is not None:
            pilot = whitener.apply(pilot)
    state = None
    step = step_adaptive if args.adaptive else step_fixed
    lineno = 0
    for line in stdin:
        lineno += 1
        if not line.strip():
            continue
        x = _parse_row(line, lineno)
        if state is None:
            d = x.shape[0]
            if args.gamma is not None:
                rule = ThresholdRule(np.ones(d), args.gamma,
                                     ThresholdMethod.ZERO if args.gamma == 0 else ThresholdMethod.EMPIRICAL,
                                     meta={"user_supplied": True})
            else:
                rule = _rule_for(args.method, d, args.n, args.k, args.c_bar, 0.0, args.fourth_moment, pilot)
            make = adaptive_selector if args.adaptive else fixed_selector
            state = make(rule, args.n, args.k, whitener, online=args.online_sigma,
                         refresh_every=args.refresh_every)
        if state.finished:
            xbar = x if state.whitener is None else state.whitener.apply(x)
            norm = math.sqrt(float(state.rule.weighted_sq_norm(xbar)))
            out.write(f"SKIP\t{norm!r}\tinf\t0\n")
        else:
            _, dec = step(state, x)
            out.write(f"{'SELECT' if dec.selected else 'SKIP'}\t{dec.weighted_norm!r}\t"
                      f"{dec.threshold_used!r}\t{int(dec.forced)}\n")
        out.flush()
    return 0


def cmd_dataset_check(args, out) -> int:
    data = read_csv_dataset(args.csv, args.response)
    train, _ = split_dataset(data, (data.n, 0), args.seed, "full")
    means = data.X.mean(axis=0)
    info = {
        "rows": data.n,
        "covariates": data.d,
        "columns": data.columns,
        "response": data.response_name,
        "covariate_means": means,
        "response_mean": float(data.y.mean()),
        "max_abs_mean_after_centering": float(np.max(np.abs(train.X.mean(axis=0)), initial=0.0)),
        "degenerate_columns": train.degenerate_columns,
    }
    if data.n > data.d:
        eig = eig_sym((train.X.T @ train.X) / data.n)
        info["covariance_condition_number"] = eig.condition_number
        try:
            fit_covariance_batch(train.X)
            info["whitenable"] = True
        except ActiveRegError:
            info["whitenable"] = False
    out.write(_dump(info) + "\n")
    return 0


# --- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="activereg", description="Online thresholding selection for linear regression.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    e = sub.add_parser("experiment", help="run a JSON-configured experiment")
    e.add_argument("--config", required=True, help="experiment config JSON")
    e.add_argument("--out-dir", help="directory for records.csv and summary.json")
    e.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    e.add_argument("--seed", type=int, help="seed (overrides the config; config default 0)")
    e.add_argument("--replications", type=int, help="replications (overrides the config)")

    methods = [m.value for m in ThresholdMethod if m is not ThresholdMethod.ZERO]
    t = sub.add_parser("threshold", help="print a threshold rule as JSON")
    t.add_argument("--d", type=int, required=True)
    t.add_argument("--n", type=int)
    t.add_argument("--k", type=int)
    t.add_argument("--ratio", type=float, help="n/k, instead of --n and --k")
    t.add_argument("--method", choices=methods, default="gaussian-exact")
    t.add_argument("--c-bar", type=float, default=1.0, help="closed-form constant")
    t.add_argument("--epsilon", type=float, default=0.0, help="budget inflation")
    t.add_argument("--fourth-moment", type=float, help="E[x^4] of white coordinates (clt)")
    t.add_argument("--pilot-file", help="whitened pilot rows (empirical)")

    b = sub.add_parser("bounds", help="print bound reports as JSON")
    for flag in ("upper-main", "upper-gaussian", "upper-sparse", "lower-gaussian", "lower-clt", "ridge"):
        b.add_argument("--" + flag, action="store_true")
    for name, typ in (("d", int), ("k", int), ("n", int), ("s", int), ("k2", int), ("n2", int),
                      ("phi", float), ("gamma", float), ("lambda-min", float), ("R", float),
                      ("sigma", float), ("beta-norm-sq", float)):
        b.add_argument("--" + name, type=typ)
    b.add_argument("--alpha", type=float, default=bnd.DEFAULT_ALPHA, help="upper-bound alpha (default 0.05)")
    b.add_argument("--lower-alpha", type=float,
                   help="high-probability level for --lower-gaussian (expectation form when omitted)")

    s = sub.add_parser("select-stream", help="filter rows from stdin")
    s.add_argument("--k", type=int, required=True, help="label budget")
    s.add_argument("--n", type=int, help="stream length (required unless --gamma)")
    s.add_argument("--gamma", type=float, help="fixed threshold on the unit-weight norm")
    s.add_argument("--method", choices=methods, default="gaussian-exact")
    s.add_argument("--c-bar", type=float, default=1.0)
    s.add_argument("--fourth-moment", type=float)
    s.add_argument("--pilot-file", help="raw pilot rows for --method empirical")
    s.add_argument("--sigma-file", help="known covariance matrix")
    s.add_argument("--online-sigma", action="store_true", help="estimate the covariance from the stream")
    s.add_argument("--refresh-every", type=int, default=1, help="rows between online re-whitenings")
    s.add_argument("--adaptive", action="store_true", help="re-aim the threshold at the remaining budget")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help="seed for randomized choices (default 0; current methods are deterministic)")

    c = sub.add_parser("dataset-check", help="validate a CSV dataset")
    c.add_argument("--csv", required=True)
    c.add_argument("--response", required=True)
    c.add_argument("--seed", type=int, default=DEFAULT_SEED)
    return p


def main(argv=None, stdin=None, stdout=None, stderr=None) -> int:
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(stderr)
            return 1
        if args.command == "experiment":
            return cmd_experiment(args, stdout)
        if args.command == "threshold":
            return cmd_threshold(args, stdout)
        if args.command == "bounds":
            return cmd_bounds(args, stdout)
        if args.command == "select-stream":
            return cmd_select_stream(args, stdout, stdin)
        return cmd_dataset_check(args, stdout)
    except UsageError as exc:
        stderr.write(f"{exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    except (ActiveRegError, ArithmeticError, ValueError, OSError) as exc:
        stderr.write(_dump({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
