"""Command-line front end.

Every report embeds the resolved run configuration (seed and grids included)
and the SHA-256 of each input file, so ``kellycap --config REPORT`` repeats a
run byte for byte. CSV exports carry the same data on leading ``#`` lines.

Exit codes
----------
optimize, capacity, waterfill, fvsi, generate
    0 success, 2 invalid input, 3 solver failure.
order
    0 order holds, 1 order fails, 2 invalid input, 3 solver failure.
sitest
    0 si_not_useful, 1 si_useful, 2 invalid input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import warnings

import numpy as np

from ._validation import InvalidInputError, dec
from .channel import (
    FractionalKellySpec,
    QuadratureError,
    capacity_sweep,
    solve_fractional_kelly,
    water_fill,
)
from .growth import (
    LN2,
    ConvergenceWarning,
    UnboundedGrowthError,
    solve_log_optimal,
    solve_log_optimal_short,
    solve_utility_optimal,
)
from .market import (
    ExponentialGains,
    empirical_market,
    gen_horse_race,
    gen_independent_si,
    gen_rayleigh_simo,
    load_csv,
    quantize_exponential,
    winner_si,
)
from .orders import OrderSolverError, vector_order_fixed_b, vector_order_optimized
from .si_test import SI_USEFUL, run_si_test
from .side_info import JointMarket, SliceInfeasibleError, fvsi_report

SUBCOMMANDS = ("optimize", "capacity", "waterfill", "order", "fvsi", "sitest", "generate")
EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3
DEFAULT_RHO_GRID = "logspace:-3:3:61"
_NOT_CONFIG = ("out", "config", "func")


# ---------------------------------------------------------------- parsing helpers


def _floats(text, name):
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise InvalidInputError(f"{name}: expected comma-separated reals, got {text!r}") from None
    if not vals:
        raise InvalidInputError(f"{name} is empty")
    return np.array(vals)


def parse_rho_grid(text):
    """``logspace:LO:HI:N``, ``linspace:LO:HI:N`` or a comma list of reals."""
    text = str(text).strip()
    if text.startswith(("logspace:", "linspace:")):
        kind, *parts = text.split(":")
        if len(parts) != 3:
            raise InvalidInputError(f"bad rho grid {text!r}; expected {kind}:LO:HI:N")
        try:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise InvalidInputError(f"bad rho grid {text!r}") from None
        if n < 1:
            raise InvalidInputError("rho grid needs at least one point")
        grid = np.logspace(lo, hi, n) if kind == "logspace" else np.linspace(lo, hi, n)
    else:
        grid = _floats(text, "rho grid")
    if np.any(~np.isfinite(grid)) or np.any(grid < 0):
        raise InvalidInputError("rho grid values must be finite and nonnegative")
    return grid


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _read_csv(path, si_column=None):
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from None
    # drop embedded config lines written by ``generate``
    body = "".join(ln for ln in text.splitlines(keepends=True) if not ln.startswith("#"))
    return load_csv(io.StringIO(body), si_column)


def _is_exp(spec):
    return spec is not None and str(spec).startswith("exp:")


def _exp_means(spec):
    return _floats(str(spec)[4:], "exponential means")


class _Inputs:
    """Loads ``--input``/``--input2`` and records their hashes."""

    def __init__(self):
        self.hashes = {}

    def samples(self, args, which="input", need_si=False):
        path = getattr(args, which)
        if path is not None:
            if _is_exp(path):
                raise InvalidInputError(f"--{which} exp:MEAN is only valid for capacity and order")
            si_col = getattr(args, "si_column", None)
            if need_si and si_col is None:
                raise InvalidInputError("this subcommand needs SI labels; pass --si-column")
            s = _read_csv(path, si_col)
            self.hashes[which] = {"path": path, "sha256": _sha256(path)}
            return s
        if which == "input" and getattr(args, "generator", None):
            s = _generate(args)
            if need_si and not s.has_si:
                raise InvalidInputError("this subcommand needs SI labels; pass --si independent|winner")
            return s
        raise InvalidInputError(f"missing --{which}" + (" or --generator" if which == "input" else ""))

    def market(self, args, which="input"):
        """Empirical market, or a quantized exponential law for ``exp:MEAN``."""
        spec = getattr(args, which)
        if _is_exp(spec):
            means = _exp_means(spec)
            if means.size != 1:
                raise InvalidInputError("exp:MEAN in order comparisons must be a single branch")
            if args.atoms < 1:
                raise InvalidInputError("--atoms must be at least 1")
            return quantize_exponential(float(means[0]), args.atoms)
        return empirical_market(self.samples(args, which).without_si())

    def gains(self, args):
        if _is_exp(args.input):
            return ExponentialGains(_exp_means(args.input))
        return empirical_market(self.samples(args).without_si())


def _generate(args):
    if args.n_samples is None or args.n_samples < 1:
        raise InvalidInputError("generator needs --n-samples >= 1")
    ss_x, ss_s = np.random.SeedSequence(args.seed).spawn(2)
    if args.generator == "horse-race":
        if args.probs is None:
            raise InvalidInputError("horse-race generator needs --probs")
        p = _floats(args.probs, "probs")
        o = _floats(args.payoffs, "payoffs") if args.payoffs else np.full(p.size, float(p.size))
        s = gen_horse_race(p.size, p, o, args.n_samples, ss_x)
    else:
        if args.means is None:
            raise InvalidInputError("rayleigh generator needs --means")
        mu = _floats(args.means, "means")
        s = gen_rayleigh_simo(mu.size, mu, args.n_samples, ss_x)
    if args.si == "independent":
        q = _floats(args.si_probs, "si-probs") if args.si_probs else np.full(2, 0.5)
        s = s.with_si(gen_independent_si(args.n_samples, q, ss_s), q.size)
    elif args.si == "winner":
        s = s.with_si(winner_si(s), s.dim)
    return s


# ---------------------------------------------------------------- output


def _config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def _emit_json(args, inputs, result):
    doc = {"subcommand": args.subcommand, "config": _config(args),
           "inputs": inputs.hashes, "result": result}
    _write(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _emit_csv(args, inputs, header, rows):
    buf = io.StringIO()
    buf.write("# config=" + json.dumps(_config(args), sort_keys=True) + "\n")
    buf.write("# inputs=" + json.dumps(inputs.hashes, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else dec(v) for v in r])
    _write(args.out, buf.getvalue())


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _note(args, msg):
    # stdout carries the report itself, so human-readable lines go to stderr
    print(msg, file=sys.stderr if args.out in (None, "-") else sys.stdout)


def _nats_bits(name, v):
    return f"{name}: {v:.10g} nats ({v / LN2:.10g} bits)"


# ---------------------------------------------------------------- subcommands


def cmd_optimize(args, inputs):
    market = inputs.market(args)
    if args.tol <= 0 or args.max_iter < 1:
        raise InvalidInputError("tol must be positive and max-iter at least 1")
    if args.lam is not None:
        if not 0 <= args.lam <= 1:
            raise InvalidInputError("--lambda must lie in [0, 1]")
        rep = solve_fractional_kelly(market, FractionalKellySpec(args.lam), args.tol, args.max_iter)
    elif args.variant == "short":
        rep = solve_log_optimal_short(market, args.tol, args.max_iter)
    elif args.alpha is not None:
        rep = solve_utility_optimal(market, args.alpha, args.tol, args.max_iter)
    else:
        rep = solve_log_optimal(market, args.tol, args.max_iter)
    result = rep.to_dict()
    if args.format == "csv":
        _emit_csv(args, inputs, ["asset", "weight"],
                  [[str(m), w] for m, w in enumerate(rep.weights)])
    else:
        _emit_json(args, inputs, result)
    _note(args, _nats_bits("growth rate", rep.growth_rate))
    return EXIT_OK


def cmd_capacity(args, inputs):
    gains = inputs.gains(args)
    grid = np.array([args.rho]) if args.rho is not None else parse_rho_grid(args.rho_grid)
    alloc = _floats(args.alloc, "alloc") if args.alloc else None
    if alloc is not None and alloc.size != gains.dim:
        raise InvalidInputError(f"--alloc has {alloc.size} entries for {gains.dim} branches")
    rows = capacity_sweep(gains, grid, alloc, args.tol, args.max_iter)
    if args.format == "csv":
        header = ["rho", "capacity", "capacity_bits"] + [f"a{m}" for m in range(gains.dim)]
        _emit_csv(args, inputs, header,
                  [[r.rho, r.capacity, r.capacity_bits, *r.allocation.fractions] for r in rows])
    else:
        _emit_json(args, inputs, {"gains": gains.to_dict() if _is_exp(args.input) else None,
                                  "sweep": [r.to_dict() for r in rows]})
    if len(rows) == 1:
        _note(args, _nats_bits("capacity", rows[0].capacity))
    return EXIT_OK


def cmd_waterfill(args, inputs):
    if args.gains is None:
        raise InvalidInputError("waterfill needs --gains")
    g = _floats(args.gains, "gains")
    rho = 1.0 if args.rho is None else args.rho
    res = water_fill(g, rho)
    if args.format == "csv":
        _emit_csv(args, inputs, ["branch", "gain", "allocation"],
                  [[str(m), g[m], a] for m, a in enumerate(res.allocation.fractions)])
    else:
        _emit_json(args, inputs, res.to_dict())
    _note(args, _nats_bits("capacity", res.capacity))
    return EXIT_OK


def cmd_order(args, inputs):
    X = inputs.market(args, "input")
    Y = inputs.market(args, "input2")
    grid = parse_rho_grid(args.rho_grid)
    if args.optimized:
        v = vector_order_optimized(X, Y, args.criterion, grid, solver_tol=args.tol,
                                   max_iter=args.max_iter)
    else:
        if args.b_mesh < 1:
            raise InvalidInputError("--b-mesh must be at least 1")
        v = vector_order_fixed_b(X, Y, args.criterion, rho_grid=grid, b_mesh=args.b_mesh)
    if args.format == "csv":
        _emit_csv(args, inputs, ["rho", "lhs", "rhs"],
                  [[str(r["rho"]) if isinstance(r["rho"], str) else r["rho"], r["lhs"], r["rhs"]]
                   for r in v.rows])
    else:
        _emit_json(args, inputs, v.to_dict())
    _note(args, f"order {args.criterion}: {'holds' if v.holds else 'fails'} "
                f"(worst margin {v.worst_margin:.6g})")
    return EXIT_OK if v.holds else EXIT_FAIL


def cmd_fvsi(args, inputs):
    s = inputs.samples(args, need_si=True)
    rep = fvsi_report(JointMarket(s), args.tol, args.max_iter)
    if args.format == "csv":
        _emit_csv(args, inputs, ["quantity", "nats", "bits"],
                  [["v", rep.v_clamped, rep.v_clamped / LN2],
                   ["mi_bound", rep.mi_bound, rep.mi_bound / LN2],
                   ["entropy_bound", rep.entropy_bound, rep.entropy_bound / LN2]])
    else:
        _emit_json(args, inputs, rep.to_dict())
    _note(args, _nats_bits("value of SI", rep.v_clamped))
    return EXIT_OK


def cmd_sitest(args, inputs):
    s = inputs.samples(args, need_si=True)
    variant = args.variant or "log"
    rep = run_si_test(s, args.target_fa, variant=variant, alpha=args.alpha, split=args.split,
                      tol=args.tol, max_iter=args.max_iter)
    if args.format == "csv":
        rows = [[str(m), str(k), rep.components[i, j]]
                for i, m in enumerate(rep.active) for j, k in enumerate(rep.states)]
        _emit_csv(args, inputs, ["asset", "state", "component"], rows)
    else:
        _emit_json(args, inputs, rep.to_dict())
    _note(args, f"T = {rep.T:.6g}, tau = {rep.tau:.6g}: {rep.decision}")
    return EXIT_FAIL if rep.decision == SI_USEFUL else EXIT_OK


def cmd_generate(args, inputs):
    if not args.generator:
        raise InvalidInputError("generate needs --generator")
    s = _generate(args)
    header = [f"x{m}" for m in range(s.dim)] + (["si"] if s.has_si else [])
    rows = []
    for n in range(s.N):
        r = list(s.samples[n])
        if s.has_si:
            r.append(str(int(s.si_labels[n])))
        rows.append(r)
    _emit_csv(args, inputs, header, rows)
    return EXIT_OK


# ---------------------------------------------------------------- argparse


def _common(p):
    p.add_argument("--config", help="re-run from a report (JSON or CSV) written earlier")
    p.add_argument("--out", help="output path; stdout when omitted")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None,
                   help="generator seed; drawn and recorded when omitted")


def _input(p):
    p.add_argument("--input", help="CSV of price relatives (header row first)")
    p.add_argument("--generator", choices=("horse-race", "rayleigh"))
    p.add_argument("--probs", help="horse-race win probabilities, comma separated")
    p.add_argument("--payoffs", help="horse-race payoffs; fair odds (M each) by default")
    p.add_argument("--means", help="rayleigh mean branch gains")
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--si", choices=("none", "independent", "winner"), default="none")
    p.add_argument("--si-probs", help="law of independent SI labels")
    p.add_argument("--si-column", help="header name of the SI label column")


def build_parser():
    parser = argparse.ArgumentParser(prog="kellycap", description=__doc__.split("\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="re-run from a report (JSON or CSV) written earlier; "
                        "other flags, --out included, may follow")
    sub = parser.add_subparsers(dest="subcommand")
    subs = {}

    p = subs["optimize"] = sub.add_parser("optimize", help="growth-optimal portfolio")
    _common(p)
    _input(p)
    p.add_argument("--variant", choices=("long", "short"), default="long")
    p.add_argument("--alpha", type=float, default=None, help="power-utility exponent")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="cash fraction for fractional Kelly")
    p.set_defaults(func=cmd_optimize)

    p = subs["capacity"] = sub.add_parser("capacity", help="optimal power allocation and capacity")
    _common(p)
    _input(p)
    p.add_argument("--rho", type=float, default=None, help="single SNR; overrides --rho-grid")
    p.add_argument("--rho-grid", default=DEFAULT_RHO_GRID)
    p.add_argument("--alloc", help="evaluate this fixed allocation instead of optimizing")
    p.set_defaults(func=cmd_capacity)

    p = subs["waterfill"] = sub.add_parser("waterfill", help="water-filling for a fair horse race")
    _common(p)
    p.add_argument("--gains", help="branch gains, comma separated")
    p.add_argument("--rho", type=float, default=None)
    p.set_defaults(func=cmd_waterfill)

    p = subs["order"] = sub.add_parser("order", help="check a stochastic order between two markets")
    _common(p)
    _input(p)
    p.add_argument("--input2", help="second market (CSV or exp:MEAN)")
    p.add_argument("--criterion", choices=("laplace", "capacity", "growth"), default="laplace")
    p.add_argument("--rho-grid", default=DEFAULT_RHO_GRID)
    p.add_argument("--b-mesh", type=int, default=20)
    p.add_argument("--optimized", action="store_true", help="compare optimized values")
    p.add_argument("--atoms", type=int, default=2000, help="atoms for exp:MEAN quantization")
    p.set_defaults(func=cmd_order)

    p = subs["fvsi"] = sub.add_parser("fvsi", help="financial value of side information")
    _common(p)
    _input(p)
    p.set_defaults(func=cmd_fvsi)

    p = subs["sitest"] = sub.add_parser("sitest", help="test whether SI is useful")
    _common(p)
    _input(p)
    p.add_argument("--target-fa", type=float, default=0.05)
    p.add_argument("--variant", choices=("log", "short", "general"), default="log")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--split", action="store_true", help="fit b* and test on disjoint halves")
    p.set_defaults(func=cmd_sitest)

    p = subs["generate"] = sub.add_parser("generate", help="write synthetic samples as CSV")
    _common(p)
    _input(p)
    p.set_defaults(func=cmd_generate, format="csv")
    return parser, subs


def load_config(path):
    """Run configuration and recorded input hashes from a JSON report or CSV export."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from None
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return doc["subcommand"], doc["config"], doc.get("inputs", {})
    cfg = inputs = None
    for ln in text.splitlines():
        if ln.startswith("# config="):
            cfg = json.loads(ln[len("# config="):])
        elif ln.startswith("# inputs="):
            inputs = json.loads(ln[len("# inputs="):])
    if cfg is None:
        raise InvalidInputError(f"{path} carries no embedded config")
    return cfg["subcommand"], cfg, inputs or {}


def _parse(argv):
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    recorded = {}
    if known.config:
        name, cfg, recorded = load_config(known.config)
        if name not in subs:
            raise InvalidInputError(f"unknown subcommand {name!r} in {known.config}")
        given = [a for a in argv if a in SUBCOMMANDS]
        if given and given[0] != name:
            raise InvalidInputError(f"{known.config} records a {name!r} run, not {given[0]!r}")
        subs[name].set_defaults(**{k: v for k, v in cfg.items() if k != "subcommand"})
        if not given:
            argv = [name] + argv
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_help(sys.stderr)
        raise InvalidInputError("missing subcommand")
    return args, recorded


def _check_recorded(recorded, args):
    for which, rec in recorded.items():
        path = getattr(args, which, None)
        if path == rec.get("path") and _sha256(path) != rec.get("sha256"):
            raise InvalidInputError(f"{path} changed since the report was written (sha256 mismatch)")


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, recorded = _parse(argv)
        if args.seed is None:
            # record the drawn seed so the report is reproducible
            args.seed = int(np.random.SeedSequence().entropy % 2**63)
        _check_recorded(recorded, args)
        with warnings.catch_warnings():
            warnings.simplefilter("error", ConvergenceWarning)
            return args.func(args, _Inputs())
    except (ConvergenceWarning, UnboundedGrowthError, QuadratureError, OrderSolverError,
            SliceInfeasibleError) as exc:
        print(f"kellycap: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"kellycap: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
