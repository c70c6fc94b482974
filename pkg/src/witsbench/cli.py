"""Command-line entry point: ``witsbench <command> [options]``.

Every command that writes files also writes ``<command>.manifest`` next to
them; ``witsbench replay <manifest>`` reruns the exact command line, and the
same options may be supplied as ``key=value`` lines through ``--config``
(explicit flags win).

Exit codes: 0 success, 1 validation failure, 2 usage or parse error,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import math
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._quadrature import QuadratureError
from .costs import QuadratureConfig, closed_form_cost, gaussian_envelope, linear_cost
from .firstorder import slope_diagnostic
from .io import (
    RunManifest,
    StrategyParseError,
    csv_text,
    density_text,
    fmt,
    format_strategy,
    frontier_csv,
    parse_key_values,
    read_manifest,
    read_strategy,
    strategy_from_mapping,
    write_atomic,
)
from .montecarlo import SimConfig, simulate
from .optimizer import (
    OptimizerOptions,
    SweepOptions,
    WeightedObjective,
    optimize_at,
    optimize_at_power,
    parse_omega_grid,
    sweep,
)
from .strategies import Bpsk, Linear, Lope, ProblemConfig, TwoPoint, Zero, lope_params_of, sampled_state_density

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2, 3

log = logging.getLogger("witsbench")


class UsageError(Exception):
    pass


def _count(text):
    """Integer that may be written in float notation, e.g. 1e6."""
    value = float(text)
    if not value.is_integer() or value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(value)


def _grid(text):
    try:
        if ":" in text:
            start, end, count = text.split(":")
            return np.linspace(float(start), float(end), int(count))
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use start:end:count or a comma list") from None


def _add_problem(p):
    g = p.add_argument_group("problem")
    g.add_argument("--Q", type=float, default=1.0, help="source variance")
    g.add_argument("--N", type=float, default=0.1, help="channel noise variance")


def _add_quadrature(p):
    g = p.add_argument_group("quadrature")
    g.add_argument("--abs-tol", type=float, default=1e-10)
    g.add_argument("--rel-tol", type=float, default=1e-8)
    g.add_argument("--tail-sigmas", type=float, default=10.0)
    g.add_argument("--max-subdivisions", type=int, default=2000)


def _add_strategy(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--zero", action="store_true", help="no control")
    g.add_argument("--linear", type=float, metavar="P", help="best linear policy at power P")
    g.add_argument("--bpsk", type=float, metavar="A", help="u1 = -A sign(x0)")
    g.add_argument("--two-point", type=float, metavar="A", help="u1 = A sign(x0) - x0")
    g.add_argument("--lope", nargs="+", metavar="KEY=LIST", help="e.g. --lope a=0.2,0.5 B=0,0.8")
    g.add_argument("--strategy-file", type=Path, help="key=value strategy file")


def _add_sim(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--samples", type=_count, default=1_000_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--batch", type=_count, default=100_000)
    g.add_argument("--antithetic", action="store_true")


def _add_optimizer(p):
    g = p.add_argument_group("optimizer")
    g.add_argument("--restarts", type=int, default=8)
    g.add_argument("--max-iters", type=int, default=4000)
    g.add_argument("--x-tol", type=float, default=1e-7)
    g.add_argument("--f-tol", type=float, default=1e-12)


def _add_common(p, out=True):
    p.add_argument("--config", type=Path, help="key=value file of option defaults")
    p.add_argument("--threads", type=int, default=None, help="worker cap (env WITSBENCH_THREADS)")
    if out:
        p.add_argument("--out", type=Path, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="witsbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="closed-form (P, S) of a strategy")
    _add_strategy(p)
    _add_problem(p)
    _add_quadrature(p)
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo (P, S) of a strategy")
    _add_strategy(p)
    _add_problem(p)
    _add_sim(p)
    p.add_argument("--decoder", choices=["exact_mmse", "identity"], default="exact_mmse")
    _add_common(p)

    p = sub.add_parser("validate", help="closed form against Monte Carlo")
    _add_strategy(p)
    _add_problem(p)
    _add_quadrature(p)
    _add_sim(p)
    p.add_argument("--z-max", type=float, default=4.0)
    _add_common(p)

    p = sub.add_parser("optimize", help="optimize one LoPE controller")
    p.add_argument("--n", type=int, required=False, default=4)
    target = p.add_mutually_exclusive_group(required=False)
    target.add_argument("--omega", type=float)
    target.add_argument("--power", type=float)
    _add_problem(p)
    _add_quadrature(p)
    _add_optimizer(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="trace the power-estimation frontier over omega")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--omegas", default="0:1:101", help="start:end:count or comma list")
    p.add_argument("--refine-rounds", type=int, default=2)
    p.add_argument("--max-power-gap", type=float, default=None)
    p.add_argument("--density-omegas", default="", help="omegas whose state density is written as .dat")
    p.add_argument("--x-step", type=float, default=2e-4)
    p.add_argument("--half-width", type=float, default=None)
    _add_problem(p)
    _add_quadrature(p)
    _add_optimizer(p)
    _add_common(p)

    p = sub.add_parser("baselines", help="linear and Gaussian-envelope costs on a P grid")
    p.add_argument("--P-grid", type=_grid, default=None, help="start:end:count or comma list (default 0:Q:101)")
    p.add_argument("--grid-size", type=int, default=10_000)
    _add_problem(p)
    _add_common(p)

    p = sub.add_parser("foc", help="first-order (low-power slope) diagnostic")
    p.add_argument("--tag", choices=["linear", "bpsk"], required=False, default="linear")
    p.add_argument("--P-grid", type=_grid, default=None, help="decreasing powers (default 1e-2,1e-3,...,1e-6)")
    _add_problem(p)
    _add_quadrature(p)
    _add_common(p)

    p = sub.add_parser("density", help="write the state density f_X1 as a two-column .dat")
    _add_strategy(p, required=False)
    p.add_argument("--n", type=int, default=None, help="optimize an n-step controller first")
    target = p.add_mutually_exclusive_group()
    target.add_argument("--omega", type=float)
    target.add_argument("--power", type=float)
    p.add_argument("--x-step", type=float, default=2e-4)
    p.add_argument("--half-width", type=float, default=None)
    _add_problem(p)
    _add_quadrature(p)
    _add_optimizer(p)
    _add_common(p)

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, help="override the output directory")
    return parser


def _apply_config(parser, argv):
    """Turn --config key=value lines into parser defaults for the chosen subcommand."""
    if "--config" not in argv:
        return
    path = Path(argv[argv.index("--config") + 1])
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = subparsers.choices.get(command)
    if sub is None:
        return
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value, line, col in parse_key_values(path.read_text()):
        dest = key.removeprefix("config.").replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            continue
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = value.lower() in ("1", "true", "yes", "on")
        elif action.nargs == "+":
            defaults[dest] = value.split()
        elif value == "" or value == "None":
            defaults[dest] = None
        else:
            try:
                defaults[dest] = action.type(value) if action.type else value
            except (ValueError, argparse.ArgumentTypeError):
                raise StrategyParseError(f"bad value for {key}: {value!r}", line, col) from None
    sub.set_defaults(**defaults)
    # a required strategy may now come from the config file
    if any(defaults.get(k) for k in ("zero", "linear", "bpsk", "two_point", "lope", "strategy_file")):
        for group in sub._mutually_exclusive_groups:
            group.required = False


def _strategy(args):
    if getattr(args, "strategy_file", None):
        return read_strategy(args.strategy_file)
    if getattr(args, "zero", False):
        return Zero()
    if getattr(args, "linear", None) is not None:
        return Linear(args.linear)
    if getattr(args, "bpsk", None) is not None:
        return Bpsk(args.bpsk)
    if getattr(args, "two_point", None) is not None:
        return TwoPoint(args.two_point)
    if getattr(args, "lope", None):
        fields = {"kind": "lope"}
        where = {"kind": (1, 1)}
        col = 1
        for tok in args.lope:
            if "=" not in tok:
                raise StrategyParseError(f"expected key=list, got {tok!r}", 1, col)
            key, value = tok.split("=", 1)
            fields[key] = value
            where[key] = (1, col + len(key) + 1)
            col += len(tok) + 1
        return strategy_from_mapping(fields, where)
    return None


def _problem(args):
    return ProblemConfig(args.Q, args.N)


def _quad(args):
    return QuadratureConfig(args.abs_tol, args.rel_tol, args.tail_sigmas, args.max_subdivisions)


def _optimizer_options(args, init=None):
    return OptimizerOptions(restarts=args.restarts, max_iters=args.max_iters, x_tol=args.x_tol,
                            f_tol=args.f_tol, init=init, threads=args.threads)


def _strategy_label(s):
    return format_strategy(s).strip().replace("\n", " ")


def cmd_eval(args, outputs):
    s = _strategy(args)
    point = closed_form_cost(s, _problem(args), _quad(args))
    print(f"P={fmt(point.P)}")
    print(f"S={fmt(point.S)}")
    print(f"quad_error_estimate={fmt(point.quad_error_estimate)}")
    if args.out:
        outputs["eval.csv"] = eval_csv(point)
    return EXIT_OK


def eval_csv(point):
    return csv_text(["P", "S", "quad_error_estimate", "method"],
                    [[point.P, point.S, point.quad_error_estimate, point.method]])


def cmd_simulate(args, outputs):
    s = _strategy(args)
    sim = SimConfig(args.samples, args.seed, args.batch, args.antithetic)
    res = simulate(s, _problem(args), sim, decoder=args.decoder, threads=args.threads)
    print(f"P_hat={fmt(res.P_hat)} P_stderr={fmt(res.P_stderr)}")
    print(f"S_hat={fmt(res.S_hat)} S_stderr={fmt(res.S_stderr)}")
    if args.out:
        outputs["simulate.csv"] = csv_text(
            ["P_hat", "P_stderr", "S_hat", "S_stderr", "samples", "seed"],
            [[res.P_hat, res.P_stderr, res.S_hat, res.S_stderr, res.samples, res.seed]],
        )
    return EXIT_OK


def _z(closed, hat, se):
    if se == 0.0:
        # deterministic quantity; allow only rounding differences
        return 0.0 if abs(hat - closed) <= 1e-12 * max(1.0, abs(closed)) else math.inf
    return (hat - closed) / se


def cmd_validate(args, outputs):
    s = _strategy(args)
    cfg = _problem(args)
    point = closed_form_cost(s, cfg, _quad(args))
    sim = SimConfig(args.samples, args.seed, args.batch, args.antithetic)
    res = simulate(s, cfg, sim, threads=args.threads)
    rows = [
        ["P", point.P, res.P_hat, res.P_stderr, _z(point.P, res.P_hat, res.P_stderr)],
        ["S", point.S, res.S_hat, res.S_stderr, _z(point.S, res.S_hat, res.S_stderr)],
    ]
    print(f"{'cost':<5}{'closed_form':>22}{'monte_carlo':>22}{'stderr':>14}{'z':>9}")
    for name, closed, hat, se, z in rows:
        print(f"{name:<5}{closed:>22.15g}{hat:>22.15g}{se:>14.4g}{z:>9.3f}")
    ok = all(abs(r[4]) <= args.z_max for r in rows)
    print("validation " + ("passed" if ok else "FAILED") + f" (|z| <= {args.z_max:g})")
    if args.out:
        outputs["validate.csv"] = "schema,1\ncost,closed_form,monte_carlo,stderr,z\n" + "".join(
            f"{r[0]}," + ",".join(fmt(v) for v in r[1:]) + "\n" for r in rows
        )
    return EXIT_OK if ok else EXIT_VALIDATION


def _optimize(args):
    cfg = _problem(args)
    opts = _optimizer_options(args)
    if args.power is not None:
        return optimize_at_power(args.n, args.power, cfg, _quad(args), opts)
    if args.omega is None:
        raise UsageError("one of --omega or --power is required")
    return optimize_at(WeightedObjective(args.omega, args.n, cfg, _quad(args)), opts)


def cmd_optimize(args, outputs):
    rec = _optimize(args)
    s = Lope(rec.params)
    print(_strategy_label(s))
    print(f"P={fmt(rec.point.P)} S={fmt(rec.point.S)} objective={fmt(rec.objective_value)} "
          f"converged={int(rec.converged)}")
    if args.out:
        outputs["strategy.txt"] = format_strategy(s)
        outputs["optimize.csv"] = csv_text(
            ["omega", "P", "S", "objective", "converged"],
            [[rec.omega, rec.point.P, rec.point.S, rec.objective_value, rec.converged]],
        )
    return EXIT_OK


def _density_dat(params, cfg, args):
    x, f = sampled_state_density(params, cfg, args.half_width, args.x_step)
    return density_text(x, f)


def cmd_sweep(args, outputs):
    cfg = _problem(args)
    omegas = parse_omega_grid(args.omegas)
    opts = SweepOptions(_optimizer_options(args), args.refine_rounds, args.max_power_gap)
    result = sweep(args.n, cfg, omegas, opts, _quad(args))
    outputs["frontier.csv"] = frontier_csv(result)
    nondominated = result.pareto()
    print(f"{len(result)} points, {len(nondominated)} non-dominated, "
          f"{sum(not r.converged for r in result)} not converged")
    if args.density_omegas:
        for w in parse_omega_grid(args.density_omegas):
            rec = min(result.records, key=lambda r: (abs(r.omega - w), r.omega))
            outputs[f"fX1_omega={fmt(float(w))}.dat"] = _density_dat(rec.params, cfg, args)
    return EXIT_OK


def cmd_baselines(args, outputs):
    cfg = _problem(args)
    grid = args.P_grid if args.P_grid is not None else np.linspace(0.0, cfg.Q, 101)
    rows = [[P, linear_cost(P, cfg), gaussian_envelope(P, cfg, args.grid_size)] for P in grid]
    outputs["baselines.csv"] = csv_text(["P", "S_linear", "S_gaussian"], rows)
    for row in rows[:: max(1, len(rows) // 10)]:
        print(" ".join(f"{v:.6g}" for v in row))
    return EXIT_OK


def cmd_foc(args, outputs):
    grid = args.P_grid if args.P_grid is not None else np.array([1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    qc = None if args.tag == "linear" else QuadratureConfig(
        min(args.abs_tol, 1e-13), min(args.rel_tol, 1e-12), args.tail_sigmas, args.max_subdivisions)
    diag = slope_diagnostic(args.tag, _problem(args), grid, qc)
    ratios = np.concatenate([[math.nan], diag.divergence_ratio])
    rows = [[P, s, r] for P, s, r in zip(diag.P_grid, diag.slopes, ratios)]
    outputs["foc.csv"] = csv_text(["P", "slope", "ratio"], rows)
    for P, s, r in rows:
        print(f"P={P:.3g} slope={s:.6g} ratio={r:.4g}")
    print(f"divergence certification {'passed' if diag.certified else 'failed'} for {args.tag}")
    return EXIT_OK


def cmd_density(args, outputs):
    cfg = _problem(args)
    s = _strategy(args)
    if s is None:
        if args.n is None:
            raise UsageError("density needs a strategy or --n with --omega/--power")
        rec = _optimize(args)
        params = rec.params
        print(f"optimized: P={fmt(rec.point.P)} S={fmt(rec.point.S)}")
    else:
        params = lope_params_of(s)
        if params is None:
            raise UsageError(f"density is defined for LoPE-family strategies, not {s.kind}")
    text = _density_dat(params, cfg, args)
    outputs["fX1.dat"] = text
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "baselines": cmd_baselines,
    "foc": cmd_foc,
    "density": cmd_density,
}


def _resolved(args):
    skip = {"command", "config", "out", "verbose"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        if isinstance(v, np.ndarray):
            v = ",".join(fmt(x) for x in v)
        elif isinstance(v, list):
            v = " ".join(str(x) for x in v)
        out[k] = "" if v is None else v
    return out


def replay(args):
    try:
        manifest = read_manifest(args.manifest)
    except (OSError, StrategyParseError) as exc:
        print(f"witsbench: cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if "argv" not in manifest:
        print(f"witsbench: {args.manifest} has no argv entry", file=sys.stderr)
        return EXIT_USAGE
    argv = shlex.split(manifest["argv"])
    if args.out is not None:
        if "--out" in argv:
            argv[argv.index("--out") + 1] = str(args.out)
        else:
            argv += ["--out", str(args.out)]
    return main(argv)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, StrategyParseError) as exc:
        print(f"witsbench: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "replay":
        return replay(args)

    outputs = {}
    start = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, outputs)
    except StrategyParseError as exc:
        print(f"witsbench: parse error at {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"witsbench: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QuadratureError as exc:
        print(f"witsbench: {exc}", file=sys.stderr)
        print(f"partial_estimate={fmt(exc.estimate)} error_estimate={fmt(exc.error)}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except ValueError as exc:
        print(f"witsbench: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = getattr(args, "out", None)
    if out_dir is not None and outputs:
        try:
            paths = []
            for name, text in outputs.items():
                path = out_dir / name
                write_atomic(path, text)
                paths.append(path)
            manifest = RunManifest(
                command=args.command, argv=argv, config=_resolved(args), version=__version__,
                seed=getattr(args, "seed", None), outputs=[p.name for p in paths],
                duration_s=time.perf_counter() - start,
            )
            write_atomic(out_dir / f"{args.command}.manifest", manifest.text())
        except OSError as exc:
            print(f"witsbench: cannot write outputs: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    return code


if __name__ == "__main__":
    sys.exit(main())
