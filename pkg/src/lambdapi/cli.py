"""Command-line entry point ``lpi``.

Subcommands
-----------
solve           run lambda policy iteration and write the per-iteration table
verify          run a bound-check campaign and write one row per report
counterexample  measure the expansion of ``T_lambda`` on the two-state MDP
sweep           outer and inner iteration counts across lambdas

Exit codes: 0 success, 1 input error, 2 iteration budget exhausted,
3 expected condition not met (an unsatisfied bound, or no expansion in the
counterexample). ``LPI_SEED`` overrides the default seed.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .bounds import BOUND_IDS
from .harness import (
    RECORD_FIELDS,
    ExperimentSpec,
    GeneratorSpec,
    counterexample_mdp,
    lambda_sweep,
    noncontraction_witness,
    random_mdp,
    run_experiment,
)
from .io import (
    SWEEP_FIELDS,
    TRACE_FIELDS,
    InputError,
    read_experiment,
    read_mdp,
    trace_rows,
    write_csv,
)
from .solvers import NOISE_KINDS, NoiseModel, SolverConfig, run_lambda_pi

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INPUT, EXIT_BUDGET, EXIT_CONDITION = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for the budget
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get("LPI_SEED", "0")
    try:
        seed = int(raw)
    except ValueError:
        raise InputError(f"LPI_SEED must be a nonnegative integer, got {raw!r}") from None
    if seed < 0:
        raise InputError(f"LPI_SEED must be a nonnegative integer, got {raw!r}")
    return seed


def _lambda(text: str) -> float:
    try:
        lam = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= lam <= 1.0:
        raise argparse.ArgumentTypeError(f"lambda out of [0,1]: {text}")
    return lam


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed list {text!r}; expected e.g. 0,0.5,1") from None
    if not vals or any(math.isnan(x) for x in vals):
        raise argparse.ArgumentTypeError(f"malformed list {text!r}")
    return vals


def _lambda_list(text: str) -> list[float]:
    vals = _float_list(text)
    for lam in vals:
        if not 0.0 <= lam <= 1.0:
            raise argparse.ArgumentTypeError(f"lambda out of [0,1]: {lam}")
    return vals


def _noise(text: str) -> tuple[str, float]:
    kind, _, amp = text.partition(":")
    if kind not in NOISE_KINDS and kind not in ("uniform", "gaussian"):
        raise argparse.ArgumentTypeError(
            f"unknown noise kind {kind!r}; expected one of {', '.join(NOISE_KINDS)}"
        )
    kind = {"uniform": "uniform_bounded", "gaussian": "gaussian_clipped"}.get(kind, kind)
    try:
        amplitude = float(amp) if amp else 0.0
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad noise amplitude {amp!r}") from None
    if not (amplitude >= 0 and math.isfinite(amplitude)):
        raise argparse.ArgumentTypeError(f"noise amplitude must be finite and nonnegative, got {amp}")
    return kind, amplitude


def _checks(text: str) -> tuple[str, ...]:
    if text.strip() == "all":
        return tuple(BOUND_IDS)
    ids = tuple(x.strip() for x in text.split(",") if x.strip())
    if not ids:
        raise argparse.ArgumentTypeError("empty check list; give ids separated by commas or 'all'")
    bad = [i for i in ids if i not in BOUND_IDS]
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown bound id(s) {', '.join(bad)}; valid ids: {', '.join(BOUND_IDS)}"
        )
    return ids


def _add_problem_args(p, with_gamma_override=True):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--mdp", help="MDP document (JSON)")
    src.add_argument("--fixture", choices=["counterexample"], help="built-in problem")
    p.add_argument("--n-states", type=int, default=6, help="random generator: states")
    p.add_argument("--n-actions", type=int, default=3, help="random generator: actions")
    p.add_argument("--branching", type=int, default=3, help="random generator: successors per pair")
    p.add_argument("--seed", type=int, default=None, help="generator and noise seed (default LPI_SEED or 0)")
    if with_gamma_override:
        p.add_argument("--gamma-override", type=float, default=None, help="replace the discount")


def _problem(args):
    seed = args.seed if args.seed is not None else _default_seed()
    if seed < 0:
        raise InputError("seed must be nonnegative")
    gamma = getattr(args, "gamma_override", None)
    if args.mdp:
        mdp = read_mdp(args.mdp)
    elif args.fixture == "counterexample":
        mdp = counterexample_mdp()
    else:
        try:
            spec = GeneratorSpec(args.n_states, args.n_actions, args.branching, seed=seed)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        mdp = random_mdp(spec)
    if gamma is not None:
        if not 0.0 < gamma < 1.0:
            raise InputError(f"gamma out of (0,1): {gamma}")
        mdp = mdp.with_gamma(gamma)
    return mdp, seed


def _open_out(path):
    return sys.stdout if path in (None, "-") else path


# ---------------------------------------------------------------- commands


def cmd_solve(args) -> int:
    mdp, seed = _problem(args)
    kind, amp = args.noise
    noise = NoiseModel(kind, amp, seed=seed)
    config = SolverConfig(
        lam=args.lam,
        max_iterations=args.max_iterations,
        stop_epsilon=args.epsilon,
        inner_mode=args.inner,
        seed=seed,
    )
    trace = run_lambda_pi(mdp, np.zeros(mdp.n_states), config, noise)
    write_csv(trace_rows(trace, seed), TRACE_FIELDS, _open_out(args.out))
    if trace.terminal == "converged":
        return EXIT_OK
    print(f"iteration budget of {args.max_iterations} exhausted before the stopping test", file=sys.stderr)
    return EXIT_BUDGET


def _inline_experiment(args) -> ExperimentSpec:
    seed = args.seed if args.seed is not None else _default_seed()
    kind, amp = args.noise
    if args.fixture == "counterexample":
        generator = "counterexample"
    else:
        generator = GeneratorSpec(args.n_states, args.n_actions, args.branching, seed=seed)
    default_iters = 40 if amp == 0.0 and kind != "rank_projection" else 200
    return ExperimentSpec(
        generator=generator,
        lambdas=tuple(args.lambdas),
        gammas=tuple(args.gammas),
        noise=NoiseModel(kind, amp, seed=seed),
        solver=SolverConfig(max_iterations=args.iterations or default_iters, stop_rule="none"),
        checks=args.checks,
        replications=args.replications,
        window=args.window,
        k_max=args.k_max,
        p=args.p,
    )


def cmd_verify(args) -> int:
    if args.experiment:
        spec = read_experiment(args.experiment)
        if args.checks_given:
            spec = replace(spec, checks=args.checks)
    else:
        if args.mdp:
            raise InputError("verify generates its problems; use --experiment or generator flags")
        try:
            spec = _inline_experiment(args)
        except (KeyError, ValueError) as exc:
            raise InputError(str(exc)) from None
    if not spec.checks:
        raise InputError("no checks selected")
    records = run_experiment(spec)
    write_csv(records, RECORD_FIELDS, _open_out(args.out))
    failed = [r for r in records if not r["satisfied"]]
    if failed:
        names = sorted({r["bound_id"] for r in failed})
        print(f"{len(failed)} of {len(records)} reports unsatisfied: {', '.join(names)}", file=sys.stderr)
        return EXIT_CONDITION
    return EXIT_OK


def cmd_counterexample(args) -> int:
    if not 0.0 < args.gamma < 1.0:
        raise InputError(f"gamma out of (0,1): {args.gamma}")
    if not args.eps > 0:
        raise InputError(f"eps must be positive, got {args.eps}")
    w = noncontraction_witness(args.lam, args.gamma, args.eps)
    fmt = lambda x: "[" + ", ".join("%.17g" % t for t in x) + "]"  # noqa: E731
    print(f"lambda  = {w['lam']:.17g}")
    print(f"gamma   = {w['gamma']:.17g}")
    print(f"v       = {fmt(w['v'])}  greedy policy {w['pi'].tolist()}")
    print(f"v'      = {fmt(w['v_prime'])}  greedy policy {w['pi_prime'].tolist()}")
    print(f"T v     = {fmt(w['t_v'])}")
    print(f"T v'    = {fmt(w['t_v_prime'])}")
    print(f"v' - v  = {fmt(w['diff_in'])}")
    print(f"Tv'-Tv  = {fmt(w['diff_out'])}")
    print(f"ratio   = {w['ratio']:.17g}")
    if args.lam == 0.0:
        print(f"note: lambda = 0 is value iteration, a gamma-contraction (ratio <= {args.gamma:g})")
        return EXIT_CONDITION
    return EXIT_OK if w["ratio"] > 1.0 else EXIT_CONDITION


def cmd_sweep(args) -> int:
    mdp, _ = _problem(args)
    config = SolverConfig(
        max_iterations=args.max_iterations,
        stop_epsilon=args.epsilon,
        inner_mode=args.inner,
    )
    rows = [
        dict(zip(SWEEP_FIELDS, row))
        for row in lambda_sweep(mdp, args.lambdas, config)
    ]
    write_csv(rows, SWEEP_FIELDS, _open_out(args.out))
    return EXIT_OK


# ------------------------------------------------------------------ parser


class _ChecksAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.checks_given = True


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpi", description="Lambda policy iteration toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run lambda policy iteration, write the iteration table")
    _add_problem_args(p)
    p.add_argument("--lambda", dest="lam", type=_lambda, default=0.5)
    p.add_argument("--epsilon", type=float, default=0.01, help="target accuracy of the stopping test")
    p.add_argument("--noise", type=_noise, default=("none", 0.0), help="kind:amplitude, e.g. uniform:0.01")
    p.add_argument("--inner", choices=["dense", "mk"], default="dense")
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run a bound-check campaign")
    p.add_argument("--experiment", help="experiment document (JSON)")
    _add_problem_args(p, with_gamma_override=False)
    p.add_argument("--checks", type=_checks, default=tuple(BOUND_IDS), action=_ChecksAction,
                   help="comma-separated bound ids or 'all'")
    p.add_argument("--lambdas", type=_lambda_list, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--gammas", type=_float_list, default=[0.5, 0.9])
    p.add_argument("--noise", type=_noise, default=("none", 0.0))
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--iterations", type=int, default=None, help="iterations per run (40 exact, 200 noisy)")
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--k-max", type=int, default=30)
    p.add_argument("--p", type=float, default=2.0, help="exponent of the weighted span bounds")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify, checks_given=False)

    p = sub.add_parser("counterexample", help="non-contraction witness on the two-state MDP")
    p.add_argument("--lambda", dest="lam", type=_lambda, default=0.5)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--eps", type=float, default=1e-3)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("sweep", help="iteration counts across lambdas")
    _add_problem_args(p)
    p.add_argument("--lambdas", type=_lambda_list, default=[0.0, 0.5, 0.9, 1.0])
    p.add_argument("--inner", choices=["dense", "mk"], default="mk")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"lpi {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # configuration errors raised by the library constructors
        print(f"lpi {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
