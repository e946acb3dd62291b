"""Command-line entry point ``assembly-sim``.

Subcommands::

    simulate        run one projection and print the per-round trajectory
    sweep SPEC      run a YAML experiment spec (see harness.config)
    plot CSV        draw overlap and density figures from a sweep CSV
    dmax            print the maximum expected k-subgraph density
    oracle-compare  compare the sparse engine against the explicit one
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..connectome import AreaParams, default_cap, write_edge_list
from ..metrics import max_expected_density
from ..oracle import compare_engines
from ..projection import ProjectionConfig, ProjectionState, project_until_convergence
from .config import RULE_PARAMS, SpecError, build_rule, parse_spec
from .plots import emit_plots
from .sweep import run_sweep


def _add_rule_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("plasticity rule")
    g.add_argument("--rule", choices=sorted(RULE_PARAMS), default="hebb")
    g.add_argument("--beta", type=float, default=0.1, help="hebb / oja learning rate")
    g.add_argument("--alpha", type=float, help="oja decay, or stdp_inverse numerator")
    g.add_argument("--beta-reward", type=float)
    g.add_argument("--beta-punish", type=float,
                   help="signed; -1 means plain Hebb with beta-reward")
    g.add_argument("--clamp-lo", type=float, default=-0.1)
    g.add_argument("--clamp-hi", type=float, default=0.1)
    g.add_argument("--dt-mode", choices=["pseudo_arrival", "random"], default="pseudo_arrival")
    g.add_argument("--reward-ratio", type=float)


def _rule_from_args(args):
    values = {
        "beta": args.beta,
        "alpha": args.alpha,
        "beta_reward": args.beta_reward,
        "beta_punish": args.beta_punish,
        "clamp_lo": args.clamp_lo,
        "clamp_hi": args.clamp_hi,
        "dt_mode": args.dt_mode,
        "reward_ratio": args.reward_ratio,
    }
    schema = RULE_PARAMS[args.rule]
    chosen = {k: values[k] for k in schema}
    for key, default in schema.items():
        if default is ... and chosen[key] is None:
            raise SpecError(f"--{key.replace('_', '-')} is required for --rule {args.rule}")
    rule, _ = build_rule(args.rule, chosen, where="--rule")
    return rule


def _add_area_args(p: argparse.ArgumentParser, n: int, p_default: float) -> None:
    p.add_argument("--n", type=int, default=n)
    p.add_argument("--k", type=int, help="cap size (default round(sqrt(n)))")
    p.add_argument("--p", type=float, default=p_default)


def cmd_simulate(args) -> int:
    k = args.k if args.k is not None else default_cap(args.n)
    cfg = ProjectionConfig(area=AreaParams(args.n, k, args.p), rule=_rule_from_args(args),
                           seed=args.seed, recurrent=not args.no_recurrent,
                           max_rounds=args.rounds,
                           early_stop_at_full_overlap=not args.no_early_stop)
    state = ProjectionState.fresh(cfg)
    traj = project_until_convergence(cfg, state)
    bound = max_expected_density(args.n, k, args.p)
    print(f"# n={args.n} k={k} p={args.p} rule={cfg.rule} seed={args.seed} r_max={bound.r_max:.4f}")
    print("t,overlap,density_ratio,support_size")
    for r in traj.records:
        print(f"{r.t},{r.overlap:.6f},{r.density_ratio:.6f},{r.support_size}")
    done = traj.converged_round
    print(f"# converged at round {done}" if done else "# did not converge")
    if args.edges_out:
        write_edge_list(state.target, args.edges_out)
        print(f"# edges written to {args.edges_out}")
    return 0


def cmd_sweep(args) -> int:
    spec = parse_spec(args.spec)
    out = run_sweep(spec, jobs=args.jobs, out_dir=args.out)
    print(f"{spec.run_count} runs written to {out}")
    return 0


def cmd_plot(args) -> int:
    area = None
    if args.n is not None or args.p is not None:
        if args.n is None or args.p is None:
            raise SpecError("--n and --p must be given together")
        area = (args.n, args.k if args.k is not None else default_cap(args.n), args.p)
    for path in emit_plots(args.csv, args.out, area=area):
        print(path)
    return 0


def cmd_dmax(args) -> int:
    bound = max_expected_density(args.n, args.k, args.p)
    print(f"d_max = {bound.d_max:.10g}")
    print(f"r_max = {bound.r_max:.10g}")
    return 0


def cmd_oracle_compare(args) -> int:
    k = args.k if args.k is not None else default_cap(args.n)
    report = compare_engines(args.n, args.p, k, _rule_from_args(args),
                             seeds=range(args.seed, args.seed + args.seeds),
                             rounds=args.rounds, replay_seeds=args.replay_seeds)
    print(report.to_json() if args.json else report.to_text())
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="assembly-sim", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one projection")
    _add_area_args(p, n=100_000, p_default=0.01)
    _add_rule_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--no-recurrent", action="store_true")
    p.add_argument("--edges-out", metavar="CSV", help="dump the materialized synapses")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run an experiment spec")
    p.add_argument("spec")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output directory (overrides output_dir and $ASSEMBLY_SIM_OUT)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="figures from a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--out", default=".")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--p", type=float)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("dmax", help="maximum expected k-subgraph density")
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.set_defaults(func=cmd_dmax)

    p = sub.add_parser("oracle-compare", help="sparse vs explicit engine")
    _add_area_args(p, n=1000, p_default=0.05)
    _add_rule_args(p)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=30, help="number of seeds")
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--replay-seeds", type=int, default=3)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_oracle_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:  # includes configuration and domain errors
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
