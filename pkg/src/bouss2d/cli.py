"""Command-line entry point.

Subcommands: convergence, ergodicity, increments, moments, khasminskii.
Exit codes: 0 success, 2 config error, 3 acceptance-threshold failure,
4 excess blow-ups.
"""

import argparse
import sys
from dataclasses import replace

from . import experiments
from .config import ConfigError, ExperimentConfig, load_config, validate_config

COMMANDS = {
    "convergence": experiments.run_convergence,
    "ergodicity": experiments.run_ergodicity,
    "increments": experiments.run_increments,
    "moments": experiments.run_moments,
    "khasminskii": experiments.run_khasminskii_study,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bouss2d",
        description="Two-scale stochastic Boussinesq simulation campaigns",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override base_seed")
        p.add_argument("--out-dir", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None, help="worker processes")
        if name == "convergence":
            p.add_argument(
                "--synthetic",
                default=None,
                metavar="SPEC",
                help="fit-path self-test, e.g. mse=2*eps^0.645",
            )
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = replace(cfg, **overrides)
        validate_config(cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "convergence":
        try:
            result = experiments.run_convergence(cfg, synthetic=args.synthetic)
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        if result.fit is not None:  # fit needs >= 3 eps groups
            print(
                f"fit: mse ~ {result.fit.coefficient:.4g} * eps^{result.fit.exponent:.4g}"
                f" (r^2 = {result.fit.r_squared:.4g})"
            )
        for st in result.stats:
            print(f"eps={st.eps:g}: mean error {st.mean:.6g}, mse {st.mse:.6g}, n={len(st.samples)}")
        if result.failures:
            print(f"{len(result.failures)} sample(s) blew up; see manifest", file=sys.stderr)
        return result.exit_code
    try:
        result = COMMANDS[args.command](cfg)
    except ValueError as exc:
        # run-length/ensemble preconditions surfaced by the diagnostics
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "ergodicity":
        c, inv = result.contraction, result.invariant
        print(
            f"contraction: fitted {c.fitted_rate:.4g} vs theoretical {c.theoretical_rate:.4g}"
            f" (feasible={c.feasible}, pass={c.passed})"
        )
        print(
            f"invariant mean: |g_hat|_H = {inv.norm_g_hat:.4g}, stderr {inv.stderr:.4g},"
            f" pass={inv.passed}"
        )
    elif args.command == "increments":
        print(f"increment slope: {result.report.fitted_slope:.4g} (pass={result.slope_ok})")
    elif args.command == "moments":
        for eps, rep in zip(cfg.eps_list, result.reports):
            print(
                f"eps={eps:g}: E sup|j|^2p = {rep.sup_moment_j:.6g} +- {rep.stderr_j:.2g}, "
                f"max_t E|theta|^2p = {rep.theta_sup_by_t:.6g}"
            )
        print(f"eps-uniform: {result.uniform}")
    elif args.command == "khasminskii":
        for d, g in zip(result.trend.deltas, result.trend.gaps):
            print(f"delta={d:g}: gap {g:.6g}")
        print(f"trend pass: {result.trend.passed} (tau={result.trend.tau:.3g})")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
