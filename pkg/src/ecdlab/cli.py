"""Command-line entry point: ``ecdlab run|list-experiments|validate``.

Exit codes: 0 success, 2 invalid config, 3 numerical non-convergence,
4 infeasible strength budget.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, load_config
from .ecd import InfeasibleTarget, OmegaTooSmall
from .engine import BudgetInfeasible, NonConvergence

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_BUDGET = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecdlab", description="Effective counterdiabatic driving experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config", help="INI config with an [experiment] section")
    run.add_argument("--out", help="output directory (default: output_dir from the config, else ./results/<experiment>)")
    run.add_argument("--threads", type=int, default=1, help="worker threads for sweep points")
    run.add_argument("--norm-convention", choices=("literal", "sqrt"),
                     help="Frobenius convention: literal tr(AA^dag) or its square root")

    sub.add_parser("list-experiments", help="list the experiment families")

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config")
    return p


def _load(path: str, convention: str | None = None):
    cfg = load_config(path)
    if convention:
        cfg = replace(cfg, norm_convention=convention)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-experiments":
        width = max(map(len, EXPERIMENTS))
        for name, text in EXPERIMENTS.items():
            print(f"{name:<{width}}  {text}")
        return EXIT_OK
    try:
        cfg = _load(args.config, getattr(args, "norm_convention", None))
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: {cfg.experiment} (config hash {cfg.digest()[:12]})")
        return EXIT_OK

    if args.threads < 1:
        print("config error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    from .experiments import run
    from .output import write_results

    out = Path(args.out or cfg.output_dir or Path("results") / cfg.experiment)
    try:
        rs = run(cfg, threads=args.threads)
    except NonConvergence as exc:
        print(f"non-convergence: {exc}. Increase steps_per_period or relax the grid.", file=sys.stderr)
        return EXIT_NUMERICS
    except (BudgetInfeasible, OmegaTooSmall) as exc:
        print(f"infeasible budget: {exc}. Raise k or tau so at least one period fits.", file=sys.stderr)
        return EXIT_BUDGET
    except InfeasibleTarget as exc:
        print(f"infeasible target: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    write_results(rs, out)
    print(f"{cfg.experiment}: {len(rs.rows)} rows written to {out}")
    if rs.non_certified:
        print(f"warning: {len(rs.non_certified)} non-certified rows (excluded from fits)", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
