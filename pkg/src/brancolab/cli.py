"""Command-line front end.

Subcommands: validate, simulate, oracle, duality, thinning, poissonization,
invariant, bounds, all.  Common flags: --config, --seed, --out, --threads.

Exit codes: 0 all selected checks pass, 1 experiment failure, 2 configuration
error, 3 inconclusive (an experiment could not reach a verdict).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .branco import RateParams, SimulationError, simulate
from .config import ConfigError, load_config
from .experiments import _EXPERIMENTS, run_all, summary_json
from .lattice import LatticeError, build_lattice, custom_lattice, torus_1d, validate_kernel
from .oracle import build_truncated_chain, transient_distribution
from .streams import replicate_stream

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_INCONCLUSIVE = 3

_EXPERIMENT_NAMES = list(_EXPERIMENTS)


def _make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branco-lab",
        description="Simulate branching-annihilating-coalescing particle systems "
        "and verify their duality, thinning, and bound identities.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override sim.master_seed")
        p.add_argument("--out", default="branco_out", help="output file prefix")
        p.add_argument("--threads", type=int, default=1, help="worker threads")

    p_val = sub.add_parser("validate", help="build a lattice and check the kernel assumptions")
    common(p_val)
    p_val.add_argument("--lattice", default=None, help="spec like torus1d:4 or custom:edges.txt")

    p_sim = sub.add_parser("simulate", help="run a particle ensemble and dump trajectories")
    common(p_sim)

    p_or = sub.add_parser("oracle", help="exact transient distribution of a truncated chain")
    common(p_or)
    p_or.add_argument("--cap", type=int, default=12, help="max particles per site")
    p_or.add_argument("--site-count", type=int, default=1, help="1 = isolated site, n >= 2 = ring")
    p_or.add_argument("--t", type=float, default=1.0, help="time at which to report")
    p_or.add_argument("--x0", default="2", help="comma-separated initial counts")

    for name in _EXPERIMENT_NAMES + ["all"]:
        p_exp = sub.add_parser(name, help=f"run the {name} experiment(s)")
        common(p_exp)
    return parser


def _config_overrides(args) -> dict:
    over = {}
    if args.seed is not None:
        over["sim.master_seed"] = int(args.seed)
    return over


def _write(path: Path, lines: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _cmd_validate(args) -> int:
    if args.lattice:
        lat = build_lattice(args.lattice)
    else:
        lat = load_config(args.config, _config_overrides(args)).lattice
    report = validate_kernel(lat)
    print(f"sites                      : {lat.n_sites}")
    print(f"max_exit_rate              : {report.max_exit_rate!r}")
    print(f"irreducible                : {report.irreducible}")
    print(f"counting_measure_invariant : {report.counting_measure_invariant}")
    print(f"max_flow_imbalance         : {report.max_flow_imbalance!r}")
    print(f"pass                       : {report.passed}")
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config, _config_overrides(args))
    lines = ["replicate,t,site,count"]
    base = np.asarray(cfg.init_vector(), dtype=np.int64)
    for rep in range(cfg.replicates):
        rng = replicate_stream(cfg.master_seed, 0, rep)
        if cfg.init_kind == "poisson":
            x0 = rng.poisson(cfg.init_value, cfg.lattice.n_sites)
        elif cfg.init_kind == "bernoulli":
            x0 = rng.binomial(1, cfg.init_value, cfg.lattice.n_sites)
        else:
            x0 = base
        traj = simulate(x0, cfg.rates, cfg.lattice, cfg.t_grid, rng, cfg.count_cap)
        for g, t in enumerate(cfg.t_grid):
            for site in range(cfg.lattice.n_sites):
                lines.append(f"{rep},{t!r},{site},{traj[g, site]}")
    out = Path(f"{args.out}_trajectories.csv")
    _write(out, lines)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config, _config_overrides(args))
    lat = custom_lattice(1, []) if args.site_count == 1 else torus_1d(args.site_count)
    chain = build_truncated_chain(lat, cfg.rates, args.cap)
    x0 = np.array([int(tok) for tok in args.x0.split(",")], dtype=np.int64)
    if x0.size != lat.n_sites:
        x0 = np.full(lat.n_sites, int(x0[0]), dtype=np.int64)
    dist = transient_distribution(chain, chain.delta(x0), args.t)
    lines = ["state_index,probability"]
    lines.extend(f"{idx},{float(p)!r}" for idx, p in enumerate(dist))
    out = Path(f"{args.out}_oracle.csv")
    _write(out, lines)
    print(f"wrote {out}; total probability {float(dist.sum())!r}")
    return EXIT_OK


def _cmd_experiments(args, names: list[str]) -> int:
    cfg = load_config(args.config, _config_overrides(args))
    reports = run_all(cfg, threads=args.threads, names=names)
    for name, rep in reports.items():
        out = Path(f"{args.out}_{name}.csv")
        _write(out, rep.csv_lines())
        status = "PASS" if rep.passed else ("INCONCLUSIVE" if rep.inconclusive else "FAIL")
        print(f"{name}: {status} ({len(rep.rows)} panel entries) -> {out}")
    summary = Path(f"{args.out}_summary.json")
    _write(summary, [summary_json(reports, cfg.master_seed)])
    print(f"summary -> {summary}")
    if any(not r.passed and not r.inconclusive for r in reports.values()):
        return EXIT_FAIL
    if any(r.inconclusive for r in reports.values()):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _make_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "all":
            return _cmd_experiments(args, _EXPERIMENT_NAMES)
        return _cmd_experiments(args, [args.command])
    except (ConfigError, LatticeError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
