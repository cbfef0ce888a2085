"""Command line entry point: ``gossipsim <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .. import spatial
from ..limitlaw import GridSpec, solve_h
from .config import ExperimentConfig, cd_preset, cd_summary, load_config
from .experiments import EXPERIMENTS, run_rng, write_outputs


def _config_from(args) -> ExperimentConfig:
    over = {k: getattr(args, k, None) for k in
            ("kind", "d", "topology", "ball_shape", "Lambda", "runs", "probes", "seed", "alpha", "workers")}
    if args.config:
        return load_config(args.config, **over)
    return ExperimentConfig(**{k: v for k, v in over.items() if v is not None})


def _add_common(p):
    p.add_argument("--config", help="TOML or JSON experiment config")
    p.add_argument("--kind", choices=["gossip", "small-world"])
    p.add_argument("--d", type=int)
    p.add_argument("--topology", choices=["torus", "rectangle"])
    p.add_argument("--ball-shape", dest="ball_shape", choices=["round", "sup"])
    p.add_argument("--Lambda", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--probes", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--check", action="store_true", help="exit nonzero if any check fails")


def cmd_experiment(args) -> int:
    cfg = _config_from(args)
    report, rows = EXPERIMENTS[args.command](cfg)
    name = args.command.replace("-", "_")
    write_outputs(args.out, name, cfg, report, rows)
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.check and not all(report["checks"].values()):
        failed = [k for k, v in report["checks"].items() if not v]
        print(f"FAILED checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_simulate(args) -> int:
    cfg = _config_from(args)
    p = cfg.params()
    T = args.T if args.T is not None else float(cfg.time_at(cfg.x_max))
    st = spatial.simulate(p, T, cfg.probes, run_rng(cfg.seed, 0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    st.log.to_jsonl(out / "events.jsonl")
    with open(out / "islands.csv", "w") as fh:
        fh.write("id,birth," + ",".join(f"x{k}" for k in range(p.d)) + "\n")
        for i, (b, c) in enumerate(zip(st.births, st.centers)):
            fh.write(f"{i},{b!r}," + ",".join(repr(float(v)) for v in c) + "\n")
    if cfg.probes:
        st.probes_to_csv(out / "probes.csv")
    summary = {"T": T, "islands": st.n_islands, "candidates": st.n_candidates,
               "Lambda": p.Lambda, "lambda0": p.lambda0, "rho": p.rho}
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_solve_h(args) -> int:
    law = solve_h(args.m, GridSpec(args.s_min, args.s_max, args.ds), tol=args.tol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    law.to_csv(out / f"h_m{args.m}.csv")
    print(json.dumps({"m": args.m, "iterations": law.iterations, "residual": law.residual}, sort_keys=True))
    return 0


def cmd_cd_preset(args) -> int:
    cfg = cd_preset(args.N, args.rho_exponent)
    print(json.dumps({"config": cfg.to_dict(), "derived": cd_summary(cfg)}, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gossipsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="one exact run; writes the event log and islands")
    _add_common(p)
    p.add_argument("--T", type=float, help="time horizon (default: lambda0^{-1}(log Lambda + x_max))")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("solve-h", help="solve the limit profile h on a grid")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--s-min", dest="s_min", type=float, default=-16.0)
    p.add_argument("--s-max", dest="s_max", type=float, default=12.0)
    p.add_argument("--ds", type=float, default=0.005)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_solve_h)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=cmd_experiment)
    p = sub.add_parser("cd-preset", help="N x N torus parameterization with rho = N^-a")
    p.add_argument("--N", type=float, required=True)
    p.add_argument("--rho-exponent", dest="rho_exponent", type=float, required=True)
    p.set_defaults(func=cmd_cd_preset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
