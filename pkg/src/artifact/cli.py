"""Command-line entry point: ``artifact {solve,simulate,fig2,fig3,fig4,fig5,validate}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__, experiments, kernels, model, validation
from .config import ConfigError, load_config
from .simulator import simulate
from .solver import ConvergenceError, load_snapshot, save_snapshot, solve

log = logging.getLogger("artifact")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML/JSON config file or run manifest")
    common.add_argument("--seed", type=int, help="root seed (overrides simulation.seed)")
    common.add_argument("--slots", type=int, help="slots per run (overrides simulation.n_slots)")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="artifact", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="run value iteration and save a policy snapshot")
    s.add_argument("--snapshot", type=Path, help="snapshot path (default OUT/policy.npz)")

    s = sub.add_parser("simulate", parents=[common], help="one simulation run with a per-slot trace")
    s.add_argument("--policy", choices=("dp", "baseline"), default="dp")
    s.add_argument("--snapshot", type=Path, help="reuse a saved value function instead of solving")

    for name in ("fig2", "fig3", "fig4", "fig5"):
        s = sub.add_parser(name, parents=[common], help=f"run the {name} sweep")
        s.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
        if name == "fig2":
            s.add_argument("--policy", choices=("dp", "baseline"), default="dp")

    sub.add_parser("validate", parents=[common], help="run quick oracle and invariant checks")
    return p


def _config(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.slots is not None:
        changes["n_slots"] = args.slots
    return cfg.replace(**changes) if changes else cfg


def _cmd_solve(args, cfg):
    t0 = time.perf_counter()
    sol = solve(cfg)
    elapsed = time.perf_counter() - t0
    path = args.snapshot or args.out / "policy.npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_snapshot(path, sol)
    print(f"converged in {sol.value_function.iterations} iterations "
          f"({elapsed:.2f} s, residual {sol.value_function.residual:.3g}); snapshot {path}")


def _cmd_simulate(args, cfg):
    distances = model.user_distances(cfg)
    cfg = cfg.replace(distances=tuple(distances))
    vf = mdp = None
    if args.policy == "dp":
        if args.snapshot is not None:
            vf, _, meta = load_snapshot(args.snapshot)
            if meta.get("solver_key") != cfg.solver_key(distances):
                raise ConfigError([("--snapshot", "snapshot was solved for a different configuration")])
        else:
            sol = solve(cfg, distances)
            vf, mdp = sol.value_function, sol.mdp
    metrics, trace = simulate(args.policy, cfg, vf, mdp=mdp, trace=True)
    args.out.mkdir(parents=True, exist_ok=True)
    trace_path = args.out / f"trace_{args.policy}_seed{cfg.seed}.csv"
    trace.write_csv(trace_path, every=cfg.trace_every)
    row = metrics.as_row()
    man = {"command": "simulate", "policy": args.policy, "code_version": __version__,
           "kernel_backend": kernels.BACKEND, "metrics": row, "trace": trace_path.name,
           "config": cfg.to_dict()}
    (args.out / f"simulate_{args.policy}_seed{cfg.seed}_manifest.json").write_text(
        json.dumps(man, indent=2) + "\n")
    print(json.dumps(row, indent=2))


def _cmd_fig(args, cfg):
    fn = experiments.EXPERIMENTS[args.command]
    if args.command == "fig2":
        res = fn(cfg, policy=args.policy)
    else:
        res = fn(cfg, jobs=max(1, args.jobs))
    csv_path, man = res.write(args.out)
    print(f"wrote {csv_path} and {man}")


def _cmd_validate(args, cfg):
    failed = 0
    for c in validation.run_all():
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name:<14} {c.detail}")
        failed += not c.ok
    if failed:
        raise SystemExit(1)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
        {"solve": _cmd_solve, "simulate": _cmd_simulate, "validate": _cmd_validate}.get(
            args.command, _cmd_fig)(args, cfg)
    except ConfigError as exc:
        for field, msg in exc.errors:
            print(f"config error: {field}: {msg}", file=sys.stderr)
        return 2
    except (ConvergenceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
