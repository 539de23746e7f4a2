"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 solver error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from .config import load
from .errors import ConfigError, KineticHJError
from .experiment import (analyze_run, default_threads, run_experiment, run_sweep, with_seed,
                         with_solver, jsonable)
from .presets import PRESETS, preset, preset_text

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    common.add_argument("--threads", type=int, default=None, help="worker processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="kinetic-hj", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run a config (its sweep block, if any, too)"),
                            ("sweep", "run the sweep block of a config"),
                            ("hamiltonian", "tabulate the effective Hamiltonian"),
                            ("hj", "integrate the Hamilton-Jacobi equation"),
                            ("macro", "run an aggregate (macroscopic) model")):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        sp.add_argument("config", type=Path)
    sp = sub.add_parser("preset", parents=[common], help="run or dump a built-in preset")
    sp.add_argument("name", choices=sorted(PRESETS))
    sp.add_argument("--dump", action="store_true", help="print the preset config and exit")
    sp = sub.add_parser("analyze", parents=[common], help="post-process a finished run directory")
    sp.add_argument("run_dir", type=Path)
    sp.add_argument("--eps", type=float, default=1.0, help="Hopf-Cole scale")
    return p


def _execute(cfg, out: Path, threads: int) -> dict:
    if cfg.sweep:
        rows = run_sweep(cfg, out, threads)
        return {"runs": rows}
    return run_experiment(cfg, out)


def main(argv: Optional[list] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads or default_threads()
    try:
        if args.command == "preset" and args.dump:
            sys.stdout.write(preset_text(args.name))
            return EXIT_OK
        if args.command == "analyze":
            result = analyze_run(args.run_dir, eps=args.eps)
        else:
            if args.command == "preset":
                cfg = preset(args.name)
            else:
                cfg = load(args.config)
                if args.command in ("hamiltonian", "hj", "macro"):
                    cfg = with_solver(cfg, args.command)
            cfg = with_seed(cfg, args.seed)
            out = args.out or Path("runs") / cfg["experiment"]["name"]
            result = _execute(cfg, out, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KineticHJError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    json.dump(jsonable(result), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
