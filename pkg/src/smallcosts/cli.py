"""Command-line entry point: ``smallcosts {simulate,sweep,verify} --config FILE``.

Exit status is 0 when everything passed, 1 when a verification check failed
and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, load_config
from .engine import run_ensemble
from .experiments import paths_csv, run_sweep, run_verify, write_outputs

log = logging.getLogger("smallcosts")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smallcosts", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("simulate", "simulate the configured ensemble and write per-path statistics"),
        ("sweep", "run the eps sweep and write sweep.csv and summary.json"),
        ("verify", "run the sweep plus the verification checks"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config and SMALLCOSTS_SEED)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None, help="worker processes (overrides SMALLCOSTS_WORKERS)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, workers=args.workers, out_dir=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "simulate":
        res = run_ensemble(cfg.model, cfg.friction(), cfg.eps, n=cfg.n, n_paths=cfg.paths, seed=cfg.seed,
                           workers=cfg.workers)
        os.makedirs(cfg.out_dir, exist_ok=True)
        path = os.path.join(cfg.out_dir, "paths.csv")
        with open(path, "w", newline="") as fh:
            fh.write(paths_csv(res))
        print(path)
        return 0

    table = run_sweep(cfg)
    for d in table.diagnostics:
        log.warning(d)
    if args.command == "sweep":
        for path in write_outputs(cfg, table):
            print(path)
        return 0

    checks = run_verify(cfg, table)
    write_outputs(cfg, table, checks)
    for c in checks:
        print(f"{c.status}  {c.name}  margin={c.margin:.3g}  {c.detail}")
    failed = [c for c in checks if c.status == "FAIL"]
    warned = [c for c in checks if c.status == "WARN"]
    print(f"{len(checks) - len(failed) - len(warned)} passed, {len(warned)} warnings, {len(failed)} failed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
