"""Command line entry point: ``vagflow run | bench | mesh-info``.

Exit status 0 on success, 1 on invalid input (config, mesh, arguments),
2 when the solver aborts.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .assembly import Discretization
from .bench import BENCHMARKS, run_bench, run_config, write_run_outputs
from .config import ConfigError, load_config
from .diagnostics import TABLE_COLUMNS, format_value
from .mesh import MeshError, read_mesh
from .physics import TensorField
from .solver import SimulationAborted

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 1, 2

log = logging.getLogger("vagflow")


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run_config(cfg)
    out = Path(args.out) if args.out else Path(cfg.output_dir)
    for path in write_run_outputs(result, out):
        print(path)
    return EXIT_OK


def _cmd_bench(args) -> int:
    rows = run_bench(args.test, args.levels, Path(args.out))
    print(",".join(TABLE_COLUMNS))
    for r in rows:
        print(",".join(format_value(r[c]) for c in TABLE_COLUMNS))
    return EXIT_OK


def _cmd_mesh_info(args) -> int:
    mesh = read_mesh(args.file)
    disc = Discretization(mesh, TensorField({int(t): [[1.0, 0.0], [0.0, 1.0]] for t in set(mesh.tags.tolist())}), args.lumping)
    q = disc.quality()
    print("h,theta,ell,zeta,cond_min,cond_max")
    print(",".join(format_value(v) for v in (q.h, q.theta, q.ell, q.zeta, *q.cond_range)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vagflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("bench", help="run a built-in benchmark family")
    p.add_argument("test", choices=sorted(BENCHMARKS))
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--out", default="bench-out")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("mesh-info", help="print mesh regularity factors")
    p.add_argument("file")
    p.add_argument("--lumping", type=float, default=0.1, help="lumping fraction f")
    p.set_defaults(func=_cmd_mesh_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SimulationAborted as exc:
        print(f"vagflow: solver aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (ConfigError, MeshError, ValueError, OSError) as exc:
        print(f"vagflow: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
