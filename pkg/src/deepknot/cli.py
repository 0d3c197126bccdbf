"""Command line entry point: ``deepknot fit | gen | baseline``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .autodiff import NumericError
from .dataio import DataFormatError, atomic_write, points_csv
from .datasets import BUILTINS, gen_builtin
from .driver import RunConfig, emit_artifacts, load_data, parse_range, run_baselines, run_fit
from .linalg import SingularSystemError
from .network import ConfigError
from .trainer import TrainingError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--data", default=d.data, help=f"builtin ({', '.join(BUILTINS)}) or path to .csv/.json")
    p.add_argument("--n-points", type=int, default=d.n_points)
    p.add_argument("--noise", type=float, default=d.noise)
    p.add_argument("--data-seed", type=int, default=d.data_seed)
    p.add_argument("--degree", type=int, default=d.degree)
    p.add_argument("--knot-range", default=d.knot_range, help="interior knot counts lo:hi")
    p.add_argument("--rough", action="store_true", help="bracket the count with a coarse pass first")
    p.add_argument("--rough-range", default=d.rough_range)
    p.add_argument("--rough-decrement", type=int, default=d.rough_decrement)
    p.add_argument("--rough-iterations", type=int, default=d.rough_iterations)
    p.add_argument("--decrement", type=int, default=d.decrement)
    p.add_argument("--iterations", type=int, default=d.iterations)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--delta", type=float, default=d.delta, help="selection slack")
    p.add_argument("--ridge", type=float, default=d.ridge)
    p.add_argument("--param-mode", choices=["auto", "native", "chord", "network"], default=d.param_mode)
    p.add_argument("--coalesce", action="store_true", help="merge near-coincident knots after selection")
    p.add_argument("--merge-tol", type=float, default=d.merge_tol)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--config", help="JSON config (e.g. the echo in a report); flags are ignored")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepknot", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="train the knot network and emit a report")
    _add_run_flags(fit)
    fit.add_argument("-o", "--outdir", help="output directory (default: the config's, else ./run)")

    gen = sub.add_parser("gen", help="write a builtin dataset as CSV")
    gen.add_argument("name", choices=BUILTINS)
    gen.add_argument("-o", "--output", required=True)
    gen.add_argument("--n-points", type=int)
    gen.add_argument("--noise", type=float)
    gen.add_argument("--seed", type=int, default=0)

    base = sub.add_parser("baseline", help="uniform and parameter-averaging knots at fixed counts")
    _add_run_flags(base)
    base.add_argument("-o", "--output", help="write JSON here instead of stdout")
    return parser


def _run_config(args) -> RunConfig:
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        doc = doc.get("config", doc)
        return RunConfig.from_dict(doc)
    names = {f.name for f in fields(RunConfig)}
    return RunConfig(**{k: v for k, v in vars(args).items() if k in names})


def _fit(args) -> int:
    cfg = _run_config(args)
    outdir = args.outdir or cfg.outdir or "run"
    cfg = RunConfig.from_dict({**cfg.to_dict(), "outdir": outdir})
    run = run_fit(cfg)
    emit_artifacts(run, cfg.outdir)
    r = run.report
    print(
        f"knots={r.selected_count} hausdorff={r.hausdorff:.4g} "
        f"time={r.seconds:.1f}s -> {cfg.outdir}"
    )
    return EXIT_OK


def _gen(args) -> int:
    ps = gen_builtin(args.name, args.n_points, args.noise, args.seed)
    atomic_write(Path(args.output), points_csv(ps))
    print(f"{len(ps)} points -> {args.output}")
    return EXIT_OK


def _baseline(args) -> int:
    cfg = _run_config(args)
    ps = load_data(cfg)
    lo, hi = parse_range(cfg.knot_range)
    out = run_baselines(ps, list(range(lo, hi + 1)), cfg.degree, cfg.ridge)
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.output:
        atomic_write(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = {"fit": _fit, "gen": _gen, "baseline": _baseline}[args.command]
    try:
        return handler(args)
    except (DataFormatError, OSError) as e:
        print(f"deepknot: io: {e}", file=sys.stderr)
        return EXIT_IO
    except (TrainingError, SingularSystemError, NumericError, FloatingPointError) as e:
        print(f"deepknot: numeric: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as e:
        print(f"deepknot: config: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
