"""Command-line interface.

Three subcommands cover the federated workflow:

* ``site-stats``: load one site's CSV and group spec, build knockoffs, fit
  the penalized path, and write the site summary JSON (the only artifact a
  site shares).
* ``combine``: read site summaries, combine them into group statistics, and
  write the selection JSON.
* ``simulate``: run a synthetic benchmark from a JSON config and write a CSV
  of FDR/power estimates per strategy.

Exit codes: 0 success, 2 data/validation errors, 64 usage errors, 65
malformed input files. Failures print a one-line JSON object to stderr with
``error`` (the failure class) and ``message``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import DatasetSpec, load_dataset
from .errors import FormatError, MultiknockError, UsageError
from .federation import SiteSummary, combine_summaries, selection_to_json
from .simulation import (
    KNOCKOFF_METHODS,
    SimConfig,
    _site_statistics,
    run_simulation,
    write_outcome_csv,
)


class _Parser(argparse.ArgumentParser):
    """argparse parser whose errors surface as :class:`UsageError` (exit 64)."""

    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(
        prog="multiknock",
        description="Federated group selection with simultaneous knockoffs.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    site = sub.add_parser(
        "site-stats",
        help="compute one site's knockoff path statistics",
        description=(
            "Load a CSV and its group spec, build knockoffs, fit the "
            "group-penalized path, and write a site summary JSON."
        ),
    )
    site.add_argument("--data", required=True, help="CSV file with a header row")
    site.add_argument("--groups", required=True,
                      help="JSON spec: groups, outcome, family, column types")
    site.add_argument("--site-id", default=None,
                      help="identifier recorded in the summary "
                           "(default: the data file stem)")
    site.add_argument("--method", default="auto", choices=KNOCKOFF_METHODS,
                      help="knockoff construction (auto picks sequential when "
                           "categorical columns are present, else fixed-equi)")
    site.add_argument("--seed", type=int, default=0,
                      help="seed for the construction's randomness")
    site.add_argument("--grid-size", type=int, default=100,
                      help="number of penalty grid points (>= 20)")
    site.add_argument("--out", required=True, help="summary JSON output path")
    site.set_defaults(func=_cmd_site_stats)

    comb = sub.add_parser(
        "combine",
        help="combine site summaries into a selection",
        description=(
            "Align site summaries by group name, combine their statistics, "
            "apply the selection threshold, and write the selection JSON."
        ),
    )
    comb.add_argument("summaries", nargs="+", help="site summary JSON files")
    comb.add_argument("--q", type=float, required=True,
                      help="target false discovery rate, in (0, 1)")
    comb.add_argument("--plus", action="store_true",
                      help="use the conservative (+1 offset) threshold")
    comb.add_argument("--out", default=None,
                      help="selection JSON output path (default: stdout)")
    comb.set_defaults(func=_cmd_combine)

    sim = sub.add_parser(
        "simulate",
        help="run a synthetic benchmark",
        description=(
            "Run the configured benchmark replications and write FDR/power "
            "estimates per strategy as CSV."
        ),
    )
    sim.add_argument("--config", required=True, help="benchmark config JSON")
    sim.add_argument("--out", required=True, help="results CSV output path")
    sim.add_argument("--threads", type=int, default=1,
                     help="worker processes for replications (default 1)")
    sim.add_argument("--progress", action="store_true",
                     help="print replication progress to stderr")
    sim.set_defaults(func=_cmd_simulate)
    return parser


def _cmd_site_stats(args):
    if args.grid_size < 20:
        raise UsageError("--grid-size must be at least 20")
    spec = DatasetSpec.from_file(args.groups)
    site_id = args.site_id if args.site_id is not None else Path(args.data).stem
    view = load_dataset(args.data, spec, dataset_id=site_id)
    stats, method = _site_statistics(view, args.seed, args.method, args.grid_size)
    summary = SiteSummary.from_statistics(
        stats, site_id=site_id, method=method, seed=args.seed
    )
    summary.write(args.out)
    return 0


def _cmd_combine(args):
    if not 0.0 < args.q < 1.0:
        raise UsageError(f"--q must lie in (0, 1), got {args.q}")
    summaries = [SiteSummary.read(path) for path in args.summaries]
    result = combine_summaries(summaries, q=args.q, plus=args.plus)
    text = selection_to_json(result)
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def _cmd_simulate(args):
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    path = Path(args.config)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"config {path} must hold a JSON object")
    cfg = SimConfig.from_dict(doc)

    progress = None
    if args.progress:
        def progress(done, total):
            print(f"replication {done}/{total}", file=sys.stderr, flush=True)

    outcome = run_simulation(cfg, n_jobs=args.threads, progress=progress)
    write_outcome_csv(outcome, args.out)
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except MultiknockError as exc:
        doc = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(doc), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
