"""Batch front-end: ingestion, embedding caches, metric reports, comparisons.

Subcommands: ``fingerprint``, ``uniqueness``, ``novelty``, ``pairwise``,
``pareto``, ``shuffle-check``. Exit codes: 0 success, 1 internal error,
2 usage or input error. Results equal direct library calls bit-exactly.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import cache
from .composition import PropertyTable
from .errors import InputError, XtalmetError
from .matcher import MatchTolerances
from .metrics import (
    CONTINUOUS_KIND_NAMES,
    KIND_NAMES,
    DistanceKind,
    MetricReport,
    ScreenPolicy,
    novelty_report,
    pairwise_matrix,
    pareto_front,
    reports_to_csv,
    shuffle_audit,
    uniqueness_report,
)
from .structures import SampleSet, parse_jsonl

logger = logging.getLogger("xtalmet")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2


def _add_shared_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--input", required=True, help="sample set (JSONL)")
    sub.add_argument("--distance", required=True, choices=KIND_NAMES)
    sub.add_argument("--k", type=int, default=100, help="fingerprint length for amd")
    sub.add_argument("--ltol", type=float, default=0.2)
    sub.add_argument("--stol", type=float, default=0.3)
    sub.add_argument("--angle-tol", type=float, default=5.0)
    sub.add_argument("--filter-ehull", type=float, default=None, metavar="E",
                     help="keep samples with e_hull <= E (eV/atom)")
    sub.add_argument("--denominator", choices=("full", "filtered"), default="full")
    sub.add_argument("--cache", default=None, help="embedding cache file")
    sub.add_argument("--workers", type=int, default=1)
    sub.add_argument("--out", default=None, help="output path (default stdout)")
    sub.add_argument("--format", choices=("json", "csv"), default="json")
    sub.add_argument("--property-table", default=None, help="alternative element-property CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xtalmet",
        description="Crystal distance functions and uniqueness/novelty metrics.",
    )
    parser.add_argument("--log-level", default="INFO",
                        choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    commands = parser.add_subparsers(dest="command", required=True)

    fp = commands.add_parser("fingerprint", help="precompute an embedding cache")
    _add_shared_flags(fp)

    uni = commands.add_parser("uniqueness", help="uniqueness of a sample set")
    _add_shared_flags(uni)

    nov = commands.add_parser("novelty", help="novelty of a sample set against training data")
    _add_shared_flags(nov)
    nov.add_argument("--train", required=True, help="training set (JSONL)")
    nov.add_argument("--train-cache", default=None, help="embedding cache for the training set")

    pw = commands.add_parser("pairwise", help="export a raw distance matrix")
    _add_shared_flags(pw)
    pw.add_argument("--train", default=None, help="optional second set (JSONL)")

    par = commands.add_parser("pareto", help="Pareto frontier over metric reports")
    par.add_argument("reports", nargs="+", help="metric report JSON files")
    par.add_argument("--out", default=None)
    par.add_argument("--format", choices=("json", "csv"), default="json")

    shuf = commands.add_parser("shuffle-check", help="permutation audit of discrete uniqueness")
    _add_shared_flags(shuf)
    shuf.add_argument("--seed-count", type=int, default=5)

    return parser


def _kind_from_args(args) -> DistanceKind:
    table = None
    if getattr(args, "property_table", None):
        table = PropertyTable.from_csv(args.property_table)
    return DistanceKind(
        name=args.distance,
        k=args.k,
        tolerances=MatchTolerances(ltol=args.ltol, stol=args.stol, angle_tol=args.angle_tol),
        table=table,
    )


def _policy_from_args(args) -> ScreenPolicy | None:
    denominator = "full_set" if args.denominator == "full" else "filtered_set"
    if args.filter_ehull is None:
        if denominator == "filtered_set":
            return ScreenPolicy(e_hull_max=math.inf, denominator=denominator)
        return None
    return ScreenPolicy(e_hull_max=args.filter_ehull, denominator=denominator)


def _load_samples(path: str, label: str | None = None) -> SampleSet:
    src = Path(path)
    if not src.exists():
        raise InputError(f"input file not found: {path}")
    return parse_jsonl(src.read_bytes(), label=label or src.stem)


def _default_cache_path(input_path: str, kind: DistanceKind) -> Path | None:
    cache_dir = os.environ.get("XTALMET_CACHE_DIR")
    if not cache_dir:
        return None
    stem = Path(input_path).stem
    return Path(cache_dir) / f"{stem}.{kind.name}.cache.csv"


def _embeddings_with_cache(samples, kind, cache_path, input_path, workers):
    """Load embeddings from cache when valid; else compute (and save if a path is known)."""
    if kind.name not in CONTINUOUS_KIND_NAMES:
        return None
    path = Path(cache_path) if cache_path else _default_cache_path(input_path, kind)
    if path is not None and path.exists():
        return cache.read_cache(path, kind, samples)
    embeddings = kind.embed_all(samples.crystals, workers=workers)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        cache.write_cache(path, kind, samples, embeddings)
        logger.info("wrote embedding cache %s", path)
    return embeddings


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_fingerprint(args) -> int:
    kind = _kind_from_args(args)
    if kind.name not in CONTINUOUS_KIND_NAMES:
        raise InputError(f"fingerprint supports kinds {CONTINUOUS_KIND_NAMES}, got {kind.name!r}")
    samples = _load_samples(args.input)
    embeddings = kind.embed_all(samples.crystals, workers=args.workers)
    path = args.cache or args.out or _default_cache_path(args.input, kind)
    if path is None:
        raise InputError("fingerprint needs --cache/--out or XTALMET_CACHE_DIR")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    cache.write_cache(path, kind, samples, embeddings)
    logger.info("wrote embedding cache %s", path)
    return EXIT_OK


def cmd_uniqueness(args) -> int:
    kind = _kind_from_args(args)
    samples = _load_samples(args.input)
    embeddings = _embeddings_with_cache(samples, kind, args.cache, args.input, args.workers)
    start = time.perf_counter()
    report = uniqueness_report(
        samples, kind, _policy_from_args(args), workers=args.workers, embeddings=embeddings
    )
    logger.info("uniqueness total: %.3f s", time.perf_counter() - start)
    _emit(report.to_json() + "\n" if args.format == "json" else reports_to_csv([report]), args.out)
    return EXIT_OK


def cmd_novelty(args) -> int:
    kind = _kind_from_args(args)
    samples = _load_samples(args.input)
    train = _load_samples(args.train, label="train")
    embeddings = _embeddings_with_cache(samples, kind, args.cache, args.input, args.workers)
    train_embeddings = _embeddings_with_cache(
        train, kind, args.train_cache, args.train, args.workers
    )
    start = time.perf_counter()
    report = novelty_report(
        samples,
        train,
        kind,
        _policy_from_args(args),
        workers=args.workers,
        embeddings=embeddings,
        train_embeddings=train_embeddings,
    )
    logger.info("novelty total: %.3f s", time.perf_counter() - start)
    _emit(report.to_json() + "\n" if args.format == "json" else reports_to_csv([report]), args.out)
    return EXIT_OK


def cmd_pairwise(args) -> int:
    kind = _kind_from_args(args)
    samples = _load_samples(args.input)
    other = _load_samples(args.train) if args.train else None
    matrix = pairwise_matrix(
        samples.crystals, other.crystals if other else None, kind, workers=args.workers
    )
    if args.format == "json":
        import json as _json

        _emit(_json.dumps(matrix.tolist()) + "\n", args.out)
    else:
        _emit("\n".join(",".join(f"{v!r}" for v in row) for row in matrix) + "\n", args.out)
    return EXIT_OK


def cmd_pareto(args) -> int:
    reports = []
    for path in args.reports:
        src = Path(path)
        if not src.exists():
            raise InputError(f"report file not found: {path}")
        reports.append(MetricReport.from_json(src.read_text()))
    frontier = set(pareto_front(reports))
    if args.format == "json":
        import json as _json

        rows = [
            {"label": r.label, "uniqueness": r.uniqueness, "novelty": r.novelty,
             "pareto_optimal": r.label in frontier}
            for r in reports
        ]
        _emit(_json.dumps(rows, indent=2) + "\n", args.out)
    else:
        lines = ["label,uniqueness,novelty,pareto_optimal"]
        lines += [
            f"{r.label},{r.uniqueness!r},{r.novelty!r},{str(r.label in frontier).lower()}"
            for r in reports
        ]
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_shuffle_check(args) -> int:
    kind = _kind_from_args(args)
    samples = _load_samples(args.input)
    audit = shuffle_audit(
        samples,
        kind,
        seeds=list(range(args.seed_count)),
        policy=_policy_from_args(args),
        workers=args.workers,
    )
    if args.format == "json":
        import json as _json

        payload = {
            "distance": audit.kind,
            "per_seed": {str(k): v for k, v in audit.per_seed.items()},
            "mean": audit.mean,
            "std": audit.std,
        }
        _emit(_json.dumps(payload, indent=2) + "\n", args.out)
    else:
        lines = [f"seed_{k},{v!r}" for k, v in audit.per_seed.items()]
        lines.append(f"ave,{audit.mean!r}")
        lines.append(f"std,{audit.std!r}")
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


_COMMANDS = {
    "fingerprint": cmd_fingerprint,
    "uniqueness": cmd_uniqueness,
    "novelty": cmd_novelty,
    "pairwise": cmd_pairwise,
    "pareto": cmd_pareto,
    "shuffle-check": cmd_shuffle_check,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(name)s: %(message)s")
    np.seterr(all="raise", under="ignore")
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except XtalmetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - top-level CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
