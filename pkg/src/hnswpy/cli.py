"""Command-line driver: gen | gt | build | query | sweep."""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bench
from .dataset import (
    Dataset, FormatError, SyntheticSpec, generate, read_bvecs, read_fvecs, read_ivecs,
    write_fvecs, write_ivecs,
)
from .graph import IndexParams
from .oracle import ground_truth
from .storage import load_index, save_index

log = logging.getLogger("hnswpy")


class UsageError(Exception):
    pass


def _int_list(text: str):
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers: {text!r}")
    if not values or min(values) < 0:
        raise argparse.ArgumentTypeError(f"expected non-negative integers: {text!r}")
    return values


def _auto_list(cast):
    """Comma list where 'auto' stands for the parameter's default."""

    def parse(text: str):
        out = []
        for tok in text.split(","):
            tok = tok.strip()
            if tok == "auto":
                out.append(None)
                continue
            try:
                out.append(cast(tok))
            except ValueError:
                raise argparse.ArgumentTypeError(f"bad value {tok!r} in {text!r}")
        return out

    return parse


def _load_vectors(path: str, kind: str) -> Dataset:
    if path.endswith(".bvecs"):
        data = read_bvecs(path, kind)
    else:
        data = read_fvecs(path, kind)
    data.label = Path(path).stem
    return data


def _queries(args, data: Dataset):
    if args.queries:
        queries = _load_vectors(args.queries, data.kind)
        if len(queries) and len(data) and queries.dim != data.dim:
            raise UsageError(f"queries have dimension {queries.dim}, dataset has {data.dim}")
        return queries.vectors
    if args.self_queries:
        rng = np.random.default_rng(args.seed)
        n = min(args.n_queries, len(data))
        return data.vectors[np.sort(rng.choice(len(data), size=n, replace=False))]
    raise UsageError("--queries is required (or pass --self-queries)")


def _params(args, **overrides) -> IndexParams:
    values = dict(
        m=args.m, mmax=args.mmax, mmax0=args.mmax0, ef_construction=args.ef_construction,
        level_mult=args.level_mult, selector=args.selector,
        extend_candidates=args.extend_candidates, keep_pruned=args.keep_pruned, seed=args.seed,
    )
    values.update(overrides)
    return IndexParams(**values)


def _open_out(args):
    if args.out and args.out != "-":
        return open(args.out, "w", newline="")
    return contextlib.nullcontext(sys.stdout)


def cmd_gen(args) -> int:
    spec = SyntheticSpec(
        family=args.family, n=args.n + args.holdout, dim=args.dim, clusters=args.clusters,
        spread=args.spread, seed=args.seed,
    )
    data = generate(spec)
    base, queries = data.split(args.holdout)
    write_fvecs(base, args.out)
    if args.holdout:
        if not args.queries_out:
            raise UsageError("--holdout needs --queries-out")
        write_fvecs(queries, args.queries_out)
    return 0


def cmd_gt(args) -> int:
    data = _load_vectors(args.dataset, args.distance)
    queries = _queries(args, data)
    if args.k > len(data):
        raise UsageError(f"k ({args.k}) exceeds the dataset size ({len(data)})")
    gt = ground_truth(data, queries, args.k)
    write_ivecs(gt.ids, args.out)
    return 0


def cmd_build(args) -> int:
    data = _load_vectors(args.dataset, args.distance)
    if len(data) == 0:
        raise UsageError("dataset is empty")
    params = _params(args)
    index, build_ms = bench.build_index(data, params)
    nbytes = save_index(index, args.out)
    report = {
        "dataset": data.label,
        "n": index.n,
        "dim": index.dim,
        "distance": index.kind.name,
        "params": asdict(params),
        "build_time_ms": round(build_ms, 3),
        "snapshot_bytes": nbytes,
        "stats": asdict(index.stats()),
    }
    print(json.dumps(report, indent=2))
    return 0


def cmd_query(args) -> int:
    index = load_index(args.index)
    if args.queries:
        queries = _load_vectors(args.queries, index.kind.name).vectors
    elif args.self_queries:
        rng = np.random.default_rng(args.seed)
        n = min(args.n_queries, index.n)
        queries = index.vectors[np.sort(rng.choice(index.n, size=n, replace=False))]
    else:
        raise UsageError("--queries is required (or pass --self-queries)")
    if bad := [ef for ef in args.ef if ef < args.k]:
        raise UsageError(f"every ef must be >= k ({args.k}); got {bad}")
    if args.gt:
        truth = read_ivecs(args.gt)
        if len(truth) != len(queries):
            raise UsageError(f"{len(truth)} ground-truth rows for {len(queries)} queries")
        if any(len(row) < args.k for row in truth):
            raise UsageError(f"ground truth does not cover k={args.k}")
    else:
        truth = ground_truth(index.vectors, queries, args.k, index.kind)
    label = args.label or Path(args.index).stem
    records = bench.measure(index, queries, truth, args.k, args.ef, label)
    with _open_out(args) as fh:
        bench.write_csv(records, fh)
    return 0


def cmd_sweep(args) -> int:
    data = _load_vectors(args.dataset, args.distance)
    queries = _queries(args, data)
    if bad := [ef for ef in args.ef if ef < args.k]:
        raise UsageError(f"every ef must be >= k ({args.k}); got {bad}")
    truth = None
    if args.gt:
        ids = read_ivecs(args.gt)
        if len(ids) != len(queries):
            raise UsageError(f"{len(ids)} ground-truth rows for {len(queries)} queries")
        truth = ids
    grid = bench.Grid(
        m=args.m, mmax=args.mmax, mmax0=args.mmax0, ef_construction=args.ef_construction,
        level_mult=args.level_mult, selector=[s or "heuristic" for s in args.selector],
        extend_candidates=[args.extend_candidates], keep_pruned=[args.keep_pruned],
        seed=args.seed,
    )
    records = bench.sweep(
        data, queries, grid, args.k, args.ef, args.sizes, truth, args.label or data.label
    )
    with _open_out(args) as fh:
        bench.write_csv(records, fh)
    return 0


def _add_index_flags(p, grid: bool) -> None:
    if grid:
        ints, auto_ints, floats = _int_list, _auto_list(int), _auto_list(_float)
        p.add_argument("--m", type=ints, default=[16], help="comma list")
        p.add_argument("--mmax", type=auto_ints, default=[None], help="comma list; auto = M")
        p.add_argument("--mmax0", type=auto_ints, default=[None], help="comma list; auto = 2M")
        p.add_argument("--ef-construction", type=ints, default=[100], help="comma list")
        p.add_argument("--level-mult", type=floats, default=[None],
                       help="comma list; auto = 1/ln(M)")
        p.add_argument("--selector", type=_auto_list(_selector), default=["heuristic"],
                       help="comma list of simple,heuristic")
    else:
        p.add_argument("--m", type=int, default=16)
        p.add_argument("--mmax", type=int, help="default M")
        p.add_argument("--mmax0", type=int, help="default 2M")
        p.add_argument("--ef-construction", type=int, default=100)
        p.add_argument("--level-mult", type=_float, help="default 1/ln(M)")
        p.add_argument("--selector", choices=["simple", "heuristic"], default="heuristic")
    p.add_argument("--extend-candidates", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--keep-pruned", action=argparse.BooleanOptionalAction, default=True)


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(text)
    return value


def _selector(text: str) -> str:
    if text not in ("simple", "heuristic"):
        raise ValueError(text)
    return text


def _add_query_flags(p) -> None:
    p.add_argument("--queries", help="query vectors (fvecs/bvecs)")
    p.add_argument("--self-queries", action="store_true",
                   help="draw queries from the indexed set instead of a separate file")
    p.add_argument("--n-queries", type=int, default=100, help="with --self-queries")
    p.add_argument("--gt", help="ground truth ivecs; computed exactly when omitted")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--ef", type=_int_list, default=[10, 20, 50, 100, 200], help="comma list")
    p.add_argument("--label", help="dataset label for the CSV rows")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hnswpy", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset as fvecs")
    p.add_argument("--family", choices=["uniform", "clusters"], default="uniform")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--spread", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", type=int, default=0,
                   help="extra rows from the same distribution written to --queries-out")
    p.add_argument("--queries-out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("gt", help="exact k-NN ground truth as ivecs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries")
    p.add_argument("--self-queries", action="store_true")
    p.add_argument("--n-queries", type=int, default=100)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--distance", choices=["l2", "cosine"], default="l2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gt)

    p = sub.add_parser("build", help="build an index and save a snapshot")
    p.add_argument("--dataset", required=True)
    p.add_argument("--distance", choices=["l2", "cosine"], default="l2")
    _add_index_flags(p, grid=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="snapshot path")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="query a snapshot over a list of ef values; CSV out")
    p.add_argument("--index", required=True, help="snapshot written by build")
    _add_query_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("sweep", help="build and query a parameter grid; CSV out")
    p.add_argument("--dataset", required=True)
    p.add_argument("--distance", choices=["l2", "cosine"], default="l2")
    _add_index_flags(p, grid=True)
    _add_query_flags(p)
    p.add_argument("--sizes", type=_int_list, help="comma list of dataset prefix sizes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hnswpy: usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OverflowError, OSError, FormatError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"hnswpy: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
