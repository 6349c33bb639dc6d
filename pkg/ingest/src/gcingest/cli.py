"""Command-line converter: raw distribution -> native dataset directory.

    ingest --source planetoid --name cora --in RAW/ --out data/cora/

For the well-known citation datasets the converted node/feature/class and
split counts are checked against the published statistics and a mismatch
is a hard failure (both values printed).  Published edge counts tally raw
directed citation links, so the undirected-deduplicated count is reported
alongside them but only warned about.

Exit codes: 0 success, 1 statistics mismatch, 2 bad usage,
3 missing input.
"""

from __future__ import annotations

import argparse
import sys

from graphcondense.data import DatasetError, load_dataset, save_dataset

from .ogb import load_ogb
from .planetoid import load_planetoid

EXIT_MISMATCH = 1
EXIT_BAD_USAGE = 2
EXIT_MISSING_INPUT = 3

# published statistics: nodes, raw edge count, classes, features, splits
EXPECTED = {
    "cora": dict(n=2708, e=5429, c=7, d=1433, train=140, val=500, test=1000),
    "citeseer": dict(n=3327, e=4732, c=6, d=3703, train=120, val=500,
                     test=1000),
    "ogbn-arxiv": dict(n=169343, e=1166243, c=40, d=128, train=90941,
                       val=29799, test=48603),
}


class StatsMismatch(RuntimeError):
    pass


def check_expected(ds, name: str) -> list:
    """Hard-fails on any shape/split mismatch; returns warnings."""
    exp = EXPECTED.get(name)
    if exp is None:
        return [f"no published statistics for '{name}'; counts unchecked"]
    got = dict(n=ds.num_nodes, c=ds.num_classes, d=ds.num_features,
               train=len(ds.train_idx), val=len(ds.val_idx),
               test=len(ds.test_idx))
    for key, want in exp.items():
        if key == "e":
            continue
        if got[key] != want:
            raise StatsMismatch(
                f"{name}: {key} is {got[key]}, published value is {want}")
    warnings = []
    if ds.num_edges != exp["e"]:
        warnings.append(
            f"{name}: {ds.num_edges} undirected deduplicated edges vs "
            f"{exp['e']} published raw citation links (expected: raw "
            f"counts include duplicates/direction)")
    return warnings


def convert(source: str, name: str, in_dir: str, out_dir: str,
            val_size: int = 500) -> int:
    if source == "planetoid":
        ds = load_planetoid(in_dir, name, val_size=val_size)
    elif source == "ogb":
        ds = load_ogb(in_dir, name)
    else:
        raise ValueError(f"unknown source kind: {source}")
    warnings = check_expected(ds, name)
    save_dataset(ds, out_dir)
    load_dataset(out_dir)  # round-trip through the native validator
    print(f"{name}: N={ds.num_nodes} E={ds.num_edges} C={ds.num_classes} "
          f"d={ds.num_features} splits={len(ds.train_idx)}/"
          f"{len(ds.val_idx)}/{len(ds.test_idx)} -> {out_dir}")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ingest",
        description="convert raw graph datasets to the native binary format")
    p.add_argument("--source", required=True, choices=("planetoid", "ogb"))
    p.add_argument("--name", required=True,
                   help="dataset name, e.g. cora or ogbn-arxiv")
    p.add_argument("--in", dest="in_dir", required=True,
                   help="raw distribution directory")
    p.add_argument("--out", dest="out_dir", required=True,
                   help="native dataset output directory")
    p.add_argument("--val-size", type=int, default=500,
                   help="planetoid validation window size (default 500)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return convert(args.source, args.name, args.in_dir, args.out_dir,
                       val_size=args.val_size)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except StatsMismatch as exc:
        print(f"error: statistics mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (ValueError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_USAGE


if __name__ == "__main__":
    sys.exit(main())
