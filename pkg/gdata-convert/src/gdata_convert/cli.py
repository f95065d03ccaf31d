"""Command-line entry point for dataset conversion and verification."""

from __future__ import annotations

import argparse
import json
import sys

from .convert import ConversionError, SplitSpec, convert, verify


def cmd_convert(args):
    split = SplitSpec(seed=args.seed, mode=args.mode)
    try:
        sidecar = convert(args.source, args.dataset, split, args.out,
                          expected_sha256=args.sha256)
    except ConversionError as e:
        raise SystemExit(str(e))
    print(json.dumps(sidecar, indent=2))
    return 0


def cmd_verify(args):
    failures = verify(args.grph, sidecar_path=args.sidecar)
    if failures:
        for f in failures:
            print(f"FAIL: {f}")
        return 1
    print("PASS")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gdata-convert",
        description="Convert citation-network archives to GRPH files")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a source archive")
    p.add_argument("--source", required=True, help=".npz archive path")
    p.add_argument("--dataset", required=True,
                   help="dataset name (cora_ml, citeseer, pubmed)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["exchangeable", "stratified"],
                   default="exchangeable")
    p.add_argument("--sha256", default=None,
                   help="require this source checksum")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("verify", help="re-check a GRPH file's invariants")
    p.add_argument("--grph", required=True)
    p.add_argument("--sidecar", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(sys.argv[1:] if argv is None else argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
