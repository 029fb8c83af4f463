"""Command line entry point: ``tlsfeat extract|cert|synth``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, kernels
from .flows import DEFAULT_REORDER_CAP
from .report import (Options, bench_csv, bench_table, benchmark, format_summary, run)
from .x509 import load_certificate_bytes, parse_certificate

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tlsfeat",
                                description="Extract TLS stream features from pcap files.")
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__} ({kernels.BACKEND} kernels)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command")

    ex = sub.add_parser("extract", help="analyze pcap files or directories")
    ex.add_argument("inputs", nargs="+", metavar="PCAP")
    ex.add_argument("--out", default=".", metavar="DIR", help="output directory")
    ex.add_argument("--splt-cap", type=_positive, default=100, metavar="N")
    ex.add_argument("--pretty", action="store_true",
                    help="indent summary files (feature files stay one object per line)")
    ex.add_argument("--bench", action="store_true", help="time repeated runs, write bench.csv")
    ex.add_argument("--repeats", type=_positive, default=5, metavar="K")
    ex.add_argument("--summary", choices=("csv", "table"), help="print per-file summary")
    ex.add_argument("--max-reorder-buffer", type=_positive, default=DEFAULT_REORDER_CAP,
                    metavar="BYTES")

    ce = sub.add_parser("cert", help="parse a single certificate (DER or PEM)")
    ce.add_argument("file")
    ce.add_argument("--pretty", action="store_true")

    sy = sub.add_parser("synth", help="write a synthetic mixed-traffic pcap")
    sy.add_argument("output")
    sy.add_argument("--megabytes", type=_positive, default=200)
    sy.add_argument("--seed", type=int, default=1)
    return p


def _extract(args) -> int:
    options = Options(splt_cap=args.splt_cap, reorder_cap=args.max_reorder_buffer)
    missing = [p for p in args.inputs if not Path(p).exists()]
    for m in missing:
        logging.error("no such file or directory: %s", m)
    if len(missing) == len(args.inputs):
        return EXIT_USAGE
    present = [p for p in args.inputs if p not in missing]
    if args.bench:
        rows = benchmark(present, args.out, args.repeats, options)
        if not rows:
            return EXIT_USAGE
        Path(args.out, "bench.csv").write_text(bench_csv(rows))
        sys.stdout.write(bench_table(rows))
        return EXIT_PARTIAL if missing else EXIT_OK
    code, results, _ = run(present, args.out, options, pretty=args.pretty)
    if args.summary and results:
        sys.stdout.write(format_summary(results, args.summary))
    if code == EXIT_OK and missing:
        code = EXIT_PARTIAL
    return code


def _cert(args) -> int:
    try:
        raw = Path(args.file).read_bytes()
    except OSError as exc:
        logging.error("%s", exc)
        return EXIT_USAGE
    info = parse_certificate(load_certificate_bytes(raw))
    print(json.dumps(info.to_dict(), indent=2 if args.pretty else None, ensure_ascii=False))
    return EXIT_OK if info.parsed else EXIT_PARTIAL


def _synth(args) -> int:
    from .synth import generate_mixed_pcap
    stats = generate_mixed_pcap(args.output, args.megabytes * 1024 * 1024, seed=args.seed)
    print(json.dumps(stats))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    if args.command == "extract":
        return _extract(args)
    if args.command == "cert":
        return _cert(args)
    if args.command == "synth":
        return _synth(args)
    parser.print_usage(sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
