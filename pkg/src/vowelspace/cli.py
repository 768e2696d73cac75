"""Command-line entry point: ``vowelspace {synthesize,analyze,spectra,report,run-all}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline
from .pipeline import DataError, NumericalError, RunConfig, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--grid", metavar="LIST", type=_float_list, help="f0 grid in Hz, comma-separated")
    common.add_argument("--breakpoint", metavar="HZ", type=float)
    common.add_argument("--q", metavar="LEVEL", type=float, help="FDR level")
    common.add_argument("--fade-ms", metavar="N", type=float)
    common.add_argument("--segment-ms", metavar="N", type=float)
    common.add_argument("--averaging", choices=("spectra", "distmat"))
    common.add_argument("--middle-ear", metavar="PATH", help="middle-ear gain table (Hz, dB)")
    common.add_argument("--no-timestamp", action="store_true", help="omit the report's time header")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="vowelspace", description="Vowel-space analysis across f0.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synthesize", parents=[common], help="write the synthetic WAV corpus")
    p = sub.add_parser("analyze", parents=[common], help="analyse a corpus manifest")
    p.add_argument("--manifest", required=True, metavar="PATH")
    p = sub.add_parser("spectra", parents=[common], help="export cochlea-scaled spectra")
    p.add_argument("--manifest", required=True, metavar="PATH")
    p.add_argument("--vowels", type=_str_list, metavar="LIST")
    p.add_argument("--speakers", type=_str_list, metavar="LIST")
    p.add_argument("--f0", type=_float_list, metavar="LIST")
    p.add_argument("--output", metavar="PATH", help="CSV path (default OUT/spectra_selection.csv)")
    sub.add_parser("report", parents=[common], help="rebuild report.txt from analysis results")
    sub.add_parser("run-all", parents=[common], help="synthesize, then analyse")
    return parser


def config_from_args(args) -> RunConfig:
    overrides = {
        "out_dir": args.out,
        "grid": args.grid,
        "breakpoint": args.breakpoint,
        "q": args.q,
        "fade_ms": args.fade_ms,
        "segment_ms": args.segment_ms,
        "averaging": args.averaging,
        "middle_ear": args.middle_ear,
        "timestamp": False if args.no_timestamp else None,
    }
    if args.config:
        return RunConfig.from_json(args.config, **overrides)
    return RunConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        config = config_from_args(args)
        out = config.out_dir
        if args.command == "synthesize":
            manifest = pipeline.cmd_synthesize(config, out)
            print(f"wrote {len(manifest.entries)} tokens to {out}")
        elif args.command == "analyze":
            pipeline.cmd_analyze(args.manifest, config, out)
            print(f"results written to {out}")
        elif args.command == "spectra":
            text = pipeline.cmd_spectra(args.manifest, config, args.vowels, args.speakers, args.f0)
            dest = args.output or os.path.join(out, "spectra_selection.csv")
            pipeline.commit_files(os.path.dirname(os.path.abspath(dest)),
                                  {os.path.basename(dest): text})
            print(f"spectra written to {dest}")
        elif args.command == "report":
            sys.stdout.write(pipeline.cmd_report(out, config))
        elif args.command == "run-all":
            pipeline.run_all(config, out)
            with open(os.path.join(out, "report.txt"), encoding="utf-8") as fh:
                sys.stdout.write(fh.read())
    except (UsageError, DataError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
