"""Command-line entry point: ``nlwlab {simulate,tails,audit,exponents,replay}``."""
import argparse
import logging
import sys

from .runner import (EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, MODES, ChecksumMismatch, ConfigError,
                     flag_table, load_config, replay, run_experiment)
from .solver import BlowUp, ContractionFailure

log = logging.getLogger("nlwlab")


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _flag_type(f):
    if f.name == "lambda_values":
        return _float_list
    d = f.default
    if isinstance(d, bool):
        return lambda s: s.lower() in ("1", "true", "yes")
    if isinstance(d, int):
        return int
    if isinstance(d, float) or d is None:
        return float
    return str


def build_parser():
    ap = argparse.ArgumentParser(prog="nlwlab", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run the {mode} workload")
        p.add_argument("--config", help="TOML file; flags below override its entries")
        p.add_argument("--out", help="output root (defaults to output.directory)")
        p.add_argument("--run-id", help="explicit run directory name")
        p.add_argument("--workers", type=int, help="worker processes (default: $NLWLAB_WORKERS or 1)")
        grp = p.add_argument_group("configuration keys")
        for key, _cls, f in flag_table():
            grp.add_argument(f"--{key}", dest=key, type=_flag_type(f), default=None, metavar=f.name.upper())
    r = sub.add_parser("replay", help="regenerate a run from its manifest and verify checksums")
    r.add_argument("manifest")
    r.add_argument("--workers", type=int)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "replay":
            files = replay(args.manifest, args.workers)
            print(f"replay ok: {len(files)} artifacts match")
            return EXIT_OK
        overrides = {key: getattr(args, key) for key, _c, _f in flag_table() if getattr(args, key) is not None}
        cfg = load_config(args.config, overrides)
        code, outdir = run_experiment(cfg, args.command, args.out, args.workers, args.run_id)
        print(outdir)
        return code
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUp, ContractionFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ChecksumMismatch, OSError) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
