"""
Command-line front end.

Exit codes: 0 success, 1 hard failure, 2 invalid configuration, 3 I/O error.
"""
import argparse
import json
import logging
import sys

from .experiments import COMMANDS, ConfigError, ExperimentConfig, run

log = logging.getLogger("spherefield")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def build_parser():
    p = argparse.ArgumentParser(prog="spherefield",
                                description="Isotropic Gaussian fields on the sphere.")
    p.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    p.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, metavar="N", help="worker threads")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, fn in COMMANDS.items():
        doc = (fn.__doc__ or "").strip().splitlines()
        sub.add_parser(name, help=doc[0] if doc else name)
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config, command=args.command) if args.config \
        else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out is not None:
        cfg.out = args.out
    cfg.validate(args.command, warn=False)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    try:
        cfg = load_config(args)
        rec = run(args.command, cfg)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (ValueError, ArithmeticError) as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    if not args.quiet:
        for line in rec.summary.get("lines", []):
            print(line)
        print(json.dumps({"command": rec.command, "config_hash": rec.config_hash,
                          "seed": rec.seed, "outputs": rec.outputs,
                          "summary": rec.to_dict()["summary"]}, indent=2))
    return rec.exit_code


if __name__ == "__main__":
    sys.exit(main())
