import argparse
import logging
import sys

from app.commands.adiabatic import cmd_adiabatic
from app.commands.spectrum import cmd_spectrum
from app.commands.torsion import cmd_torsion
from app.commands.verify import cmd_verify
from app.core.config import RunConfig, load_config
from app.core.errors import ConfigError, TorsionLabError
from app.core.settings import EXIT_FAILED, EXIT_USAGE, OUT_ENV_VAR
from app.services.verification import CHECKS

log = logging.getLogger("app")

COMMANDS = {
    "spectrum": cmd_spectrum,
    "torsion": cmd_torsion,
    "adiabatic": cmd_adiabatic,
    "verify": cmd_verify,
}


class UsageParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _tags(text: str) -> tuple[str, ...]:
    tags = tuple(t.strip() for t in text.split(",") if t.strip())
    unknown = [t for t in tags if t not in CHECKS]
    if not tags or unknown:
        raise argparse.ArgumentTypeError(f"unknown tag(s) {unknown or text!r}; known: {', '.join(CHECKS)}")
    return tags


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(prog="torsionlab", description="Analytic torsion and adiabatic-limit workbench")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", metavar="PATH", help="dotted key = value run configuration")
    parser.add_argument("--out", metavar="DIR", help=f"output directory (default: ${OUT_ENV_VAR} or ./torsionlab-out)")
    parser.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel grid points")
    parser.add_argument("--only", type=_tags, metavar="TAG", help="comma-separated report tags")
    parser.add_argument("--seed", type=int, metavar="N", help="seed for the randomized algebra checks")
    parser.add_argument("--verbose", "-v", action="store_true")
    return parser


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.out:
        cfg = cfg.with_output(args.out)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")

    try:
        cfg = load_run_config(args)
    except ConfigError as e:
        log.error("ERROR in config: %r", e)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        log.error("ERROR in %s: %r", args.command, e)
        return EXIT_USAGE
    except (TorsionLabError, OSError) as e:
        log.error("ERROR in %s: %r", args.command, e)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
