"""Command-line front end.

Subcommands run individual pipeline phases against the same configuration
file, reusing artifacts already on disk; ``run`` executes the full
pipeline. Exit codes: 0 success, 1 input error, 2 internal soundness error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import (
    EvaluationError,
    InputError,
    InvalidModelError,
    ParseError,
    SoundnessError,
    SpecificationError,
    StructureError,
)
from .pipeline import run_pipeline

log = logging.getLogger("imcverify")

_PHASES = {
    "run": ("abstract", "verify", "improve", "simulate"),
    "abstract": ("abstract",),
    "verify": ("verify",),
    "improve": ("improve",),
    "simulate": ("simulate",),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imcverify",
        description=(
            "Sound interval Markov chain abstraction and reach-avoid "
            "verification of stochastic systems"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("run", "full pipeline: abstract, verify, improve, simulate"),
        ("abstract", "build the IMC abstraction and export it"),
        ("verify", "robust value iteration over an existing abstraction"),
        ("improve", "clustering passes over existing verification results"),
        ("simulate", "Monte Carlo validation of existing results"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", required=True, help="path to the YAML config")
        p.add_argument("--output-dir", default=None, help="override the output directory")
        p.add_argument("--seed", type=int, default=None, help="override the Monte Carlo seed")
        p.add_argument("-v", "--verbose", action="count", default=0)
        p.add_argument(
            "--threads",
            type=int,
            default=1,
            help="worker hint; the current implementation is sequential",
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        config = load_config(args.config)
        if args.output_dir is not None:
            config.output_dir = Path(args.output_dir)
        if args.seed is not None:
            config.monte_carlo.seed = args.seed
        summary = run_pipeline(config, phases=_PHASES[args.command])
    except SoundnessError as exc:
        log.error("internal soundness error: %s", exc)
        return 2
    except (
        InputError,
        ParseError,
        StructureError,
        SpecificationError,
        InvalidModelError,
        EvaluationError,
        ValueError,
    ) as exc:
        log.error("%s", exc)
        return 1

    if "classification" in summary:
        counts = summary["classification"]["counts"]
        log.info(
            "states: %d (satisfies %d, violates %d, undetermined %d)",
            summary.get("states", 0),
            counts["satisfies"],
            counts["violates"],
            counts["undetermined"],
        )
    simulate_summary = summary.get("phases", {}).get("simulate")
    if simulate_summary is not None:
        log.info(
            "validation: %d cells sampled, all sound: %s",
            len(simulate_summary["validation"]),
            simulate_summary["all_sound"],
        )
    log.info("artifacts written to the configured output directory")
    return 0


if __name__ == "__main__":
    sys.exit(main())
