#!/usr/bin/env python3
"""
Command-line entry point for adaptive dyne phase discrimination

    python -m src.app constellation configs/two_qubit.toml
    python -m src.app run configs/two_qubit.toml --out results/two_qubit --threads 4
    python -m src.app sweep configs/heterodyne_sweep.toml --out results/sweep
    python -m src.app plot results/two_qubit/curves.csv --style time
"""

import argparse
import logging
import sys
from typing import List, Optional

from src.agents.base_agent import EXIT_ERROR, EXIT_OK
from src.agents.constellation_agent import ConstellationAgent
from src.agents.orchestrator_agent import OrchestratorAgent
from src.agents.plot_agent import PlotAgent
from src.services import __version__
from src.services.config import get_settings, parse_angle
from src.services.errors import ConfigError

logger = logging.getLogger(__name__)


def rate_list(text: str) -> List[float]:
    """'100pi,200pi,300pi' -> radians per unit time"""
    try:
        return [parse_angle(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasediscrim",
        description="Monte Carlo study of adaptive dyne phase discrimination",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("constellation", help="list the phase constellation and check uniqueness")
    check.add_argument("config")
    check.add_argument("--tolerance", type=float, default=1e-9)

    for name, help_text in (("run", "run the Monte Carlo ensemble"), ("sweep", "sweep heterodyne rates")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config")
        cmd.add_argument("--out", help="output directory (default $PHASEDISCRIM_OUT or ./results)")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--threads", type=positive_int, help="worker threads (default $PHASEDISCRIM_THREADS)")
        cmd.add_argument("--dt", type=float)
        cmd.add_argument("--horizon", type=float)
        if name == "sweep":
            cmd.add_argument("--rates", type=rate_list, help="comma-separated rates, e.g. 100pi,300pi")

    plot = sub.add_parser("plot", help="render a result CSV as SVG")
    plot.add_argument("csv")
    plot.add_argument("--style", choices=["time", "snr", "ttt"], default="time")
    plot.add_argument("--out", help="SVG path (default <csv stem>_<style>.svg)")
    plot.add_argument("--title")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        settings = get_settings()
    except ConfigError as e:
        logging.basicConfig(level=logging.INFO)
        logger.error(str(e))
        return EXIT_ERROR

    logging.basicConfig(
        level=getattr(logging, settings.log_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "constellation":
        result = ConstellationAgent(settings).process({
            "config_path": args.config,
            "tolerance": args.tolerance,
        })
        if "error" not in result:
            print("\n".join(result["lines"]))
        return result["exit_code"]

    if args.command == "plot":
        data = {"csv_path": args.csv, "style": args.style, "out_path": args.out}
        if args.title:
            data["title"] = args.title
        result = PlotAgent(settings).process(data)
        if "error" not in result:
            logger.info(f"Wrote {result['output']} ({result['series']} series)")
        return result["exit_code"]

    result = OrchestratorAgent(settings).process({
        "mode": args.command,
        "config_path": args.config,
        "out_dir": args.out,
        "seed": args.seed,
        "threads": args.threads,
        "dt": args.dt,
        "horizon": args.horizon,
        "rates": getattr(args, "rates", None),
    })
    if "error" not in result:
        logger.info(f"Outputs: {sorted(result['manifest'].outputs)}")
    return result.get("exit_code", EXIT_OK)


if __name__ == "__main__":
    sys.exit(main())
