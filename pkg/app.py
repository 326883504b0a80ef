import argparse
import logging
import sys
import time
from typing import List, Optional, TextIO

import config
from models.errors import BeamformingError
from models.experiment import RunConfig
from routes.commands import commands
from storage.factory import StorageFactory

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_path", metavar="PATH",
                        help="experiment file ([system], [sweep], [run], [analog], [estimation])")
    common.add_argument("--seed", type=int, default=None, help="base seed (overrides the file)")
    common.add_argument("--out", default=config.OUTPUT_PATH, metavar="PATH",
                        help="CSV destination; '-' or absent writes to stdout")
    common.add_argument("--preset", default=None, metavar="NAME", help="named experiment")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one setting (repeatable)")
    common.add_argument("--threads", type=int, default=config.THREADS,
                        help="worker threads for Monte Carlo trials")

    parser = argparse.ArgumentParser(
        prog="beamsim",
        description="Kronecker hybrid beamforming and two-stage channel estimation simulator")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name, description in commands.descriptions.items():
        subparsers.add_parser(name, parents=[common], help=description, description=description)
    return parser


def parse_run_config(argv: Optional[List[str]] = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    return RunConfig(
        subcommand=args.subcommand,
        config_path=args.config_path,
        seed=args.seed,
        out=args.out,
        preset=args.preset,
        overrides=tuple(args.overrides),
        threads=max(args.threads, 1),
    )


def report_error(error: Exception, stream: Optional[TextIO] = None) -> None:
    """One machine-readable line: error=<Code> message=<text>"""
    code = error.code if isinstance(error, BeamformingError) else type(error).__name__
    message = " ".join(str(error).split())
    print(f"error={code} message={message}", file=stream or sys.stderr)


def run(argv: Optional[List[str]] = None, stream: Optional[TextIO] = None) -> int:
    """Parse arguments, run one subcommand and return the process exit status"""
    config.configure_logging()
    run_config = parse_run_config(argv)
    start = time.time()
    try:
        store = StorageFactory.create_result_store("csv", destination=run_config.out, stream=stream)
        status = commands.dispatch(run_config, store)
    except BeamformingError as e:
        logger.debug(f"{run_config.subcommand} failed with {e.code}")
        report_error(e)
        return e.exit_code
    except (ArithmeticError, ValueError) as e:
        logger.error(f"Numerical failure in {run_config.subcommand}: {str(e)}")
        report_error(e)
        return 4
    except Exception as e:
        logger.error(f"Unexpected error in {run_config.subcommand}: {str(e)}", exc_info=True)
        report_error(e)
        return 1
    logger.info(f"{run_config.subcommand} took {time.time() - start:.2f} seconds")
    return status
