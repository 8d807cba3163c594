"""
Точка входа CLI:

    openhybrid {train|eval|histogram|compare|sweep} --config <path> [--key value ...]

Коды выхода: 0 успех, 1 численный сбой (расхождение обучения), 2 ошибка
использования или ввода-вывода.
"""
import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

# Добавляем корневую директорию в Python path
sys.path.insert(0, str(Path(__file__).parent))

from autodiff.tensor import NonFiniteError
from config.logging import get_logger, setup_logging
from config.messages import USER_MESSAGES
from data.datasets import LayoutError, PartitionError
from data.idx import IdxFormatError
from harness.commands import cmd_compare, cmd_eval, cmd_histogram, cmd_sweep, cmd_train, summary_line
from harness.config import ConfigError, ExperimentConfig, load_config, parse_overrides
from models.checkpoint import CheckpointError
from openset.inference import ThresholdError
from openset.metrics import MetricError
from training.trainer import DivergenceError

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2

USAGE_ERRORS = (ConfigError, IdxFormatError, CheckpointError, PartitionError, LayoutError,
                ThresholdError, MetricError)

logger = get_logger("main")


def _train(config: ExperimentConfig) -> str:
    outcome = cmd_train(config)
    return USER_MESSAGES["train_done"].format(checkpoint=outcome.checkpoint, loss_log=outcome.loss_log,
                                              rows=outcome.rows)


def _eval(config: ExperimentConfig) -> str:
    outcome = cmd_eval(config)
    return outcome.report.text() + "\n" + USER_MESSAGES["eval_done"].format(report=outcome.report_path)


def _histogram(config: ExperimentConfig) -> str:
    outcome = cmd_histogram(config)
    return summary_line(outcome) + "\n" + USER_MESSAGES["histogram_done"].format(
        histogram=outcome.histogram, rows=outcome.rows)


def _compare(config: ExperimentConfig) -> str:
    outcome = cmd_compare(config)
    return USER_MESSAGES["compare_done"].format(table=outcome.table)


def _sweep(config: ExperimentConfig) -> str:
    outcome = cmd_sweep(config)
    return USER_MESSAGES["sweep_done"].format(table=outcome.table)


COMMANDS: Dict[str, Callable[[ExperimentConfig], str]] = {
    "train": _train,
    "eval": _eval,
    "histogram": _histogram,
    "compare": _compare,
    "sweep": _sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="openhybrid",
        allow_abbrev=False,
        description="Open-set recognition with a jointly trained classifier and flow density model",
    )
    parser.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    parser.add_argument("--config", type=Path, default=None, help="flat key = value config file")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)

    if args.command not in COMMANDS:
        print(USER_MESSAGES["unknown_command"].format(command=args.command, choices=", ".join(COMMANDS)),
              file=sys.stderr)
        return EXIT_USAGE

    try:
        config = load_config(args.config, parse_overrides(rest))
        print(COMMANDS[args.command](config))
        return EXIT_OK
    except (DivergenceError, NonFiniteError) as e:
        logger.error(f"Command {args.command} failed numerically: {e}")
        print(USER_MESSAGES["divergence"].format(error=e), file=sys.stderr)
        return EXIT_NUMERIC
    except USAGE_ERRORS as e:
        logger.error(f"Command {args.command} failed: {e}")
        print(USER_MESSAGES["usage_error"].format(error=e), file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"Command {args.command} failed on I/O: {e}")
        print(USER_MESSAGES["io_error"].format(path=getattr(e, "filename", None) or "-", error=e.strerror or e),
              file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
