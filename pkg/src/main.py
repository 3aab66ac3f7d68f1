"""
Command-line entry point for hdsurv.
Sets up logging, initializes Sentry, parses the run configuration and
dispatches to the batch pipelines.

Exit codes: 0 success, 1 unexpected failure, 2 invalid input or config,
3 numerical failure. Errors are also printed to stderr as JSON.

File: hdsurv/src/main.py
"""
import argparse
import json
import logging
import sys
import time
import traceback
from typing import Any, Dict, List, Optional

import sentry_sdk
from pydantic import ValidationError

from src.config import settings
from src.errors import ConfigError, DataValidationError, NumericalError, SurvivalError
from src.pipelines import PIPELINES, Command, RunConfig
from src.utils.logging import setup_logging
from src.utils.metrics import metrics_collector
from src.utils.persistence import ArtifactWriter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def init_sentry() -> None:
    """Initialize Sentry if DSN is provided."""
    if settings.SENTRY_DSN:
        sentry_sdk.init(
            dsn=settings.SENTRY_DSN,
            environment=settings.SENTRY_ENVIRONMENT,
            traces_sample_rate=settings.SENTRY_TRACES_SAMPLE_RATE,
            ignore_errors=[KeyboardInterrupt],
        )
        logger.info("Sentry initialized")
    else:
        logger.warning("Sentry DSN not provided, error tracking disabled")


def _report(payload: Dict[str, Any]) -> None:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def _validation_payload(error: ValidationError) -> Dict[str, Any]:
    fields = []
    for item in error.errors():
        location = ".".join(str(part) for part in item.get("loc", ()))
        message = str(item.get("msg", ""))
        if not location and "(field '" in message:
            location = message.split("(field '", 1)[1].split("'", 1)[0]
        fields.append({"field": location, "message": message})
    return {"error": "ValidationError", "message": str(error), "fields": fields}


def run(config: RunConfig) -> int:
    """
    Execute one pipeline and write its manifest.

    Args:
        config: Validated run configuration

    Returns:
        Process exit code
    """
    start_time = time.perf_counter()
    metrics_collector.reset()
    try:
        writer = ArtifactWriter(config.output)
        logger.info(f"Running '{config.command.value}' into {config.output}")
        with metrics_collector.timed(f"pipeline_{config.command.value}"):
            PIPELINES[config.command](config, writer)
        writer.write_manifest(
            command=config.command.value,
            seed=config.seed,
            threads=config.threads,
            input_path=config.input,
            wall_time=time.perf_counter() - start_time,
            app_version=settings.APP_VERSION,
            metrics=metrics_collector.get_metrics(),
        )
    except ValidationError as e:
        logger.error(f"Invalid method options: {e}")
        _report(_validation_payload(e))
        return EXIT_INVALID
    except DataValidationError as e:
        logger.error(f"Invalid input: {e}")
        _report(e.to_dict())
        return EXIT_INVALID
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        sentry_sdk.capture_exception(e)
        _report(e.to_dict())
        return EXIT_NUMERICAL
    except Exception as e:
        logger.error(f"Unexpected error in '{config.command.value}': {e}\n{traceback.format_exc()}")
        sentry_sdk.capture_exception(e)
        payload = e.to_dict() if isinstance(e, SurvivalError) else {"error": type(e).__name__, "message": str(e)}
        _report(payload)
        return EXIT_FAILURE

    logger.info(f"'{config.command.value}' finished in {time.perf_counter() - start_time:.2f}s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdsurv", description="High-dimensional survival analysis pipelines")
    parser.add_argument("command", choices=[c.value for c in Command])
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--input", help="Input CSV")
    parser.add_argument("--output", help="Output directory")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--threads", type=int, help="Worker count (-1 for every core)")
    parser.add_argument("--method", help="Method name (e.g. cox-lasso) or a JSON object of method options")
    parser.add_argument("--model", help="Model file for predict")
    parser.add_argument("--log-level", help="Overrides LOG_LEVEL")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """
    Merge the JSON config file with command-line flags; flags win.

    Raises:
        ValidationError: The merged configuration is invalid
        ConfigError: The config file cannot be read
    """
    raw: Dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config {args.config}: {e}", field="config") from e
    raw["command"] = args.command
    for name in ("input", "output", "seed", "threads", "model"):
        value = getattr(args, name)
        if value is not None:
            raw[name] = value
    if args.method:
        method = dict(raw.get("method") or {})
        if args.method.lstrip().startswith("{"):
            method.update(json.loads(args.method))
        else:
            method["name"] = args.method
        raw["method"] = method
    return RunConfig.model_validate(raw)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the pipeline and return the exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    init_sentry()
    try:
        config = load_config(args)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        _report(_validation_payload(e))
        return EXIT_INVALID
    except (DataValidationError, json.JSONDecodeError) as e:
        logger.error(f"Invalid configuration: {e}")
        _report(e.to_dict() if isinstance(e, SurvivalError) else {"error": "ConfigError", "message": str(e)})
        return EXIT_INVALID
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
