"""
Discover command
Knockoff selection per layer, written as a selection report
"""
import logging
from pathlib import Path
from typing import List

from commands.base import Command, require
from exceptions import ConfigError, DataError
from preprocessing.artifacts import write_json
from preprocessing.trace_processor import ActivationTrace, load_trace
from schemas import DiscoverConfig, SelectionReport
from services import DiscoveryService, SelectionResult

logger = logging.getLogger(__name__)


def check_layer_ids(trace: ActivationTrace, layer_ids) -> None:
    unknown = [lid for lid in (layer_ids or []) if lid not in trace.layer_ids]
    if unknown:
        raise ConfigError(f"unknown layer id(s) {unknown}; trace has {trace.layer_ids}")


def read_selection_report(path) -> List[SelectionResult]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    try:
        report = SelectionReport.model_validate_json(path.read_text(encoding='utf-8'))
    except ValueError as exc:
        raise DataError(f"malformed selection report {path}: {exc}") from exc
    return [SelectionResult.from_dict(layer.model_dump()) for layer in report.layers]


def discovery_service(config) -> DiscoveryService:
    statistic_params = {'lambda_ratio': config.lambda_ratio} if config.statistic == 'lasso_cd' else None
    return DiscoveryService(
        statistic=config.statistic,
        repetitions=config.repetitions,
        keep_fraction=config.keep_fraction,
        offset=config.offset,
        group_threshold=config.group_threshold,
        all_samples=config.all_samples,
        statistic_params=statistic_params,
        shrinkage=config.shrinkage,
    )


def cmd_discover(config: DiscoverConfig) -> str:
    trace_path = require(config.trace, 'discover.trace')
    trace = load_trace(trace_path)
    check_layer_ids(trace, config.layer_ids)
    if isinstance(config.q, dict):
        check_layer_ids(trace, list(config.q))

    results = discovery_service(config).discover(trace, config.layer_ids, config.q, seed=config.seed)
    report = SelectionReport(
        trace=str(trace_path),
        seed=config.seed,
        layers=[result.to_dict() for result in results],
    )
    write_json(config.out, report.model_dump())
    logger.info("wrote selection report for %d layers to %s", len(results), config.out)
    return str(config.out)


discover_command = Command(
    name="discover",
    help="select critical neurons layer by layer",
    section="discover",
    schema=DiscoverConfig,
    handler=cmd_discover,
)
