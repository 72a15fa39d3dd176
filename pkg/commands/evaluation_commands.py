"""
Evaluate command
CE curves, CE differences between two traces and ablation grids, written as CSV
"""
import logging

import pandas as pd

from commands.base import Command, require
from commands.discovery_commands import check_layer_ids
from commands.learning_commands import learning_service
from preprocessing.artifacts import write_csv
from preprocessing.trace_processor import load_trace
from schemas import EvaluateConfig
from services import DiscoveryService, EvaluationService
from services.evaluation_service import (
    ablation_grid, random_scores, scores_from_selection, select_neurons,
)
from services.synthesis_service import load_network, load_simulation

logger = logging.getLogger(__name__)


def _discovery(config: EvaluateConfig) -> DiscoveryService:
    return DiscoveryService(
        statistic=config.statistic,
        repetitions=config.repetitions,
        keep_fraction=config.keep_fraction,
        all_samples=config.all_samples,
    )


def _ce_curve(config: EvaluateConfig, service: EvaluationService) -> pd.DataFrame:
    trace = load_trace(require(config.trace, 'evaluate.trace'))
    check_layer_ids(trace, config.layer_ids)
    curve = service.ce_curve(trace, config.selector, config.k_range, config.seed,
                             config.layer_ids, config.q, config.activation_k)
    frame = curve.to_frame()
    frame['h_prior_bits'] = curve.h_prior
    return frame


def _ce_diff(config: EvaluateConfig, service: EvaluationService) -> pd.DataFrame:
    trace_a = load_trace(require(config.trace, 'evaluate.trace'))
    trace_b = load_trace(require(config.trace_b, 'evaluate.trace_b'))
    check_layer_ids(trace_a, config.layer_ids)
    check_layer_ids(trace_b, config.layer_ids)
    return service.ce_difference(trace_a, trace_b, config.selector, config.k_range, config.seed,
                                 config.layer_ids, config.q)


def _ablate(config: EvaluateConfig) -> pd.DataFrame:
    trace_dir = require(config.trace, 'evaluate.trace')
    simulation = load_simulation(trace_dir)
    trace = simulation.trace
    check_layer_ids(trace, [config.layer_id])

    selection = select_neurons(trace, config.selector, [config.layer_id], config.q, config.seed,
                               _discovery(config), config.activation_k)[0]
    scores = scores_from_selection(selection, config.score_mode)
    score_sets = {config.selector: scores}
    if config.include_random:
        score_sets['random'] = random_scores(selection.width, len(selection.selected), config.seed)

    return ablation_grid(
        load_network(trace_dir),
        simulation.inputs,
        trace.posterior_labels,
        config.layer_id,
        score_sets,
        config.levels,
        config.gammas,
        config.seeds,
        per_sample=config.per_sample,
    )


def cmd_evaluate(config: EvaluateConfig) -> str:
    if config.mode == 'ablate':
        frame = _ablate(config)
    else:
        service = EvaluationService(discovery=_discovery(config), learning=learning_service(config))
        frame = _ce_curve(config, service) if config.mode == 'ce-curve' else _ce_diff(config, service)
    write_csv(config.out, frame)
    logger.info("wrote %s results (%d rows) to %s", config.mode, len(frame), config.out)
    return str(config.out)


evaluate_command = Command(
    name="evaluate",
    help="CE curves, CE differences and ablation grids",
    section="evaluate",
    schema=EvaluateConfig,
    handler=cmd_evaluate,
)
