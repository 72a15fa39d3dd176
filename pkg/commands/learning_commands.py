"""
Learn command
Clusters samples into mechanisms from a trace and its selection report
"""
import logging

from commands.base import Command, require
from commands.discovery_commands import check_layer_ids, read_selection_report
from preprocessing.artifacts import write_json
from preprocessing.trace_processor import load_trace
from schemas import AssignmentReport, LearnConfig
from services import LearningService
from services.evaluation_service import clusters_entropy

logger = logging.getLogger(__name__)


def learning_service(config) -> LearningService:
    params = {'reg': config.reg} if config.method == 'gmm' and hasattr(config, 'reg') else {}
    return LearningService(
        method=config.method,
        limits=config.limits,
        top_k=getattr(config, 'top_k', None),
        all_samples=config.all_samples,
        **params,
    )


def cmd_learn(config: LearnConfig) -> str:
    trace_path = require(config.trace, 'learn.trace')
    trace = load_trace(trace_path)
    selections = read_selection_report(require(config.selection, 'learn.selection'))
    check_layer_ids(trace, [s.layer_id for s in selections])

    assignment = learning_service(config).learn(trace, selections, config.k, seed=config.seed)
    ce_bits = None
    if trace.prior_labels is not None:
        ce_bits = clusters_entropy(assignment.c, trace.prior_labels[trace.masked_rows(config.all_samples)])

    report = AssignmentReport(
        trace=str(trace_path),
        seed=config.seed,
        method=assignment.method,
        k=assignment.k,
        fit_score=assignment.fit_score,
        converged=assignment.converged,
        history=assignment.history,
        cluster_sizes=assignment.cluster_sizes().tolist(),
        labels=assignment.c.tolist(),
        representatives=[rep.to_dict() for rep in assignment.representatives],
        ce_bits=ce_bits,
    )
    write_json(config.out, report.model_dump())
    logger.info("wrote %s assignment (k=%d) to %s", assignment.method, assignment.k, config.out)
    return str(config.out)


learn_command = Command(
    name="learn",
    help="cluster samples into mechanisms",
    section="learn",
    schema=LearnConfig,
    handler=cmd_learn,
)
