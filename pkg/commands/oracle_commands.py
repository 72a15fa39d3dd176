"""
Oracle command
Exhaustive most-informative-subset search on a small discrete table or a binarized layer
"""
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from commands.base import Command
from commands.discovery_commands import check_layer_ids, read_selection_report
from exceptions import DataError
from models.oracle import DiscreteTable, binarize_at_median, discrete_cni, selection_mi_ratio
from preprocessing.artifacts import write_json
from preprocessing.trace_processor import load_trace
from schemas import OracleConfig, OracleReport

logger = logging.getLogger(__name__)


def read_table(path, y_column: str) -> DiscreteTable:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"{path.name}: unreadable table ({exc})") from exc
    if y_column not in frame:
        raise DataError(f"{path.name}: no column '{y_column}'")
    try:
        frame = frame.apply(pd.to_numeric)
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path.name}: non-numeric cell ({exc})") from exc
    if frame.isna().to_numpy().any():
        raise DataError(f"{path.name}: missing cells")
    return DiscreteTable(z=frame.drop(columns=[y_column]).to_numpy(), y=frame[y_column].to_numpy())


def cmd_oracle(config: OracleConfig) -> str:
    selected = None
    if config.table is not None:
        source = str(config.table)
        table = read_table(config.table, config.y_column)
    else:
        source = f"{config.trace}:{config.layer_id}"
        trace = load_trace(config.trace)
        check_layer_ids(trace, [config.layer_id])
        rows = trace.masked_rows()
        activations = np.asarray(trace.layer(config.layer_id).data, dtype=np.float64)[rows]
        table = DiscreteTable(z=binarize_at_median(activations), y=binarize_at_median(trace.response[rows]))
        if config.selection is not None:
            by_layer = {r.layer_id: r for r in read_selection_report(config.selection)}
            if config.layer_id not in by_layer:
                raise DataError(f"selection report has no layer '{config.layer_id}'")
            selected = by_layer[config.layer_id].selected

    if selected is None:
        subset, mi_bits = discrete_cni(table, config.k)
        report = OracleReport(source=source, n_variables=table.n_variables, k=config.k,
                              subset=list(subset), mi_bits=mi_bits)
    else:
        ratio, selected_mi, optimum = selection_mi_ratio(table, selected)
        subset, _ = discrete_cni(table, len(selected))
        report = OracleReport(source=source, n_variables=table.n_variables, k=len(selected),
                              subset=list(subset), mi_bits=optimum, selected=list(selected),
                              selected_mi_bits=selected_mi, ratio=ratio)
    write_json(config.out, report.model_dump())
    logger.info("oracle on %s: best subset %s (%.4f bits)", source, report.subset, report.mi_bits)
    return str(config.out)


oracle_command = Command(
    name="oracle",
    help="exhaustive discrete search for small instances",
    section="oracle",
    schema=OracleConfig,
    handler=cmd_oracle,
)
