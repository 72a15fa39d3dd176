# Preprocessing module
from .trace_processor import (
    LayerMatrix, ActivationTrace, StandardizedView,
    load_trace, save_trace, import_csv, standardize,
)

__all__ = [
    'LayerMatrix', 'ActivationTrace', 'StandardizedView',
    'load_trace', 'save_trace', 'import_csv', 'standardize',
]
