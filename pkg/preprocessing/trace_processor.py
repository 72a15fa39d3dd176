"""
Activation trace processing
Loads, validates, standardizes and persists per-layer activation matrices
"""
import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from exceptions import TraceError, DataError
from preprocessing.artifacts import atomic_write_bytes, atomic_write_text

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
RESPONSE_FILE = "response.f64"
LABEL_FILES = {
    'prior_labels': "prior_labels.txt",
    'posterior_labels': "posterior_labels.txt",
    'class_mask': "class_mask.txt",
}
# Columns whose std falls at or below this are treated as constant
_ZERO_VARIANCE = 1e-12


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LayerMatrix:
    """Samples x neurons activations of one layer, stored as float32"""
    layer_id: str
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise TraceError(f"layer '{self.layer_id}': expected a 2-D matrix, got {data.ndim}-D")
        if data.shape[1] < 1:
            raise TraceError(f"layer '{self.layer_id}': empty layer (no neurons)")
        data = data.astype('<f4', copy=False)
        if not np.all(np.isfinite(data)):
            raise TraceError(f"layer '{self.layer_id}': non-finite activation")
        object.__setattr__(self, 'data', _readonly(data))

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ActivationTrace:
    """
    Ordered layer activations (input layer first), the response Y and sample labels.
    Immutable after construction.
    """
    layers: Tuple[LayerMatrix, ...]
    response: np.ndarray
    class_mask: Optional[np.ndarray] = None
    prior_labels: Optional[np.ndarray] = None
    posterior_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise TraceError("trace has no layers")
        n = layers[0].n_samples
        if n < 1:
            raise TraceError("trace has no samples")
        ids = [layer.layer_id for layer in layers]
        if len(set(ids)) != len(ids):
            raise TraceError(f"duplicate layer ids: {ids}")
        for layer in layers:
            if layer.n_samples != n:
                raise TraceError(
                    f"layer '{layer.layer_id}' has {layer.n_samples} rows, expected {n}"
                )
        object.__setattr__(self, 'layers', layers)

        response = np.asarray(self.response, dtype='<f8').reshape(-1)
        if response.shape[0] != n:
            raise TraceError(f"response length {response.shape[0]} != sample count {n}")
        if not np.all(np.isfinite(response)):
            raise TraceError("non-finite response")
        object.__setattr__(self, 'response', _readonly(response))

        mask = np.ones(n, dtype=bool) if self.class_mask is None else np.asarray(self.class_mask)
        if mask.shape != (n,):
            raise TraceError(f"class_mask label length {mask.size} != sample count {n}")
        object.__setattr__(self, 'class_mask', _readonly(mask.astype(bool)))

        for name in ('prior_labels', 'posterior_labels'):
            labels = getattr(self, name)
            if labels is None:
                continue
            labels = np.asarray(labels)
            if labels.shape != (n,):
                raise TraceError(f"{name} label length {labels.size} != sample count {n}")
            if not np.issubdtype(labels.dtype, np.integer):
                if not np.all(np.mod(labels, 1) == 0):
                    raise TraceError(f"{name} must be integers")
            object.__setattr__(self, name, _readonly(labels.astype(np.int64)))

    @property
    def n_samples(self) -> int:
        return self.layers[0].n_samples

    @property
    def layer_ids(self) -> List[str]:
        return [layer.layer_id for layer in self.layers]

    def layer_index(self, layer_id: str) -> int:
        for index, layer in enumerate(self.layers):
            if layer.layer_id == layer_id:
                return index
        raise TraceError(f"unknown layer id '{layer_id}' (known: {self.layer_ids})")

    def layer(self, layer_id: str) -> LayerMatrix:
        return self.layers[self.layer_index(layer_id)]

    def masked_rows(self, all_samples: bool = False) -> np.ndarray:
        """Boolean row selector for class-local (default) or all-sample mode"""
        if all_samples:
            return np.ones(self.n_samples, dtype=bool)
        return np.asarray(self.class_mask)

    def with_labels(self, prior_labels=None, posterior_labels=None, class_mask=None) -> 'ActivationTrace':
        updates = {}
        if prior_labels is not None:
            updates['prior_labels'] = prior_labels
        if posterior_labels is not None:
            updates['posterior_labels'] = posterior_labels
        if class_mask is not None:
            updates['class_mask'] = class_mask
        return replace(self, **updates)


@dataclass(frozen=True)
class StandardizedView:
    """Masked, centered and scaled copy of a layer; constant neurons are dropped"""
    data: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    dropped: List[int]
    retained: List[int]
    n_columns: int = field(default=0)

    def to_original(self, local_indices) -> np.ndarray:
        """Map column positions of `data` back to neuron indices of the layer"""
        retained = np.asarray(self.retained, dtype=np.int64)
        return retained[np.asarray(local_indices, dtype=np.int64)]


def standardize(m: LayerMatrix, class_mask: Optional[np.ndarray] = None) -> StandardizedView:
    """Center and scale the masked rows of a layer with the n-1 convention"""
    x = np.asarray(m.data, dtype=np.float64)
    if class_mask is not None:
        mask = np.asarray(class_mask, dtype=bool)
        if mask.shape != (x.shape[0],):
            raise DataError(f"class_mask length {mask.size} != {x.shape[0]} rows")
        x = x[mask]
    if x.shape[0] < 2:
        raise DataError(f"layer '{m.layer_id}': fewer than 2 masked samples")

    means = x.mean(axis=0)
    stds = x.std(axis=0, ddof=1)
    constant = stds <= _ZERO_VARIANCE * np.maximum(1.0, np.abs(means))
    dropped = np.flatnonzero(constant).tolist()
    retained = np.flatnonzero(~constant).tolist()
    if dropped:
        logger.debug("layer '%s': dropping %d constant neurons", m.layer_id, len(dropped))

    data = (x[:, retained] - means[retained]) / stds[retained]
    return StandardizedView(
        data=data,
        means=means,
        stds=np.where(constant, 0.0, stds),
        dropped=dropped,
        retained=retained,
        n_columns=x.shape[1],
    )


# ---------------------------------------------------------------------------
# Trace directory format
# ---------------------------------------------------------------------------

def _layer_filename(index: int, layer_id: str) -> str:
    safe = re.sub(r'[^A-Za-z0-9_.-]', '_', layer_id)
    return f"{index:02d}_{safe}.f32"


def _write_labels(path: Path, values: np.ndarray):
    text = "".join(f"{int(v)}\n" for v in values)
    atomic_write_text(path, text)


def _read_labels(path: Path, n: int, name: str) -> np.ndarray:
    if not path.exists():
        raise TraceError(f"missing file: {path}")
    lines = [line.strip() for line in path.read_text(encoding='utf-8').splitlines() if line.strip()]
    try:
        values = np.array([int(line) for line in lines], dtype=np.int64)
    except ValueError as exc:
        raise TraceError(f"{path.name}: non-integer label ({exc})") from exc
    if values.shape[0] != n:
        raise TraceError(f"{name}: label length {values.shape[0]} != sample count {n}")
    return values


def save_trace(trace: ActivationTrace, path) -> None:
    """Write a trace directory: per-layer float32 files, labels and manifest.json"""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise TraceError(f"unwritable path {path}: {exc}") from exc

    try:
        layer_entries = []
        for index, layer in enumerate(trace.layers):
            if layer.n_neurons < 1:
                raise TraceError(f"layer '{layer.layer_id}': empty layer")
            filename = _layer_filename(index, layer.layer_id)
            atomic_write_bytes(path / filename, layer.data.astype('<f4').tobytes(order='C'))
            layer_entries.append({
                'layer_id': layer.layer_id,
                'neuron_count': int(layer.n_neurons),
                'file': filename,
            })

        atomic_write_bytes(path / RESPONSE_FILE, trace.response.astype('<f8').tobytes())

        labels = {}
        for name, filename in LABEL_FILES.items():
            values = getattr(trace, name)
            if values is None:
                continue
            _write_labels(path / filename, values)
            labels[name] = filename

        manifest = {
            'sample_count': int(trace.n_samples),
            'layers': layer_entries,
            'response': RESPONSE_FILE,
            'labels': labels,
        }
        atomic_write_text(path / MANIFEST_NAME, json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise TraceError(f"unwritable path {path}: {exc}") from exc
    logger.info("saved trace with %d layers, %d samples to %s", len(trace.layers), trace.n_samples, path)


def load_trace(path) -> ActivationTrace:
    """Read and validate a trace directory written by save_trace"""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.exists():
        raise TraceError(f"missing file: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding='utf-8'))
        n = int(manifest['sample_count'])
        entries = manifest['layers']
    except (ValueError, KeyError, TypeError) as exc:
        raise TraceError(f"malformed manifest {manifest_path}: {exc}") from exc

    layers = []
    for entry in entries:
        layer_file = path / entry['file']
        if not layer_file.exists():
            raise TraceError(f"missing file: {layer_file}")
        values = np.fromfile(layer_file, dtype='<f4')
        expected = n * int(entry['neuron_count'])
        if values.size != expected:
            raise TraceError(
                f"layer '{entry['layer_id']}': size disagreement "
                f"(manifest expects {expected} values, file holds {values.size})"
            )
        if not np.all(np.isfinite(values)):
            raise TraceError(f"layer '{entry['layer_id']}': non-finite activation")
        layers.append(LayerMatrix(entry['layer_id'], values.reshape(n, int(entry['neuron_count']))))

    response_file = path / manifest.get('response', RESPONSE_FILE)
    if not response_file.exists():
        raise TraceError(f"missing file: {response_file}")
    response = np.fromfile(response_file, dtype='<f8')
    if response.size != n:
        raise TraceError(f"response: size disagreement ({response.size} values for {n} samples)")

    labels = {}
    for name, filename in manifest.get('labels', {}).items():
        if name not in LABEL_FILES:
            logger.warning("ignoring unknown label file '%s'", name)
            continue
        labels[name] = _read_labels(path / filename, n, name)
    if 'class_mask' in labels:
        if not np.isin(labels['class_mask'], (0, 1)).all():
            raise TraceError("class_mask labels must be 0 or 1")
        labels['class_mask'] = labels['class_mask'].astype(bool)

    return ActivationTrace(layers=tuple(layers), response=response, **labels)


def import_csv(
    layer_files: Sequence,
    label_file=None,
    response_index: int = 0,
) -> ActivationTrace:
    """
    Build a trace from CSV files (header row, one file per layer).
    The optional label CSV may carry response, prior, posterior and class_mask columns;
    without a response column the response is column `response_index` of the last layer.
    """
    if not layer_files:
        raise TraceError("no layer files given")

    layers = []
    for layer_file in layer_files:
        frame = _read_numeric_csv(layer_file)
        layers.append(LayerMatrix(Path(layer_file).stem, frame.to_numpy(dtype=np.float64)))

    n = layers[0].n_samples
    for layer in layers[1:]:
        if layer.n_samples != n:
            raise TraceError(f"layer '{layer.layer_id}' has {layer.n_samples} rows, expected {n}")

    labels: Dict[str, np.ndarray] = {}
    response = None
    if label_file is not None:
        frame = _read_numeric_csv(label_file)
        if len(frame) != n:
            raise TraceError(f"label file has {len(frame)} rows, expected {n}")
        if 'response' in frame:
            response = frame['response'].to_numpy(dtype=np.float64)
        for column, name in (('prior', 'prior_labels'), ('posterior', 'posterior_labels'),
                             ('class_mask', 'class_mask')):
            if column in frame:
                labels[name] = frame[column].to_numpy()
        if 'class_mask' in labels:
            labels['class_mask'] = labels['class_mask'].astype(bool)

    if response is None:
        last = layers[-1]
        if not 0 <= response_index < last.n_neurons:
            raise TraceError(f"response_index {response_index} outside last layer of width {last.n_neurons}")
        response = last.data[:, response_index].astype(np.float64)

    return ActivationTrace(layers=tuple(layers), response=response, **labels)


def _read_numeric_csv(csv_path) -> pd.DataFrame:
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise TraceError(f"missing file: {csv_path}")
    try:
        frame = pd.read_csv(csv_path)
    except pd.errors.ParserError as exc:
        raise TraceError(f"{csv_path.name}: ragged rows ({exc})") from exc
    except pd.errors.EmptyDataError as exc:
        raise TraceError(f"{csv_path.name}: empty file") from exc
    try:
        frame = frame.apply(pd.to_numeric)
    except (ValueError, TypeError) as exc:
        raise TraceError(f"{csv_path.name}: non-numeric cell ({exc})") from exc
    if frame.isna().to_numpy().any():
        raise TraceError(f"{csv_path.name}: ragged rows (missing cells)")
    return frame
