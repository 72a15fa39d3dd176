import numpy as np
import pytest

from exceptions import DataError, TraceError
from preprocessing.trace_processor import (
    ActivationTrace, LayerMatrix, import_csv, load_trace, save_trace, standardize,
)


def test_save_load_round_trip_is_bit_exact(small_trace, tmp_path):
    save_trace(small_trace, tmp_path / "trace")
    loaded = load_trace(tmp_path / "trace")

    assert loaded.layer_ids == ['input', 'output']
    assert loaded.n_samples == 10
    for original, restored in zip(small_trace.layers, loaded.layers):
        assert np.array_equal(original.data, restored.data)
    assert np.array_equal(loaded.response, small_trace.response)
    assert np.array_equal(loaded.class_mask, small_trace.class_mask)
    assert np.array_equal(loaded.prior_labels, small_trace.prior_labels)
    assert np.array_equal(loaded.posterior_labels, small_trace.posterior_labels)


def test_single_sample_trace_round_trips(tmp_path):
    trace = ActivationTrace(layers=(LayerMatrix('a', [[1.5, -2.0]]),), response=[0.25])
    save_trace(trace, tmp_path)
    loaded = load_trace(tmp_path)
    assert loaded.n_samples == 1
    assert np.array_equal(loaded.layers[0].data, trace.layers[0].data)


def test_manifest_size_disagreement(small_trace, tmp_path):
    save_trace(small_trace, tmp_path)
    (tmp_path / "00_input.f32").write_bytes(np.zeros(9 * 3, dtype='<f4').tobytes())
    with pytest.raises(TraceError, match="size disagreement"):
        load_trace(tmp_path)


def test_non_finite_activation_in_file(small_trace, tmp_path):
    save_trace(small_trace, tmp_path)
    values = np.zeros(10 * 3, dtype='<f4')
    values[4] = np.nan
    (tmp_path / "00_input.f32").write_bytes(values.tobytes())
    with pytest.raises(TraceError, match="non-finite activation"):
        load_trace(tmp_path)


def test_non_finite_activation_in_memory():
    with pytest.raises(TraceError, match="non-finite activation"):
        LayerMatrix('a', [[1.0, np.inf]])


def test_empty_layer_rejected():
    with pytest.raises(TraceError, match="empty layer"):
        LayerMatrix('a', np.zeros((10, 0)))


def test_missing_manifest(tmp_path):
    with pytest.raises(TraceError, match="missing file"):
        load_trace(tmp_path / "nowhere")


def test_label_length_mismatch():
    with pytest.raises(TraceError, match="label length"):
        ActivationTrace(layers=(LayerMatrix('a', np.ones((4, 2))),), response=np.zeros(4),
                        prior_labels=[0, 1, 0])


def test_unknown_layer_id(small_trace):
    with pytest.raises(TraceError, match="unknown layer id"):
        small_trace.layer('hidden_9')


def test_trace_is_read_only(small_trace):
    with pytest.raises(ValueError):
        small_trace.layers[0].data[0, 0] = 1.0


def _write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_import_csv_builds_trace(tmp_path):
    a = _write_csv(tmp_path / "layer_a.csv", ['n0', 'n1', 'n2'], [[i, i + 1, i * 2] for i in range(5)])
    b = _write_csv(tmp_path / "layer_b.csv", ['n0', 'n1'], [[i * 0.5, -i] for i in range(5)])
    trace = import_csv([a, b])

    assert trace.layer_ids == ['layer_a', 'layer_b']
    assert trace.n_samples == 5
    assert trace.layer('layer_a').n_neurons == 3
    assert np.allclose(trace.response, [0.0, 0.5, 1.0, 1.5, 2.0])


def test_import_csv_attaches_labels(tmp_path):
    a = _write_csv(tmp_path / "a.csv", ['n0', 'n1'], [[i, -i] for i in range(4)])
    labels = _write_csv(tmp_path / "labels.csv", ['response', 'prior', 'posterior', 'class_mask'],
                        [[0.5, 0, 0, 1], [1.5, 1, 0, 1], [2.5, 2, 1, 0], [3.5, 3, 1, 1]])
    trace = import_csv([a], label_file=labels)

    assert np.allclose(trace.response, [0.5, 1.5, 2.5, 3.5])
    assert trace.prior_labels.tolist() == [0, 1, 2, 3]
    assert trace.class_mask.tolist() == [True, True, False, True]


def test_import_csv_ragged_rows(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("a,b\n1,2\n3\n")
    with pytest.raises(TraceError, match="ragged rows"):
        import_csv([path])


def test_import_csv_non_numeric_cell(tmp_path):
    path = tmp_path / "words.csv"
    path.write_text("a,b\n1,x\n2,3\n")
    with pytest.raises(TraceError, match="non-numeric cell"):
        import_csv([path])


def test_import_csv_label_length(tmp_path):
    a = _write_csv(tmp_path / "a.csv", ['n0'], [[i] for i in range(5)])
    labels = _write_csv(tmp_path / "labels.csv", ['prior'], [[0]] * 4)
    with pytest.raises(TraceError, match="label file has 4 rows"):
        import_csv([a], label_file=labels)


def test_standardize_drops_constant_column():
    layer = LayerMatrix('a', np.column_stack([np.ones(4), np.arange(4.0)]))
    view = standardize(layer)
    assert view.dropped == [0]
    assert view.retained == [1]
    assert view.data.shape == (4, 1)
    assert view.to_original([0]).tolist() == [1]


def test_standardize_uses_n_minus_one():
    view = standardize(LayerMatrix('a', [[0.0], [2.0]]))
    half_root = 1.0 / np.sqrt(2.0)
    assert view.data[:, 0] == pytest.approx([-half_root, half_root])
    assert view.stds[0] == pytest.approx(np.sqrt(2.0))


def test_standardize_all_constant_layer():
    view = standardize(LayerMatrix('a', np.full((5, 3), 2.0)))
    assert view.data.shape == (5, 0)
    assert view.dropped == [0, 1, 2]
    assert view.retained == []


def test_standardize_is_idempotent(rng):
    first = standardize(LayerMatrix('a', rng.normal(3.0, 2.0, size=(50, 4))))
    assert first.data.mean(axis=0) == pytest.approx(np.zeros(4), abs=1e-9)
    assert first.data.std(axis=0, ddof=1) == pytest.approx(np.ones(4), abs=1e-9)
    # re-wrapping rounds to the float32 storage of LayerMatrix
    second = standardize(LayerMatrix('a', first.data))
    assert second.means == pytest.approx(np.zeros(4), abs=1e-6)
    assert second.stds == pytest.approx(np.ones(4), abs=1e-6)


def test_standardize_applies_class_mask(small_trace):
    view = standardize(small_trace.layer('input'), small_trace.class_mask)
    assert view.data.shape == (8, 3)


def test_standardize_needs_two_masked_rows(small_trace):
    mask = np.zeros(10, dtype=bool)
    mask[3] = True
    with pytest.raises(DataError, match="fewer than 2"):
        standardize(small_trace.layer('input'), mask)
