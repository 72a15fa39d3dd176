import json

import pandas as pd
import pytest
from pydantic import ValidationError

import app
from commands import synth_commands
from exceptions import NumericalError
from schemas import RunConfig

NETWORK = ["--layer-widths", "[8, 12, 12, 2]", "--critical-widths", "[4, 4, 4, 2]", "--k-true", "2"]


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    assert app.main(["synth", "--out", str(out), "--n-samples", "300", "--seed", "3"] + NETWORK) == 0
    return out


def _selection_report(trace_dir, path):
    manifest = json.loads((trace_dir / "spec.json").read_text())
    layers = []
    for layer_id, width, critical in zip(manifest['layer_ids'], manifest['layer_widths'], manifest['critical_sets']):
        if layer_id not in ('hidden_1', 'hidden_2'):
            continue
        frequency = [1.0 if j in critical else 0.0 for j in range(width)]
        layers.append({
            'layer_id': layer_id, 'q': 0.1, 'tau': None, 'taus': [], 'selected': critical,
            'frequency': frequency, 'statistic': 'given', 'repetitions': 1, 'keep_fraction': 0.5,
            'n_retained': width, 'dropped': [],
        })
    path.write_text(json.dumps({'trace': str(trace_dir), 'seed': 0, 'layers': layers}))
    return path


def test_synth_writes_both_variants(synth_dir):
    for variant in ('pkt', 'normal'):
        assert (synth_dir / variant / "manifest.json").exists()
        manifest = json.loads((synth_dir / variant / "spec.json").read_text())
        assert manifest['variant'] == variant
        assert manifest['accuracy'] >= 0.95


def test_discover_is_deterministic(synth_dir, tmp_path):
    outputs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        code = app.main(["discover", "--trace", str(synth_dir / "pkt"), "--out", str(out),
                         "--repetitions", "3", "--q", "0.3", "--offset", "0", "--seed", "5"])
        assert code == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    report = json.loads(outputs[0])
    assert [layer['layer_id'] for layer in report['layers']] == ['input', 'hidden_1', 'hidden_2']


def test_learn_writes_an_assignment(synth_dir, tmp_path):
    selection = _selection_report(synth_dir / "pkt", tmp_path / "selection.json")
    out = tmp_path / "assignment.json"
    code = app.main(["learn", "--trace", str(synth_dir / "pkt"), "--selection", str(selection),
                     "--k", "2", "--method", "agglomerative", "--out", str(out)])
    assert code == 0
    report = json.loads(out.read_text())
    assert report['k'] == 2
    assert len(report['labels']) == 300
    assert sum(report['cluster_sizes']) == 300
    assert report['ce_bits'] is not None


def test_evaluate_ce_curve(synth_dir, tmp_path):
    out = tmp_path / "curve.csv"
    code = app.main(["evaluate", "--trace", str(synth_dir / "pkt"), "--selector", "all",
                     "--layer-ids", '["hidden_1"]', "--k-range", "[1, 2]", "--out", str(out)])
    assert code == 0
    frame = pd.read_csv(out)
    assert frame['k'].tolist() == [1, 2]
    assert frame['ce_bits'].iloc[0] == pytest.approx(frame['h_prior_bits'].iloc[0])


def test_evaluate_ablation_grid(synth_dir, tmp_path):
    out = tmp_path / "ablation.csv"
    code = app.main(["evaluate", "--mode", "ablate", "--trace", str(synth_dir / "pkt"), "--layer-id", "hidden_1",
                     "--selector", "activation", "--activation-k", "4", "--levels", "[0.0, 1.0]",
                     "--gammas", "[0.0]", "--seeds", "[0, 1]", "--out", str(out)])
    assert code == 0
    frame = pd.read_csv(out)
    assert len(frame) == 8
    assert set(frame['selector']) == {'activation', 'random'}


def test_oracle_on_a_table(tmp_path):
    table = tmp_path / "xor.csv"
    table.write_text("a,b,c,y\n0,0,1,0\n0,1,1,1\n1,0,0,1\n1,1,0,0\n")
    out = tmp_path / "oracle.json"
    assert app.main(["oracle", "--table", str(table), "--k", "2", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report['subset'] == [0, 1]
    assert report['mi_bits'] == pytest.approx(1.0)


def test_config_file_with_flag_override(synth_dir, tmp_path):
    config = tmp_path / "run.json"
    out = tmp_path / "sel.json"
    config.write_text(json.dumps({
        'seed': 11,
        'discover': {'trace': str(synth_dir / "pkt"), 'repetitions': 2, 'layer_ids': ['hidden_1'], 'q': 0.3},
    }))
    assert app.main(["--config", str(config), "discover", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report['seed'] == 11
    assert [layer['layer_id'] for layer in report['layers']] == ['hidden_1']


@pytest.mark.parametrize("argv", [
    ["discover"],
    ["discover", "--q", "1.5"],
    ["discover", "--no-such-flag", "1"],
    ["teleport"],
    ["oracle"],
    ["--config", "/nonexistent/run.json", "discover"],
])
def test_configuration_errors_exit_with_one(argv):
    assert app.main(argv) == 1


def test_unknown_layer_id_exits_with_one(synth_dir, tmp_path):
    code = app.main(["discover", "--trace", str(synth_dir / "pkt"), "--layer-ids", '["hidden_9"]',
                     "--out", str(tmp_path / "x.json")])
    assert code == 1


def test_missing_trace_exits_with_two(tmp_path):
    assert app.main(["discover", "--trace", str(tmp_path / "missing"), "--out", str(tmp_path / "x.json")]) == 2


def test_numerical_failure_exits_with_three(monkeypatch, tmp_path):
    class FailingSynthesis:
        def __init__(self, **kwargs):
            pass

        def pair(self, *args):
            raise NumericalError("covariance is not positive definite")

    monkeypatch.setattr(synth_commands, 'SynthesisService', FailingSynthesis)
    assert app.main(["synth", "--out", str(tmp_path / "s")]) == 3


def test_sections_inherit_the_top_level_seed():
    config = RunConfig.model_validate({'seed': 4, 'learn': {'seed': 9}})
    assert config.discover.seed == 4
    assert config.learn.seed == 9
    assert config.oracle is None


def test_unknown_config_keys_are_rejected():
    with pytest.raises(ValidationError):
        RunConfig.model_validate({'discover': {'qq': 0.1}})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({'evaluate': {'mode': 'ce-diff'}})


def test_validation_error_summary_names_the_field():
    with pytest.raises(ValidationError) as excinfo:
        RunConfig.model_validate({'discover': {'keep_fraction': 0.0}})
    assert "discover.keep_fraction" in app.describe_validation_error(excinfo.value)


def test_full_pipeline_from_one_config_is_reproducible(tmp_path):
    synth, selection = tmp_path / "synth", tmp_path / "selection.json"
    assignment, curve = tmp_path / "assignment.json", tmp_path / "curve.csv"
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        'seed': 13,
        'synth': {'out': str(synth), 'n_samples': 300, 'layer_widths': [8, 12, 12, 2],
                  'critical_widths': [4, 4, 4, 2], 'k_true': 2},
        'discover': {'trace': str(synth / "pkt"), 'out': str(selection), 'layer_ids': ['hidden_1', 'hidden_2'],
                     'q': 0.5, 'offset': 0, 'repetitions': 3, 'keep_fraction': 0.3},
        'learn': {'trace': str(synth / "pkt"), 'selection': str(selection), 'k': 2, 'out': str(assignment)},
        'evaluate': {'trace': str(synth / "pkt"), 'selector': 'all', 'k_range': [1, 2],
                     'layer_ids': ['hidden_1', 'hidden_2'], 'out': str(curve)},
    }))

    def run_all():
        for command in ("synth", "discover", "learn", "evaluate"):
            assert app.main(["--config", str(config), command]) == 0
        outputs = [selection, assignment, curve] + sorted(p for p in synth.rglob("*") if p.is_file())
        return {str(path): path.read_bytes() for path in outputs}

    first = run_all()
    assert run_all() == first


def test_oracle_table_with_text_cell_exits_with_two(tmp_path):
    table = tmp_path / "bad.csv"
    table.write_text("a,b,y\n0,1,0\n1,x,1\n")
    assert app.main(["oracle", "--table", str(table), "--k", "1", "--out", str(tmp_path / "o.json")]) == 2
