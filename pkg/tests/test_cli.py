"""
Test suite for the command-line entry point
"""
import json
from pathlib import Path

import pytest

from src.corpus.dataset import read_jsonl, write_jsonl
from src.main import run_command

DATA_DIR = Path(__file__).parent.parent / 'data'

CAPTIONS = [
    {'clip_id': 'c0', 'caption': 'GOAL ! {PLAYER} scores from the penalty spot.'},
    {'clip_id': 'c1', 'caption': '{TEAM} win a corner on the left.'},
    {'clip_id': 'c2', 'caption': 'The ball goes out for a throw-in.'},
]


def _last_stderr_json(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.strip()]
    return json.loads(lines[-1])


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        run_command(['bogus'])
    assert excinfo.value.code == 2


def test_missing_input_reports_json_error(tmp_path, capsys):
    status = run_command(['evaluate', '--out', str(tmp_path), '--hyps', str(tmp_path / 'none.jsonl'),
                          '--refs', str(tmp_path / 'none.jsonl')])
    assert status == 1
    error = _last_stderr_json(capsys)
    assert error['error'] == 'FileNotFoundError' and 'none.jsonl' in error['message']


def test_train_without_corpus_fails_cleanly(tmp_path, capsys):
    assert run_command(['train', '--out', str(tmp_path), '--no-ledger']) == 1
    assert _last_stderr_json(capsys)['error'] == 'FileNotFoundError'


def test_evaluate_identity(tmp_path, capsys):
    path = tmp_path / 'captions.jsonl'
    write_jsonl(path, CAPTIONS)
    assert run_command(['evaluate', '--out', str(tmp_path), '--hyps', str(path), '--refs', str(path)]) == 0
    payload = json.loads(capsys.readouterr().out.splitlines()[0])
    assert payload['b4'] == pytest.approx(100.0)
    assert (tmp_path / 'reports' / 'evaluation.json').exists()


def test_report_from_published_values(tmp_path, capsys):
    assert run_command(['report', '--out', str(tmp_path), '--from-values', str(DATA_DIR / 'published_results.json')]) == 0
    out = capsys.readouterr().out
    assert '1.41' in out and 'Proposed' in out
    saved = json.loads((tmp_path / 'reports' / 'report.json').read_text(encoding='utf-8'))
    assert len(saved['rows']) >= 5


def test_report_sources_are_exclusive(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        run_command(['report', '--from-values', 'a.json', '--from-run', 'b.json'])
    assert excinfo.value.code == 2


def _pipeline(out: Path, config: Path) -> dict:
    common = ['--out', str(out), '--config', str(config)]
    assert run_command(['synth', *common]) == 0
    assert run_command(['train', *common]) == 0
    assert run_command(['generate', *common, '--split', 'test']) == 0

    test_rows = [row for row in read_jsonl(out / 'corpus.jsonl') if row.get('split') == 'test']
    refs = out / 'refs_test.jsonl'
    assert [row['caption'] for row in read_jsonl(refs)] == [row['caption'] for row in test_rows]
    hyp_ids = [row['clip_id'] for row in read_jsonl(out / 'captions_test.jsonl')]
    assert hyp_ids == [row['clip_id'] for row in test_rows], 'Hypotheses and references must cover the same clips'
    assert run_command(['evaluate', *common, '--hyps', str(out / 'captions_test.jsonl'), '--refs', str(refs)]) == 0
    return json.loads((out / 'reports' / 'evaluation.json').read_text(encoding='utf-8'))


def _write_small_config(path: Path, epochs: int = 2) -> Path:
    path.write_text(json.dumps({
        'seed': 7,
        'corpus': {'min_count': 1},
        'synth': {'n_clips': 12, 'duration_s': 2.0},
        'features': {'pca_dim': 8, 'pca_fit_clips': 6, 'vae_dim': 8, 'vae_epochs': 1, 'vae_batch_size': 16,
                     'vae_max_images': 48},
        'model': {'embed_dim': 16, 'n_heads': 2, 'ff_dim': 32, 'max_seq_len': 48, 'img_channels': [4],
                  'flow_channels': [8], 'vae_channels': [8], 'fc2_width': 16, 'sw_conv_channels': 2,
                  'sw_conv_kernel': 3, 'vis_width': 16, 'fc3_width': 32},
        'train': {'epochs_max': epochs, 'batch_size': 4},
    }), encoding='utf-8')
    return path


@pytest.mark.slow
def test_end_to_end_is_deterministic(tmp_path):
    """synth, train, generate and evaluate twice with one seed: identical captions and metrics"""
    config = _write_small_config(tmp_path / 'config.json')
    first = _pipeline(tmp_path / 'a', config)
    second = _pipeline(tmp_path / 'b', config)

    assert (tmp_path / 'a' / 'checkpoints' / 'proposed-seed7.zip').exists()
    captions_a = (tmp_path / 'a' / 'captions_test.jsonl').read_text(encoding='utf-8')
    captions_b = (tmp_path / 'b' / 'captions_test.jsonl').read_text(encoding='utf-8')
    assert captions_a == captions_b
    assert first == second
    run = json.loads((tmp_path / 'a' / 'reports' / 'proposed-seed7.json').read_text(encoding='utf-8'))
    assert run['best_epoch'] in (1, 2) and not run['aborted']


@pytest.mark.slow
def test_diverged_training_reports_json_error(tmp_path, monkeypatch, capsys):
    """A run stopped by a NaN loss exits 1 with a JSON error line and still saves its report"""
    from src.harness import trainer as trainer_module

    real = trainer_module.compute_losses

    def diverging(*args, **kwargs):
        losses = real(*args, **kwargs)
        losses['total'] = losses['total'] * float('nan')
        return losses

    common = ['--out', str(tmp_path / 'run'), '--config', str(_write_small_config(tmp_path / 'config.json', epochs=1))]
    assert run_command(['synth', *common]) == 0
    monkeypatch.setattr(trainer_module, 'compute_losses', diverging)
    capsys.readouterr()

    assert run_command(['train', *common, '--no-ledger']) == 1
    error = _last_stderr_json(capsys)
    assert error['error'] == 'RuntimeError' and 'diverged' in error['message'], error
    run = json.loads((tmp_path / 'run' / 'reports' / 'proposed-seed7.json').read_text(encoding='utf-8'))
    assert run['aborted'] and run['best_checkpoint'] is None
    assert not (tmp_path / 'run' / 'checkpoints' / 'proposed-seed7.zip').exists()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
