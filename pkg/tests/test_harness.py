"""
Test suite for teacher forcing, training, checkpoint selection, baselines and the ablation suite
"""
import logging

import numpy as np
import pytest
import torch

from conftest import make_features, tiny_config
from src.config.settings import FeatureSettings
from src.corpus.dataset import by_split
from src.corpus.lexicon import sw_vector
from src.corpus.vocabulary import build_vocab
from src.harness import trainer as trainer_module
from src.harness.ablation import CONTEXT_NOTES, default_suite, run_ablation
from src.harness.baselines import (KnnIndex, baseline_random, caption_random, knn_caption, sample_triplets,
                                   sw_f1_matrix, train_triplet)
from src.harness.data import CaptionDataset, teacher_forcing_pair
from src.harness.trainer import TrainingDivergedError, evaluate_model, select_best, train
from src.metrics.report import evaluate_corpus
from src.models.database import RunLedger, TrainingRun, get_session_factory, init_database
from src.models.schemas import CaptionRecord, EvalPoint, MetricsReport, ModelConfig, TrainConfig
from src.net.captioner import build_model, configure_for
from src.net.checkpoint import load_checkpoint
from src.synthvision.features import ClipFeatures
from src.synthvision.pipeline import build_manifest, extract_all, fit_feature_models, manifest_records

CAPTIONS = [
    ('c0', 'goal', ['goal', '!', 'a', 'shot', 'into', 'the', 'net', '.']),
    ('c1', 'corner', ['a', 'corner', 'on', 'the', 'left', '.']),
    ('c2', 'corner', ['a', 'corner', 'on', 'the', 'right', '.']),
    ('c3', 'foul', ['a', 'late', 'tackle', '.']),
]


@pytest.fixture
def toy_data():
    records = [CaptionRecord(clip_id=c, action=a, tokens=t, split='train') for c, a, t in CAPTIONS]
    features = {r.clip_id: make_features(seed=i) for i, r in enumerate(records)}
    vocab = build_vocab([r.tokens for r in records], min_count=1)
    return records, features, vocab


def point(epoch: int, score: float) -> EvalPoint:
    return EvalPoint(epoch=epoch, train_loss=1.0, metrics=MetricsReport(normalized=score))


def test_teacher_forcing_pair():
    """Inputs start with the tag, targets end with eos, both one longer than the caption"""
    inputs, targets = teacher_forcing_pair([7, 8, 9], tag_id=3, eos_id=2)
    assert inputs == [3, 7, 8, 9]
    assert targets == [7, 8, 9, 2]
    assert teacher_forcing_pair([], tag_id=3, eos_id=2) == ([3], [2])


def test_dataset_masks_and_padding(toy_data, lexicon):
    records, features, vocab = toy_data
    dataset = CaptionDataset(records, features, vocab, lexicon)
    example = dataset[0]
    assert example.inputs[0] == vocab.tag_id('goal')
    assert example.sw_mask == [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0], example.sw_mask
    assert example.sw_gt.sum() == 3

    batch = dataset.collate([dataset[0], dataset[3]])
    assert batch.inputs.shape == (2, 9)
    assert int(batch.targets[1, 5]) == vocab.pad_id
    assert batch.features.frame_mask.shape == (2, 4)


def test_dataset_truncates_long_captions(toy_data, lexicon):
    records, features, vocab = toy_data
    dataset = CaptionDataset(records, features, vocab, lexicon, max_seq_len=4)
    assert all(len(e.inputs) <= 4 and len(e.targets) <= 4 for e in dataset.examples)


def test_dataset_requires_features(toy_data, lexicon):
    records, features, vocab = toy_data
    with pytest.raises(ValueError):
        CaptionDataset(records, {}, vocab, lexicon)


def test_select_best_prefers_earliest_tie():
    history = [point(1, 0.5), point(2, 0.9), point(3, 0.9), point(4, 0.7)]
    assert select_best(history).epoch == 2
    assert select_best([]) is None


def test_training_keeps_best_checkpoint(tmp_path, toy_data, lexicon):
    records, features, vocab = toy_data
    url = f"sqlite:///{tmp_path / 'ledger.db'}"
    init_database(url)
    session = get_session_factory(url)()
    config = TrainConfig(label='toy', epochs_max=4, batch_size=2, patience=10, seed=1)
    model = build_model(tiny_config(vocab_size=len(vocab)))

    report = train(model, records, records[:2], features, vocab, lexicon, config,
                   test_records=records[2:], checkpoint_dir=tmp_path, ledger=RunLedger(session))
    assert report.run_id == 'toy-seed1'
    assert [p.epoch for p in report.history] == [1, 2, 3, 4]
    assert report.best_epoch == select_best(report.history).epoch
    assert len(report.loss_history) == 4 and all(np.isfinite(h['total']) for h in report.loss_history)
    assert report.test_metrics is not None and not report.aborted

    restored, _ = load_checkpoint(tmp_path / 'toy-seed1.zip')
    for name, value in model.state_dict().items():
        assert torch.equal(restored.state_dict()[name], value), f"Checkpoint differs from best model at {name}"

    run = session.query(TrainingRun).filter_by(run_id='toy-seed1').one()
    assert run.status == 'completed' and run.best_epoch == report.best_epoch


def test_training_rejects_stream_mismatch(toy_data, lexicon):
    records, features, vocab = toy_data
    model = build_model(tiny_config(vocab_size=len(vocab), streams=['img']))
    with pytest.raises(ValueError):
        train(model, records, records, features, vocab, lexicon, TrainConfig(epochs_max=1))
    with pytest.raises(ValueError):
        train(model, [], records, features, vocab, lexicon, TrainConfig(epochs_max=1, streams=['img']))


def test_training_loss_decreases(toy_data, lexicon):
    """Mean training loss of the last epoch is below that of the first"""
    records, features, vocab = toy_data
    model = build_model(tiny_config(vocab_size=len(vocab)))
    config = TrainConfig(epochs_max=10, batch_size=2, patience=20, seed=0)
    report = train(model, records, records, features, vocab, lexicon, config)
    first, last = report.loss_history[0]['total'], report.loss_history[-1]['total']
    assert len(report.loss_history) == 10
    assert last < first, f"Training loss went from {first:.4f} to {last:.4f}"


def test_divergence_restores_last_good_parameters(monkeypatch, toy_data, lexicon):
    """A NaN loss stops training and leaves the best evaluated parameters in place"""
    records, features, vocab = toy_data
    model = build_model(tiny_config(vocab_size=len(vocab)))
    real = trainer_module.compute_losses
    calls = {'n': 0}

    def flaky(*args, **kwargs):
        calls['n'] += 1
        losses = real(*args, **kwargs)
        if calls['n'] > 2:
            losses['total'] = losses['total'] * float('nan')
        return losses

    monkeypatch.setattr(trainer_module, 'compute_losses', flaky)
    config = TrainConfig(epochs_max=5, batch_size=2, seed=0)
    report = train(model, records, records, features, vocab, lexicon, config)
    assert report.aborted
    assert report.best_epoch == 1 and len(report.loss_history) == 1
    assert all(torch.isfinite(p).all() for p in model.parameters())


def test_divergence_before_first_evaluation_writes_no_checkpoint(tmp_path, monkeypatch, caplog, toy_data, lexicon):
    """A NaN loss in epoch 1 leaves no best epoch; the run says so instead of saving a checkpoint"""
    records, features, vocab = toy_data
    model = build_model(tiny_config(vocab_size=len(vocab)))
    real = trainer_module.compute_losses

    def diverging(*args, **kwargs):
        losses = real(*args, **kwargs)
        losses['total'] = losses['total'] * float('nan')
        return losses

    monkeypatch.setattr(trainer_module, 'compute_losses', diverging)
    monkeypatch.setattr(trainer_module.logger, 'propagate', True)
    config = TrainConfig(label='early', epochs_max=3, batch_size=2, seed=0)
    with caplog.at_level(logging.WARNING, logger=trainer_module.logger.name):
        report = train(model, records, records, features, vocab, lexicon, config, checkpoint_dir=tmp_path)

    assert report.aborted and report.best_epoch is None and report.best_checkpoint is None
    assert 'diverged at epoch 1' in report.abort_reason
    assert not (tmp_path / 'early-seed0.zip').exists()
    assert 'no checkpoint written' in caplog.text, caplog.text


def test_diverged_error_message():
    error = TrainingDivergedError(3, 0.25)
    assert error.epoch == 3 and '0.25' in str(error)


def test_random_baseline_draws_same_action(toy_data):
    records, _, _ = toy_data
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert baseline_random('corner', records, rng) in (records[1].tokens, records[2].tokens)
    with pytest.raises(ValueError, match='Actions with captions'):
        baseline_random('penalty', records, rng)
    assert caption_random(records, records, seed=3) == caption_random(records, records, seed=3)


def test_random_baseline_is_uniform_over_the_action_pool():
    """Over 10,000 draws the mean caption index stays within 3 sigma of the uniform mean"""
    records = [CaptionRecord(clip_id=f"c{i}", action='corner', tokens=['corner', str(i)], split='train')
               for i in range(5)]
    records.append(CaptionRecord(clip_id='g', action='goal', tokens=['goal'], split='train'))
    rng = np.random.default_rng(0)
    draws = np.array([int(baseline_random('corner', records, rng)[1]) for _ in range(10_000)])
    assert set(draws) == set(range(5))
    sigma = np.sqrt((5 ** 2 - 1) / 12 / len(draws))
    assert abs(draws.mean() - 2.0) < 3 * sigma, f"Mean index {draws.mean():.4f}, 3 sigma = {3 * sigma:.4f}"


def test_sw_f1_matrix():
    vectors = np.array([[1, 1, 0], [1, 0, 0], [0, 0, 0], [0, 0, 0]], dtype=np.float32)
    similarity = sw_f1_matrix(vectors, chunk=2)
    assert similarity[0, 1] == pytest.approx(2 / 3)
    assert similarity[0, 0] == pytest.approx(1.0)
    assert similarity[2, 3] == 1.0 and similarity[0, 2] == 0.0


def test_sample_triplets_respects_threshold():
    similarity = np.array([[1.0, 0.8, 0.1], [0.8, 1.0, 0.2], [0.1, 0.2, 1.0]])
    anchors, positives, negatives = sample_triplets(similarity, 0.5, np.random.default_rng(0))
    assert list(anchors) == [0, 1]
    assert list(positives) == [1, 0] and list(negatives) == [2, 2]
    assert sample_triplets(np.ones((3, 3)), 0.5, np.random.default_rng(0)) is None


def test_knn_ties_go_to_lowest_clip_id():
    index = KnnIndex(clip_ids=['b', 'a', 'c'],
                     embeddings=np.array([[1.0, 0.0], [1.0, 0.0], [5.0, 5.0]], dtype=np.float32),
                     captions=[['from', 'b'], ['from', 'a'], ['from', 'c']])
    assert knn_caption(np.array([1.0, 0.0]), index) == ['from', 'a']
    assert knn_caption(np.array([5.0, 4.0]), index) == ['from', 'c']
    with pytest.raises(ValueError):
        knn_caption(np.zeros(2), index, k=2)
    with pytest.raises(ValueError):
        knn_caption(np.zeros(2), KnnIndex([], np.zeros((0, 2)), []))


def test_triplet_embedding(toy_data, lexicon):
    records, features, _ = toy_data
    config = TrainConfig(kind='knn', triplet_epochs=3, triplet_embed_dim=4, batch_size=2)
    clips = [features[r.clip_id] for r in records]
    embedder = train_triplet(clips, [r.tokens for r in records], lexicon, config)
    embeddings = embedder.embed(clips)
    assert embeddings.shape == (4, 4) and np.isfinite(embeddings).all()
    with pytest.raises(ValueError):
        train_triplet(clips[:2], [r.tokens for r in records[:2]], lexicon, config)


def test_triplet_embedding_separates_held_out_clips(lexicon):
    """Clips whose captions share significant words end up closer than clips whose captions do not"""
    group_captions = [['a', 'corner', 'on', 'the', 'left'], ['a', 'shot', 'over', 'the', 'bar'],
                      ['a', 'yellow', 'card']]
    rng = np.random.default_rng(5)
    centers = rng.standard_normal((3, 8)) * 3.0

    def clips(per_group: int):
        out, captions = [], []
        for g, caption in enumerate(group_captions):
            for _ in range(per_group):
                out.append(ClipFeatures(img=np.zeros((2, 32, 64, 3)),
                                        flow=centers[g] + rng.standard_normal((2, 8)),
                                        vae=rng.standard_normal((2, 4))))
                captions.append(caption)
        return out, captions

    train_clips, train_captions = clips(20)
    held_out, held_out_captions = clips(10)
    config = TrainConfig(kind='knn', streams=['flow'], triplet_epochs=20, batch_size=16, seed=0)
    embedder = train_triplet(train_clips, train_captions, lexicon, config)

    embeddings = embedder.embed(held_out)
    similarity = sw_f1_matrix(np.stack([sw_vector(c, lexicon) for c in held_out_captions]))
    anchors, positives, negatives = sample_triplets(similarity, config.triplet_threshold, np.random.default_rng(1))
    d_pos = np.linalg.norm(embeddings[anchors] - embeddings[positives], axis=1).mean()
    d_neg = np.linalg.norm(embeddings[anchors] - embeddings[negatives], axis=1).mean()
    assert d_pos < d_neg, f"Held-out mean d(a, p) = {d_pos:.3f} not below d(a, n) = {d_neg:.3f}"


def test_evaluate_model_returns_hypotheses(toy_data, lexicon):
    records, features, vocab = toy_data
    model = build_model(tiny_config(vocab_size=len(vocab)))
    metrics, hyps = evaluate_model(model, records, features, vocab, lexicon, max_len=6)
    assert len(hyps) == len(records) and all(len(h) <= 6 for h in hyps)
    assert metrics.normalized >= 0.0


def test_default_suite_rows():
    suite = default_suite(TrainConfig(epochs_max=2))
    assert [c.label for c in suite] == ['proposed', 'w/o L2', 'w/o L3', 'img-L1', 'flow-L1', 'vae-L1', 'k-NN',
                                        'baseline']
    for config, stream in zip(suite[3:6], ('img', 'flow', 'vae')):
        assert config.streams == [stream] and not config.use_l2 and not config.use_l3, config.label
    assert [c.kind for c in suite[-2:]] == ['knn', 'random']
    assert all(c.epochs_max == 2 for c in suite)


@pytest.mark.slow
def test_ablation_suite_runs(synthetic_corpus, lexicon):
    records, vocab, features, _ = synthetic_corpus
    suite = default_suite(TrainConfig(epochs_max=2, batch_size=4, triplet_epochs=2))
    report = run_ablation(suite, records, features, vocab, lexicon, tiny_config(vocab_size=len(vocab)))
    assert [row.label for row in report.rows] == [c.label for c in suite]
    for row in report.rows[:7]:
        assert row.metrics is not None, f"Row {row.label} failed: {row.error}"
    assert all(row.metrics is not None or row.error for row in report.rows)
    assert all(note in report.notes for note in CONTEXT_NOTES)


@pytest.mark.slow
def test_overfit_fifty_clips(lexicon):
    """The default model memorizes a small synthetic corpus"""
    features_settings = FeatureSettings(vae_epochs=2)
    manifest = build_manifest(50, seed=0, duration_s=4.0)
    records = [r.model_copy(update={'split': 'train'}) for r in manifest_records(manifest, features_settings)]
    pca, vae = fit_feature_models(manifest, features_settings, seed=0)
    features = extract_all(manifest, features_settings, pca, vae)
    vocab = build_vocab([r.tokens for r in records])

    model = build_model(configure_for(ModelConfig(), len(vocab), features[records[0].clip_id]))
    config = TrainConfig(epochs_max=150, eval_every=25, patience=100, seed=0)
    train(model, records, records, features, vocab, lexicon, config)

    dataset = CaptionDataset(records, features, vocab, lexicon, max_seq_len=model.config.max_seq_len)
    batch = dataset.collate(dataset.examples)
    with torch.no_grad():
        predicted = model(batch.inputs, batch.features).logits_c.argmax(dim=-1)
    counted = batch.targets != vocab.pad_id
    accuracy = float((predicted == batch.targets)[counted].float().mean())
    assert accuracy >= 0.9, f"Teacher-forced token accuracy {accuracy:.3f} below 0.9"

    fitted, hyps = evaluate_model(model, records, features, vocab, lexicon)
    expected = [vocab.decode(vocab.encode(r.tokens), skip_special=True) for r in records]
    exact = sum(h == e for h, e in zip(hyps, expected)) / len(records)
    assert exact >= 0.8, f"Only {exact:.0%} of training captions reproduced"

    random_metrics = evaluate_corpus(caption_random(records, records, seed=0), [r.tokens for r in records], lexicon)
    assert fitted.normalized > random_metrics.normalized, \
        f"Fitted model {fitted.normalized:.3f} does not beat the random baseline {random_metrics.normalized:.3f}"


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
