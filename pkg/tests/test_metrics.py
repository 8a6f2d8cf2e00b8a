"""
Test suite for BLEU, CIDEr-D, significant-word precision/recall, diversity and reports
"""
import json
import math
from pathlib import Path

import pytest

from src.corpus.text import tokenize
from src.metrics.report import (diversity, evaluate_corpus, evaluate_files, format_table, join_captions,
                                normalized_score, report_from_values)
from src.metrics.semantics import sw_precision_recall
from src.metrics.syntax import CiderD, bleu, cider, sentence_bleu
from src.models.schemas import AblationRow, MetricsReport

DATA_DIR = Path(__file__).parent.parent / 'data'

REFERENCE = ("That was unbelievable. {PLAYER} {TEAM} changes the scoreline after getting on the end of a "
             "brilliant pass and firing a precise shot that goes inside the right post")
HYPOTHESIS = REFERENCE.replace('right post', 'left post')

CORPUS = [
    ['goal', '!', '{player}', 'scores', 'from', 'the', 'penalty', 'spot', '.'],
    ['{team}', 'win', 'a', 'corner', 'on', 'the', 'left', '.'],
    ['{player}', 'is', 'shown', 'a', 'yellow', 'card', 'for', 'a', 'late', 'tackle', '.'],
    ['the', 'ball', 'goes', 'out', 'for', 'a', 'throw-in', '.'],
]


def test_commentary_pair_bleu_and_precision(lexicon):
    """One substituted word: sentence B@1 close to 96 and SW precision of 75%"""
    hyp, ref = tokenize(HYPOTHESIS), tokenize(REFERENCE)
    assert sentence_bleu(hyp, ref, n=1) == pytest.approx(96.4, abs=0.5)
    precision, recall = sw_precision_recall([hyp], [ref], lexicon)
    assert precision == pytest.approx(75.0) and recall == pytest.approx(75.0)


def test_sentence_bleu_hand_count():
    assert sentence_bleu(['a', 'b', 'c'], ['a', 'b', 'd'], n=1) == pytest.approx(200 / 3)


def test_identity_corpus(lexicon):
    """Hypotheses equal to references score perfectly everywhere"""
    report = evaluate_corpus(CORPUS, CORPUS, lexicon)
    for name in ('b1', 'b2', 'b3', 'b4', 'sw_precision', 'sw_recall'):
        assert getattr(report, name) == pytest.approx(100.0), f"{name} should be 100, got {getattr(report, name)}"
    assert report.cider == pytest.approx(10.0, abs=1e-6)
    assert report.diversity == 1.0


def test_bleu_edge_cases():
    assert bleu([[], []], [['a'], ['b']]) == 0.0
    with pytest.raises(ValueError):
        bleu([['a']], [['a'], ['b']])
    with pytest.raises(ValueError):
        bleu([['a']], [['a']], n=5)


def test_bleu_identity_with_short_captions():
    """Captions shorter than n add no n-grams, so a self-scored corpus stays at 100 for every order"""
    corpus = [['goal', '!'], CORPUS[0][:8]]
    for n in range(1, 5):
        assert bleu(corpus, corpus, n=n) == pytest.approx(100.0, abs=1e-4), f"B@{n} = {bleu(corpus, corpus, n=n)}"


def test_bleu_empty_hypothesis_adds_no_counts():
    """Only the brevity penalty sees the empty hypothesis: exp(1 - 3/2)"""
    score = bleu([['a', 'b'], []], [['a', 'b'], ['c']], n=1)
    assert score == pytest.approx(100.0 * math.exp(-0.5), abs=1e-3), f"B@1 = {score}"


def test_cider_disjoint_pair_scores_zero():
    scorer = CiderD().fit(CORPUS)
    _, per_pair = scorer.score([['xyz'], CORPUS[1], CORPUS[2], CORPUS[3]])
    assert per_pair[0] == 0.0
    assert per_pair[1] == pytest.approx(10.0, abs=1e-6)


def test_cider_single_caption_corpus_is_zero():
    """Every n-gram appears in every reference: all IDF weights vanish"""
    assert cider([['a', 'goal']], [['a', 'goal']]) == 0.0


def test_cider_length_penalty():
    """Repeating the caption keeps the n-gram direction but is penalized for length"""
    scorer = CiderD().fit(CORPUS)
    _, per_pair = scorer.score([CORPUS[0] + CORPUS[0], CORPUS[1], CORPUS[2], CORPUS[3]])
    assert 0.0 < per_pair[0] < 10.0


def test_sw_multiset_matching(lexicon):
    precision, recall = sw_precision_recall([['goal', 'goal']], [['goal']], lexicon)
    assert (precision, recall) == (pytest.approx(50.0), pytest.approx(100.0))


def test_sw_macro_average(lexicon):
    hyps = [['goal', 'goal'], ['corner']]
    refs = [['goal'], ['corner']]
    micro = sw_precision_recall(hyps, refs, lexicon)
    macro = sw_precision_recall(hyps, refs, lexicon, average='macro')
    assert micro[0] == pytest.approx(200 / 3)
    assert macro[0] == pytest.approx(75.0)


def test_sw_without_significant_words(lexicon):
    assert sw_precision_recall([['the']], [['a']], lexicon) == (0.0, 0.0)


def test_diversity():
    refs = [['a'], ['b'], ['c'], ['c']]
    assert diversity([['x'], ['x'], ['x'], ['x']], refs) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        diversity([], [])


def test_normalized_score_published_rows():
    """Published metric rows reproduce the normalized column"""
    rows = [
        ((15.1, 0.95, 49.0, 46.6), 1.41),
        ((13.1, 0.84, 50.6, 51.7), 1.35),
        ((13.2, 0.90, 49.2, 46.4), 1.34),
        ((11.8, 0.65, 40.6, 43.3), 1.11),
        ((9.8, 0.53, 42.6, 43.6), 1.02),
    ]
    for values, published in rows:
        assert normalized_score(*values) == pytest.approx(published, abs=0.02), f"Row {values}"
    assert normalized_score(10, 0.55, 40, 40) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        normalized_score(-1, 0.5, 40, 40)


def test_report_from_values_file():
    report = report_from_values(DATA_DIR / 'published_results.json')
    assert [row.label for row in report.rows][0] == 'Proposed'
    computed = [round(row.metrics.normalized, 2) for row in report.rows]
    assert computed[:5] == [1.41, 1.35, 1.34, 1.11, 1.02]
    assert len(report.notes) == 1 and 'baseline' in report.notes[0].lower(), report.notes


def test_format_table_shows_failures():
    rows = [AblationRow(label='proposed', metrics=MetricsReport(b4=15.1, normalized=1.41)),
            AblationRow(label='k-NN', error='ValueError: no clips')]
    table = format_table(rows, notes=['context only'])
    assert 'Normalized' in table.splitlines()[0]
    assert '1.41' in table and 'failed: ValueError: no clips' in table
    assert table.splitlines()[-1] == 'note: context only'


def test_join_captions_requires_every_reference():
    with pytest.raises(ValueError):
        join_captions({'a': ['x']}, {'a': ['x'], 'b': ['y']})
    hyps, refs = join_captions({'b': ['y'], 'a': ['x'], 'c': ['z']}, {'b': ['y'], 'a': ['x']})
    assert hyps == [['x'], ['y']] and refs == hyps


def test_evaluate_files_identity(tmp_path, lexicon):
    path = tmp_path / 'captions.jsonl'
    path.write_text('\n'.join(json.dumps({'clip_id': f"c{i}", 'caption': ' '.join(tokens)})
                              for i, tokens in enumerate(CORPUS)) + '\n', encoding='utf-8')
    report = evaluate_files(path, path, lexicon)
    assert report.b4 == pytest.approx(100.0) and report.diversity == 1.0


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
