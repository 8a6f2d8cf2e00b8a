"""
Syntax-level caption metrics: BLEU@n and CIDEr-D
One reference caption per clip.
"""
import math
from collections import Counter
from typing import List, Sequence, Tuple

from pycocoevalcap.bleu.bleu_scorer import BleuScorer

Tokens = Sequence[str]


def _check_aligned(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> None:
    if len(hyps) != len(refs):
        raise ValueError(f"Got {len(hyps)} hypotheses for {len(refs)} references")
    if not refs:
        raise ValueError('Cannot score an empty corpus')


def _check_order(n: int) -> None:
    if not 1 <= n <= 4:
        raise ValueError(f"BLEU order must be in 1..4, got {n}")


def _coco_bleu(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> List[float]:
    """COCO BLEU@1..4 in [0, 1]; a caption shorter than k adds no k-grams to either count"""
    scorer = BleuScorer(n=4)
    for hyp, ref in zip(hyps, refs):
        scorer += (' '.join(hyp), [' '.join(ref)])
    score, _ = scorer.compute_score(option='closest', verbose=0)
    return [float(s) for s in score]


def bleu(hyps: Sequence[Tokens], refs: Sequence[Tokens], n: int = 4) -> float:
    """
    Corpus-level BLEU@n in percent

    Clipped n-gram counts are summed over the corpus before the geometric mean
    and the brevity penalty. An empty hypothesis contributes zero counts; an
    all-empty hypothesis corpus scores 0.
    """
    _check_aligned(hyps, refs)
    _check_order(n)
    if sum(len(h) for h in hyps) == 0:
        return 0.0
    return _coco_bleu(hyps, refs)[n - 1] * 100.0


def sentence_bleu(hyp: Tokens, ref: Tokens, n: int = 4) -> float:
    """BLEU@n of a single pair in percent"""
    _check_order(n)
    if not hyp:
        return 0.0
    return _coco_bleu([hyp], [ref])[n - 1] * 100.0


def bleu_all(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> List[float]:
    """[B@1, B@2, B@3, B@4]"""
    _check_aligned(hyps, refs)
    if sum(len(h) for h in hyps) == 0:
        return [0.0] * 4
    return [s * 100.0 for s in _coco_bleu(hyps, refs)]


def precook(tokens: Tokens, n: int = 4) -> Counter:
    """Counts of every k-gram, k = 1..n"""
    counts: Counter = Counter()
    for k in range(1, n + 1):
        for i in range(len(tokens) - k + 1):
            counts[tuple(tokens[i:i + k])] += 1
    return counts


class CiderD:
    """
    CIDEr-D consensus scorer

    Two phases: fit() computes document frequencies over the reference corpus,
    score() then evaluates aligned hypotheses against it.
    """

    def __init__(self, n: int = 4, sigma: float = 6.0):
        self.n = n
        self.sigma = sigma
        self.document_frequency: Counter = Counter()
        self.ref_vectors: List[Tuple[List[dict], List[float], int]] = []
        self.log_ref_count = 0.0

    def _vector(self, counts: Counter) -> Tuple[List[dict], List[float], int]:
        vec = [dict() for _ in range(self.n)]
        norm = [0.0] * self.n
        length = 0
        for ngram, term_freq in counts.items():
            k = len(ngram) - 1
            df = math.log(max(1.0, self.document_frequency.get(ngram, 0.0)))
            vec[k][ngram] = float(term_freq) * (self.log_ref_count - df)
            norm[k] += vec[k][ngram] ** 2
            if k == 0:
                length += term_freq
        return vec, [math.sqrt(x) for x in norm], length

    def _sim(self, vec_hyp, vec_ref, norm_hyp, norm_ref, len_hyp, len_ref) -> List[float]:
        delta = float(len_hyp - len_ref)
        out = []
        for k in range(self.n):
            value = 0.0
            for ngram, weight in vec_hyp[k].items():
                # clipped against the reference weight
                value += min(weight, vec_ref[k].get(ngram, 0.0)) * vec_ref[k].get(ngram, 0.0)
            if norm_hyp[k] != 0 and norm_ref[k] != 0:
                value /= norm_hyp[k] * norm_ref[k]
            else:
                value = 0.0
            value *= math.e ** (-(delta ** 2) / (2 * self.sigma ** 2))
            out.append(value)
        return out

    def fit(self, refs: Sequence[Tokens]) -> 'CiderD':
        if not refs:
            raise ValueError('CIDEr-D needs at least one reference')
        cooked = [precook(r, self.n) for r in refs]
        self.document_frequency = Counter()
        for counts in cooked:
            for ngram in counts:
                self.document_frequency[ngram] += 1
        self.log_ref_count = math.log(float(len(refs)))
        self.ref_vectors = [self._vector(c) for c in cooked]
        return self

    def score(self, hyps: Sequence[Tokens]) -> Tuple[float, List[float]]:
        """(corpus mean, per-pair scores) on the 0-10 scale"""
        if len(hyps) != len(self.ref_vectors):
            raise ValueError(f"Got {len(hyps)} hypotheses for {len(self.ref_vectors)} fitted references")
        scores = []
        for hyp, (vec_ref, norm_ref, len_ref) in zip(hyps, self.ref_vectors):
            vec, norm, length = self._vector(precook(hyp, self.n))
            sims = self._sim(vec, vec_ref, norm, norm_ref, length, len_ref)
            scores.append(sum(sims) / self.n * 10.0)
        return (sum(scores) / len(scores) if scores else 0.0), scores


def cider(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> float:
    """Corpus CIDEr-D with document frequencies from the references"""
    _check_aligned(hyps, refs)
    score, _ = CiderD().fit(refs).score(hyps)
    return score
