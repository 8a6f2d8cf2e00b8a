"""
Soccer-semantics metrics: precision and recall of stemmed significant words
"""
from collections import Counter
from typing import List, Literal, Sequence, Tuple

from src.config.logging_config import logger
from src.corpus.lexicon import SWLexicon, sw_extract

Tokens = Sequence[str]


def sw_match(hyp: Tokens, ref: Tokens, lexicon: SWLexicon) -> Tuple[int, int, int]:
    """(matched, hypothesis SW count, reference SW count) under multiset intersection"""
    hyp_sw = Counter(sw_extract(hyp, lexicon))
    ref_sw = Counter(sw_extract(ref, lexicon))
    matched = sum((hyp_sw & ref_sw).values())
    return matched, sum(hyp_sw.values()), sum(ref_sw.values())


def sw_precision_recall(hyps: Sequence[Tokens], refs: Sequence[Tokens], lexicon: SWLexicon,
                        average: Literal['micro', 'macro'] = 'micro') -> Tuple[float, float]:
    """
    Significant-word precision and recall in percent

    Args:
        hyps, refs: aligned token sequences
        lexicon: SW lexicon (stemmed matching)
        average: "micro" sums matches over the corpus; "macro" averages the
            per-pair values over pairs whose denominator is non-zero

    Returns:
        (precision, recall); both 0 when the corpus has no significant words
    """
    if len(hyps) != len(refs):
        raise ValueError(f"Got {len(hyps)} hypotheses for {len(refs)} references")
    if average not in ('micro', 'macro'):
        raise ValueError(f"average must be 'micro' or 'macro', got {average!r}")

    counts: List[Tuple[int, int, int]] = [sw_match(h, r, lexicon) for h, r in zip(hyps, refs)]
    total_hyp = sum(c[1] for c in counts)
    total_ref = sum(c[2] for c in counts)
    if total_hyp == 0 and total_ref == 0:
        logger.warning('No significant words in hypotheses or references; precision and recall set to 0')
        return 0.0, 0.0

    if average == 'micro':
        matched = sum(c[0] for c in counts)
        precision = 100.0 * matched / total_hyp if total_hyp else 0.0
        recall = 100.0 * matched / total_ref if total_ref else 0.0
        return precision, recall

    precisions = [100.0 * m / h for m, h, _ in counts if h]
    recalls = [100.0 * m / r for m, _, r in counts if r]
    precision = sum(precisions) / len(precisions) if precisions else 0.0
    recall = sum(recalls) / len(recalls) if recalls else 0.0
    return precision, recall
