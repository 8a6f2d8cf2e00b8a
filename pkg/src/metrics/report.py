"""
Corpus-level metrics, the normalized score and result tables
"""
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from src.config.logging_config import logger
from src.corpus.dataset import read_jsonl
from src.corpus.lexicon import SWLexicon
from src.corpus.text import tokenize
from src.metrics.semantics import sw_precision_recall
from src.metrics.syntax import bleu_all, cider
from src.models.schemas import AblationReport, AblationRow, MetricsReport

# Nominal values: a baseline model's scores
NOMINAL_B4 = 10.0
NOMINAL_CIDER = 0.55
NOMINAL_PRECISION = 40.0
NOMINAL_RECALL = 40.0

Tokens = Sequence[str]


def diversity(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> float:
    """Distinct generated captions / distinct reference captions"""
    if not refs:
        raise ValueError('Diversity needs at least one reference caption')
    distinct_refs = {tuple(r) for r in refs}
    distinct_hyps = {tuple(h) for h in hyps}
    return len(distinct_hyps) / len(distinct_refs)


def normalized_score(b4: float, cider_score: float, precision: float, recall: float) -> float:
    """Mean of B@4/10, CIDEr/0.55, Precision/40 and Recall/40"""
    for name, value in (('b4', b4), ('cider', cider_score), ('precision', precision), ('recall', recall)):
        if value < 0:
            raise ValueError(f"{name} must be non-negative, got {value}")
    return 0.25 * (b4 / NOMINAL_B4 + cider_score / NOMINAL_CIDER
                   + precision / NOMINAL_PRECISION + recall / NOMINAL_RECALL)


def evaluate_corpus(hyps: Sequence[Tokens], refs: Sequence[Tokens], lexicon: SWLexicon) -> MetricsReport:
    """All syntax, semantics and corpus metrics for aligned captions"""
    b1, b2, b3, b4 = bleu_all(hyps, refs)
    cider_score = cider(hyps, refs)
    precision, recall = sw_precision_recall(hyps, refs, lexicon)
    return MetricsReport(
        b1=b1, b2=b2, b3=b3, b4=b4,
        cider=cider_score,
        sw_precision=precision,
        sw_recall=recall,
        diversity=diversity(hyps, refs) if hyps else 0.0,
        normalized=normalized_score(b4, cider_score, precision, recall),
    )


def load_captions(path: Path) -> Dict[str, List[str]]:
    """clip_id -> tokens from a JSON-lines file of {clip_id, caption}"""
    captions: Dict[str, List[str]] = {}
    for row in read_jsonl(path):
        if 'clip_id' not in row:
            raise ValueError(f"{path}: every line needs a clip_id")
        caption = row.get('caption', '')
        captions[str(row['clip_id'])] = list(caption) if isinstance(caption, list) else tokenize(caption)
    return captions


def join_captions(hyps: Dict[str, List[str]], refs: Dict[str, List[str]]) -> Tuple[List[List[str]], List[List[str]]]:
    """Align hypotheses with references on clip_id (sorted); every reference needs a hypothesis"""
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise ValueError(f"{len(missing)} reference clips have no hypothesis, e.g. {missing[:3]}")
    extra = set(hyps) - set(refs)
    if extra:
        logger.warning(f"Ignoring {len(extra)} hypotheses without a reference")
    ids = sorted(refs)
    return [hyps[i] for i in ids], [refs[i] for i in ids]


def evaluate_files(hyps_path: Path, refs_path: Path, lexicon: SWLexicon) -> MetricsReport:
    hyps, refs = join_captions(load_captions(hyps_path), load_captions(refs_path))
    return evaluate_corpus(hyps, refs, lexicon)


COLUMNS = (('B@4', 'b4', '{:.1f}'), ('CIDEr', 'cider', '{:.2f}'), ('Precision', 'sw_precision', '{:.1f}'),
           ('Recall', 'sw_recall', '{:.1f}'), ('Diversity', 'diversity', '{:.2f}'),
           ('Normalized', 'normalized', '{:.2f}'))


def format_table(rows: Iterable[AblationRow], notes: Optional[Iterable[str]] = None) -> str:
    """Plain-text table, one row per configuration, failed rows show their error"""
    rows = list(rows)
    label_width = max([len('Model')] + [len(r.label) for r in rows])
    header = 'Model'.ljust(label_width) + ''.join(f"  {title:>10}" for title, _, _ in COLUMNS)
    lines = [header, '-' * len(header)]
    for row in rows:
        if row.metrics is None:
            lines.append(row.label.ljust(label_width) + f"  failed: {row.error or 'unknown error'}")
            continue
        values = row.metrics.model_dump()
        lines.append(row.label.ljust(label_width)
                     + ''.join(f"  {fmt.format(values[key]):>10}" for _, key, fmt in COLUMNS))
    for note in notes or []:
        lines.append(f"note: {note}")
    return '\n'.join(lines)


def report_from_values(path: Path) -> AblationReport:
    """
    Recompute the normalized column from published metric values

    The file lists rows of {label, b4, cider, precision, recall[, reported_normalized]}.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Values file not found: {path}")
    payload = json.loads(path.read_text(encoding='utf-8'))
    report = AblationReport()
    for entry in payload['rows']:
        score = normalized_score(entry['b4'], entry['cider'], entry['precision'], entry['recall'])
        metrics = MetricsReport(b4=entry['b4'], cider=entry['cider'], sw_precision=entry['precision'],
                                sw_recall=entry['recall'], normalized=score)
        report.rows.append(AblationRow(label=entry['label'], metrics=metrics))
        reported = entry.get('reported_normalized')
        if reported is not None and abs(reported - score) > 0.005:
            report.notes.append(f"{entry['label']}: computed {score:.3f}, published {reported} (rounded)")
    return report
