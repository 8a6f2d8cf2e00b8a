"""
Caption dataset files and train/val/test splitting
"""
import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.config.logging_config import logger
from src.corpus.text import anonymize, detokenize, tokenize
from src.models.schemas import CaptionRecord

SPLITS = ('train', 'val', 'test')


def read_jsonl(path: Path) -> List[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    rows = []
    with path.open(encoding='utf-8') as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_no}: invalid JSON ({e})") from e
    return rows


def write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8') as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + '\n')


def load_records(path: Path, entities: Optional[Dict[str, Dict[str, str]]] = None) -> List[CaptionRecord]:
    """
    Read a JSON-lines caption file into records

    Each line holds {clip_id, action, caption[, split][, entities]}. Captions are
    anonymized with the line's own entity map merged over the per-clip map from
    `entities` (clip id -> {surface name: category}, "*" applies to every clip),
    then tokenized.
    """
    entities = entities or {}
    records = []
    for row in read_jsonl(path):
        clip_id = str(row['clip_id'])
        mapping = dict(entities.get('*', {}))
        mapping.update(entities.get(clip_id, {}))
        mapping.update(row.get('entities', {}))
        text = anonymize(row.get('caption', ''), mapping)
        records.append(CaptionRecord(
            clip_id=clip_id,
            action=row['action'],
            tokens=tokenize(text),
            split=row.get('split'),
        ))
    logger.info(f"Loaded {len(records)} caption records from {path}")
    return records


def save_records(path: Path, records: Sequence[CaptionRecord]) -> None:
    write_jsonl(path, (
        {
            'clip_id': r.clip_id,
            'action': r.action,
            'caption': detokenize(r.tokens),
            **({'split': r.split} if r.split else {}),
        }
        for r in records
    ))


def split_sizes(n: int, ratios: Tuple[float, float, float]) -> Tuple[int, int, int]:
    """Largest-remainder apportionment of n records over the three splits"""
    exact = [n * r for r in ratios]
    sizes = [math.floor(x) for x in exact]
    remainder = n - sum(sizes)
    # ties go to the earlier split
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:remainder]:
        sizes[i] += 1
    return tuple(sizes)


def split_dataset(records: Sequence[CaptionRecord],
                  ratios: Tuple[float, float, float] = (0.85, 0.05, 0.10),
                  seed: int = 0) -> List[CaptionRecord]:
    """
    Assign train/val/test split tags at random

    The assignment depends only on the set of clip ids and the seed: records are
    ordered by clip id before the seeded permutation. Fewer than three records
    all go to train.

    Returns:
        New records (input order preserved) with split set
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"Split ratios must be three non-negative numbers summing to 1, got {ratios}")

    n = len(records)
    if n < 3:
        return [r.model_copy(update={'split': 'train'}) for r in records]

    sizes = split_sizes(n, ratios)
    order = sorted(range(n), key=lambda i: records[i].clip_id)
    permuted = np.random.default_rng(seed).permutation(n)
    assignment: Dict[int, str] = {}
    start = 0
    for split, size in zip(SPLITS, sizes):
        for slot in permuted[start:start + size]:
            assignment[order[slot]] = split
        start += size

    logger.info(f"Split {n} records into train/val/test = {sizes[0]}/{sizes[1]}/{sizes[2]} (seed={seed})")
    return [r.model_copy(update={'split': assignment[i]}) for i, r in enumerate(records)]


def by_split(records: Iterable[CaptionRecord], split: str) -> List[CaptionRecord]:
    return [r for r in records if r.split == split]
