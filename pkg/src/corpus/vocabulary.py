"""
Token vocabulary with special tokens and one tag token per action category
"""
import json
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from src.config.logging_config import logger
from src.corpus.actions import ACTION_CATEGORIES, action_tag

PAD = '<pad>'
UNK = '<unk>'
EOS = '<eos>'
SPECIAL_TOKENS = (PAD, UNK, EOS)


class Vocabulary:
    """
    Bidirectional token <-> id map

    Ids are contiguous: specials first, then the sixteen action tags, then
    corpus tokens by descending frequency with alphabetical tie-breaks.
    Read-only after construction.
    """

    def __init__(self, tokens: Sequence[str], min_count: int = 1, counts: Optional[Dict[str, int]] = None):
        self.min_count = min_count
        self.counts: Dict[str, int] = dict(counts or {})
        self.id_to_token: List[str] = list(SPECIAL_TOKENS) + [action_tag(a) for a in ACTION_CATEGORIES]
        self.id_to_token.extend(t for t in tokens if t not in self.id_to_token)
        self.token_to_id: Dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    def tag_id(self, action: str) -> int:
        return self.token_to_id[action_tag(action)]

    def is_tag(self, token_id: int) -> bool:
        return len(SPECIAL_TOKENS) <= token_id < len(SPECIAL_TOKENS) + len(ACTION_CATEGORIES)

    def encode(self, tokens: Iterable[str], action: Optional[str] = None, add_eos: bool = False) -> List[int]:
        """
        Map tokens to ids; out-of-vocabulary tokens become the unk id

        Args:
            tokens: caption tokens
            action: when given, the action tag id is prepended
            add_eos: append the eos id
        """
        ids = [self.tag_id(action)] if action is not None else []
        unk = self.unk_id
        ids.extend(self.token_to_id.get(t, unk) for t in tokens)
        if add_eos:
            ids.append(self.eos_id)
        return ids

    def decode(self, ids: Iterable[int], skip_special: bool = False) -> List[str]:
        """Map ids back to tokens; skip_special drops pad/eos and action tags"""
        tokens = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.id_to_token):
                raise ValueError(f"Token id {i} outside vocabulary of size {len(self)}")
            if skip_special and (i in (self.pad_id, self.eos_id) or self.is_tag(i)):
                continue
            tokens.append(self.id_to_token[i])
        return tokens

    def save(self, path: Path) -> None:
        payload = {
            'min_count': self.min_count,
            'tokens': self.id_to_token,
            'counts': self.counts,
        }
        Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=1), encoding='utf-8')

    @classmethod
    def load(cls, path: Path) -> 'Vocabulary':
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Vocabulary file not found: {path}")
        payload = json.loads(path.read_text(encoding='utf-8'))
        vocab = cls(payload['tokens'], min_count=payload.get('min_count', 1), counts=payload.get('counts'))
        if vocab.id_to_token != payload['tokens']:
            raise ValueError(f"Vocabulary file {path} does not start with the expected special and tag tokens")
        return vocab


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 4) -> Vocabulary:
    """
    Build a vocabulary from tokenized captions

    Args:
        corpus: token sequences
        min_count: tokens seen fewer times map to unk

    Returns:
        Vocabulary with specials, the sixteen action tags and every corpus token
        whose frequency is at least min_count
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")

    counts = Counter(token for tokens in corpus for token in tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    vocab = Vocabulary(kept, min_count=min_count, counts={t: counts[t] for t in kept})
    logger.info(
        f"Vocabulary built: {len(vocab)} ids ({len(kept)} corpus tokens kept, "
        f"{len(counts) - len(kept)} below min_count={min_count})"
    )
    return vocab
