"""
Significant-word (SW) lexicon
Groups of soccer-technical words whose correct generation the losses
prioritize and the semantic metrics evaluate. Matching is done on Porter stems.
"""
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from nltk.stem import PorterStemmer

from src.config.logging_config import logger

SW_GROUP_COUNT = 55

_stemmer = PorterStemmer()


@lru_cache(maxsize=65536)
def stem(token: str) -> str:
    """Porter stem of a lowercase token"""
    return _stemmer.stem(token)


@dataclass(frozen=True)
class SWGroup:
    canonical: str
    members: Tuple[str, ...]
    stems: FrozenSet[str]
    # member counts only if one of these stems follows within the window
    requires_next: FrozenSet[str] = frozenset()
    # member does not count if one of these stems follows within the window
    ignores_next: FrozenSet[str] = frozenset()


@dataclass(frozen=True)
class SWLexicon:
    groups: Tuple[SWGroup, ...]
    window: int = 3
    stem_to_group: Dict[str, int] = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def canonical_ids(self) -> List[str]:
        return [g.canonical for g in self.groups]

    def index_of(self, canonical: str) -> int:
        for i, group in enumerate(self.groups):
            if group.canonical == canonical:
                return i
        raise KeyError(f"No SW group '{canonical}'")

    def group_at(self, tokens: Sequence[str], position: int) -> Optional[int]:
        """Index of the SW group matched by tokens[position], or None"""
        index = self.stem_to_group.get(stem(tokens[position]))
        if index is None:
            return None
        group = self.groups[index]
        if group.requires_next or group.ignores_next:
            following = {stem(t) for t in tokens[position + 1:position + 1 + self.window]}
            if group.requires_next and not (following & group.requires_next):
                return None
            if following & group.ignores_next:
                return None
        return index


def build_lexicon(groups: Sequence[dict], window: int = 3,
                  expected_groups: Optional[int] = SW_GROUP_COUNT) -> SWLexicon:
    """
    Build a lexicon from group definitions {canonical, members[, requires_next, ignores_next]}

    Raises:
        ValueError: on a wrong group count or a surface form/stem claimed by two groups
    """
    if expected_groups is not None and len(groups) != expected_groups:
        raise ValueError(f"Lexicon must have exactly {expected_groups} groups, got {len(groups)}")

    built: List[SWGroup] = []
    stem_to_group: Dict[str, int] = {}
    seen_members: Dict[str, str] = {}
    for index, spec in enumerate(groups):
        canonical = spec['canonical']
        members = tuple(m.strip().lower() for m in spec['members'])
        if not members:
            raise ValueError(f"SW group '{canonical}' has no members")
        for member in members:
            if member in seen_members:
                raise ValueError(
                    f"Surface form '{member}' belongs to both '{seen_members[member]}' and '{canonical}'"
                )
            seen_members[member] = canonical
            member_stem = stem(member)
            owner = stem_to_group.get(member_stem)
            if owner is not None and owner != index:
                raise ValueError(
                    f"Stem '{member_stem}' of '{member}' already belongs to group '{built[owner].canonical}'"
                )
            stem_to_group[member_stem] = index
        built.append(SWGroup(
            canonical=canonical,
            members=members,
            stems=frozenset(stem(m) for m in members),
            requires_next=frozenset(stem(w) for w in spec.get('requires_next', [])),
            ignores_next=frozenset(stem(w) for w in spec.get('ignores_next', [])),
        ))
    return SWLexicon(groups=tuple(built), window=window, stem_to_group=stem_to_group)


def load_lexicon(path: Path, expected_groups: Optional[int] = SW_GROUP_COUNT) -> SWLexicon:
    """Load the reviewed lexicon data file"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Lexicon file not found: {path}")
    payload = json.loads(path.read_text(encoding='utf-8'))
    lexicon = build_lexicon(payload['groups'], window=payload.get('window', 3), expected_groups=expected_groups)
    logger.debug(f"Loaded SW lexicon from {path}: {len(lexicon)} groups")
    return lexicon


def sw_positions(tokens: Sequence[str], lexicon: SWLexicon) -> List[int]:
    """Positions of tokens that are significant words"""
    return [i for i in range(len(tokens)) if lexicon.group_at(tokens, i) is not None]


def sw_extract(tokens: Sequence[str], lexicon: SWLexicon) -> List[str]:
    """
    Canonical group ids of the significant words in a caption

    Order is preserved and repeats are kept (multiset view).
    """
    out = []
    for i in range(len(tokens)):
        index = lexicon.group_at(tokens, i)
        if index is not None:
            out.append(lexicon.groups[index].canonical)
    return out


def sw_vector(tokens: Sequence[str], lexicon: SWLexicon) -> np.ndarray:
    """Binary presence vector over the lexicon groups (set view)"""
    vector = np.zeros(len(lexicon), dtype=np.float32)
    for i in range(len(tokens)):
        index = lexicon.group_at(tokens, i)
        if index is not None:
            vector[index] = 1.0
    return vector
