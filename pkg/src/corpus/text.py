"""
Caption text handling: anonymization and tokenization
"""
import re
from typing import Dict, List

ENTITY_CATEGORIES = ('player', 'coach', 'team', 'time')

# Placeholders survive as single tokens; apostrophes and hyphens stay inside words
_TOKEN_RE = re.compile(r"\{[^\W_]+\}|[^\W_]+(?:['’\-][^\W_]+)*|[!.,]")


def placeholder(category: str) -> str:
    return '{' + category + '}'


def anonymize(text: str, entities: Dict[str, str]) -> str:
    """
    Replace entity surface names with their category placeholder

    Names are matched case-sensitively as whole words, longest name first, so
    "FC Alpha" wins over "Alpha" where both could match.

    Args:
        text: raw caption
        entities: surface name -> one of player, coach, team, time

    Returns:
        Anonymized caption; unmapped text is left untouched
    """
    if not text or not entities:
        return text or ''

    for name, category in entities.items():
        if category not in ENTITY_CATEGORIES:
            raise ValueError(f"Entity '{name}' has unknown category '{category}'")

    names = sorted((n for n in entities if n), key=lambda n: (-len(n), n))
    if not names:
        return text
    pattern = re.compile(
        r'(?<![\w{])(?:' + '|'.join(re.escape(n) for n in names) + r')(?![\w}])'
    )
    return pattern.sub(lambda m: placeholder(entities[m.group(0)]), text)


def tokenize(text: str) -> List[str]:
    """
    Lowercase a caption and split it into tokens

    Words are kept whole (including internal hyphens and apostrophes), each of
    "!", "." and "," becomes its own token, every other punctuation mark is
    dropped.
    """
    if not text:
        return []
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: List[str]) -> str:
    """Join tokens back into a caption string (punctuation attached to the previous word)"""
    out = ''
    for token in tokens:
        if token in ('!', '.', ',') and out:
            out += token
        else:
            out += (' ' if out else '') + token
    return out
