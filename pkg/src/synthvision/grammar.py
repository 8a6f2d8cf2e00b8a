"""
Event grammar for synthetic captions
Versioned data (data/caption_grammar.json) mapping an action and its outcome
attributes to one caption. Attribute markers are written as [name]; entity
placeholders such as {player} pass through untouched.
"""
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from src.corpus.actions import ACTION_CATEGORIES, normalize_action

_MARKER_RE = re.compile(r'\[([a-z_]+)\]')


@dataclass(frozen=True)
class ActionGrammar:
    attributes: Dict[str, List[str]]
    template: str
    phrases: Dict[str, Dict[str, str]]


class CaptionGrammar:
    """Deterministic caption rendering keyed on (action, attributes)"""

    def __init__(self, actions: Dict[str, ActionGrammar], version: int = 1):
        missing = [a for a in ACTION_CATEGORIES if a not in actions]
        if missing:
            raise ValueError(f"Grammar has no entry for actions: {', '.join(missing)}")
        self.actions = actions
        self.version = version

    def sample_attributes(self, action: str, rng: np.random.Generator) -> Dict[str, str]:
        """Draw one value per attribute (sorted attribute order for reproducibility)"""
        spec = self.actions[normalize_action(action)]
        return {name: str(rng.choice(spec.attributes[name])) for name in sorted(spec.attributes)}

    def render(self, action: str, attributes: Dict[str, str]) -> str:
        spec = self.actions[normalize_action(action)]
        for name, values in spec.attributes.items():
            if attributes.get(name) not in values:
                raise ValueError(f"Attribute {name}={attributes.get(name)!r} not in {values} for {action}")

        def fill(match: re.Match) -> str:
            name = match.group(1)
            value = attributes[name]
            return spec.phrases.get(name, {}).get(value, value)

        text = spec.template
        # phrases may themselves contain markers
        for _ in range(3):
            text = _MARKER_RE.sub(fill, text)
        return text


def load_grammar(path: Optional[Path] = None) -> CaptionGrammar:
    if path is None:
        from src.config.settings import settings
        path = settings.synth.grammar_path
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Grammar file not found: {path}")
    payload = json.loads(path.read_text(encoding='utf-8'))
    actions = {
        normalize_action(name): ActionGrammar(
            attributes={k: list(v) for k, v in entry['attributes'].items()},
            template=entry['template'],
            phrases=entry.get('phrases', {}),
        )
        for name, entry in payload['actions'].items()
    }
    return CaptionGrammar(actions, version=payload.get('version', 1))
