"""
Soccer action categories
The sixteen SoccerNet event labels used as caption conditions, with display
names and the number of captions per action in the reference dataset.
"""
from typing import Dict, List, Tuple

# (slug, display name, captions in the reference dataset)
_CATALOG: Tuple[Tuple[str, str, int], ...] = (
    ('shots_on_target', 'shots on target', 2326),
    ('corner', 'corner', 3891),
    ('substitution', 'substitution', 2171),
    ('yellow_card', 'yellowcard', 1646),
    ('shots_off_target', 'shots off target', 2528),
    ('foul', 'foul', 3085),
    ('kick_off', 'kick-off', 769),
    ('ball_out_of_play', 'ball out of play', 1252),
    ('goal', 'goal', 1295),
    ('direct_freekick', 'direct freekick', 795),
    ('offside', 'offside', 1267),
    ('indirect_freekick', 'indirect freekick', 399),
    ('penalty', 'penalty', 87),
    ('red_card', 'redcard', 44),
    ('clearance', 'clearance', 68),
    ('yellow_red_card', 'yellow-red card', 33),
)

ACTION_CATEGORIES: List[str] = [slug for slug, _, _ in _CATALOG]
ACTION_DISPLAY_NAMES: Dict[str, str] = {slug: name for slug, name, _ in _CATALOG}
ACTION_CAPTION_COUNTS: Dict[str, int] = {slug: count for slug, _, count in _CATALOG}


def _key(name: str) -> str:
    return ''.join(ch for ch in name.lower() if ch.isalnum())


_LOOKUP: Dict[str, str] = {}
for _slug, _name, _ in _CATALOG:
    _LOOKUP[_key(_slug)] = _slug
    _LOOKUP[_key(_name)] = _slug


def normalize_action(name: str) -> str:
    """
    Map a slug or display name ("Shots off target", "yellow-red card") to its slug

    Raises:
        ValueError: if the name is not one of the sixteen categories
    """
    slug = _LOOKUP.get(_key(name or ''))
    if slug is None:
        raise ValueError(
            f"Unknown action category '{name}'. Valid categories: {', '.join(ACTION_CATEGORIES)}"
        )
    return slug


def action_tag(action: str) -> str:
    """Tag token fed to the transformer as the first word of a caption"""
    return f"<{normalize_action(action)}>"
