"""
Synthetic soccer scene generator
Renders a top-down pitch with scripted player/ball/card sprites for an action,
the exact optical flow of those sprites, and the caption dictated by the
scene's outcome attributes. Stands in for decoded match video.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.corpus.actions import normalize_action
from src.corpus.text import tokenize
from src.synthvision.grammar import CaptionGrammar, load_grammar

Color = Tuple[float, float, float]

GRASS: Color = (0.13, 0.55, 0.13)
LINE: Color = (1.0, 1.0, 1.0)
TEAM_A: Color = (0.85, 0.1, 0.1)
TEAM_B: Color = (0.1, 0.2, 0.85)
KEEPER: Color = (0.95, 0.6, 0.1)
REFEREE: Color = (0.05, 0.05, 0.05)
BALL: Color = (1.0, 1.0, 1.0)
YELLOW: Color = (1.0, 0.9, 0.0)
RED: Color = (0.9, 0.0, 0.0)


@dataclass
class Sprite:
    name: str
    color: Color
    size: Tuple[int, int]  # (h, w)
    track: np.ndarray  # [T+1, 2] integer top-left (y, x)
    visible: Tuple[int, int] = (0, 1 << 30)  # [first, last) frame

    def is_visible(self, t: int) -> bool:
        return self.visible[0] <= t < self.visible[1]


@dataclass
class SceneEvent:
    action: str
    attributes: Dict[str, str]
    tracks: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class SyntheticClip:
    frames: np.ndarray  # [T, H, W, 3] float32 in [0, 1]
    true_flow: np.ndarray  # [T, 2, H, W] float32, u then v, pixels/frame
    events: SceneEvent
    caption: List[str]
    clip_id: str = ''
    seed: int = 0

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])


class Pitch:
    """Pitch geometry scaled to the frame size"""

    def __init__(self, height: int, width: int):
        self.h, self.w = height, width
        self.player = (max(2, height // 16), max(1, width // 64))
        self.ball = (max(1, height // 32), max(1, width // 64))
        self.goal_top = int(height * 0.375)
        self.goal_bottom = int(height * 0.625)

    @property
    def mid_y(self) -> int:
        return self.h // 2

    def direction(self, side: str) -> int:
        return -1 if side == 'left' else 1

    def goal_x(self, side: str) -> int:
        return 1 if side == 'left' else self.w - 1 - self.ball[1] - 1

    def half_x(self, side: str) -> int:
        return self.w // 4 if side == 'left' else 3 * self.w // 4

    def background(self) -> np.ndarray:
        img = np.empty((self.h, self.w, 3), dtype=np.float32)
        img[:] = GRASS
        h, w = self.h, self.w
        img[:, w // 2] = LINE
        box_w, box_top, box_bottom = max(2, w // 8), h // 4, 3 * h // 4
        for x0, x1 in ((0, box_w), (w - 1 - box_w, w - 1)):
            img[box_top, x0:x1 + 1] = LINE
            img[box_bottom, x0:x1 + 1] = LINE
            edge = x1 if x0 == 0 else x0
            img[box_top:box_bottom + 1, edge] = LINE
        img[self.goal_top:self.goal_bottom + 1, 0] = LINE
        img[self.goal_top:self.goal_bottom + 1, w - 1] = LINE
        return img


def path(waypoints: List[Tuple[float, float]], n_frames: int) -> np.ndarray:
    """Integer positions for frames 0..n_frames along a piecewise-linear path"""
    points = np.asarray(waypoints, dtype=np.float64)
    if len(points) == 1:
        return np.repeat(np.rint(points).astype(np.int64), n_frames + 1, axis=0)
    steps = np.linspace(0.0, len(points) - 1, n_frames + 1)
    seg = np.minimum(steps.astype(np.int64), len(points) - 2)
    frac = (steps - seg)[:, None]
    track = points[seg] + (points[seg + 1] - points[seg]) * frac
    return np.rint(track).astype(np.int64)


def _still(y: float, x: float, n_frames: int) -> np.ndarray:
    return path([(y, x)], n_frames)


def _jitter(rng: np.random.Generator, amount: int = 2) -> int:
    return int(rng.integers(-amount, amount + 1))


# Scripts: (pitch, attributes, rng, n_frames) -> sprites in draw order, ball last

def _shot(p: Pitch, side: str, start: Tuple[float, float], target_y: float, n: int,
          keeper_to: Optional[float] = None, via: Optional[List[Tuple[float, float]]] = None) -> List[Sprite]:
    d = p.direction(side)
    gx = p.goal_x(side)
    keeper_x = gx - d * 2
    keeper_y = p.mid_y - p.player[0] // 2
    keeper_end = keeper_y if keeper_to is None else float(
        np.clip(keeper_to, p.goal_top, p.goal_bottom - p.player[0]))
    ball_points = (via or []) + [start, (target_y, gx)]
    shooter_at = ball_points[-2]
    return [
        Sprite('keeper', KEEPER, p.player, path([(keeper_y, keeper_x), (keeper_end, keeper_x)], n)),
        Sprite('shooter', TEAM_A, p.player, _still(shooter_at[0] - 1, shooter_at[1] - d * 3, n)),
        Sprite('ball', BALL, p.ball, path(ball_points, n)),
    ]


def _placement_y(p: Pitch, placement: str) -> float:
    return p.goal_bottom - p.ball[0] - 1 if placement == 'bottom' else p.goal_top + 1


def _shots_on_target(p, a, rng, n):
    d = p.direction(a['side'])
    start = (p.mid_y + _jitter(rng), p.w // 2 + d * p.w // 4 + _jitter(rng))
    target = _placement_y(p, a['placement'])
    return _shot(p, a['side'], start, target, n, keeper_to=target)


def _shots_off_target(p, a, rng, n):
    d = p.direction(a['side'])
    start = (p.mid_y + _jitter(rng), p.w // 2 + d * p.w // 8 + _jitter(rng))
    target = p.goal_top - p.h // 6 if a['height'] == 'over' else p.goal_bottom + p.h // 6
    return _shot(p, a['side'], start, target, n)


def _goal(p, a, rng, n):
    d = p.direction(a['side'])
    gx = p.goal_x(a['side'])
    if a['assist'] == 'cross':
        flank_y = 3 if rng.integers(2) == 0 else p.h - 5
        via = [(flank_y, gx - d * p.w // 6)]
    else:
        via = [(p.mid_y + _jitter(rng), p.w // 2)]
    start = (p.mid_y + _jitter(rng), gx - d * p.w // 8)
    return _shot(p, a['side'], start, _placement_y(p, a['placement']), n, via=via)


def _penalty(p, a, rng, n):
    d = p.direction(a['side'])
    start = (p.mid_y, p.goal_x(a['side']) - d * p.w // 10)
    target = _placement_y(p, a['placement'])
    wrong_way = p.goal_top if a['placement'] == 'bottom' else p.goal_bottom
    return _shot(p, a['side'], start, target, n, keeper_to=wrong_way)


def _direct_freekick(p, a, rng, n):
    d = p.direction(a['side'])
    gx = p.goal_x(a['side'])
    start = (p.mid_y + _jitter(rng, 3), gx - d * p.w // 4)
    wall_x = start[1] + d * p.w // 12
    wall = [Sprite(f'wall{i}', TEAM_B, p.player, _still(p.mid_y - p.player[0] * (i - 1), wall_x, n))
            for i in range(3)]
    if a['outcome'] == 'over':
        sprites = _shot(p, a['side'], start, p.goal_top - p.h // 6, n)
    else:
        sprites = _shot(p, a['side'], start, p.mid_y, n, keeper_to=p.mid_y)
    return wall + sprites


def _indirect_freekick(p, a, rng, n):
    d = p.direction(a['side'])
    start = (p.mid_y + _jitter(rng), p.goal_x(a['side']) - d * p.w // 3)
    end = (start[0] + p.h // 6, start[1])
    return [
        Sprite('taker', TEAM_A, p.player, _still(start[0] - 1, start[1] - d * 3, n)),
        Sprite('receiver', TEAM_A, p.player, _still(end[0], end[1] + 2, n)),
        Sprite('ball', BALL, p.ball, path([start, end], n)),
    ]


def _corner(p, a, rng, n):
    d = p.direction(a['side'])
    gx = p.goal_x(a['side'])
    top = rng.integers(2) == 0
    start = (1 if top else p.h - 1 - p.ball[0], gx)
    if a['delivery'] == 'short':
        end = (start[0] + (4 if top else -4), gx - d * p.w // 10)
    else:
        end = (p.mid_y + _jitter(rng), gx - d * p.w // 10)
    return [
        Sprite('attacker', TEAM_A, p.player, _still(p.mid_y - 3, gx - d * p.w // 10, n)),
        Sprite('defender', TEAM_B, p.player, _still(p.mid_y + 3, gx - d * p.w // 12, n)),
        Sprite('ball', BALL, p.ball, path([start, end], n)),
    ]


def _substitution(p, a, rng, n):
    x0 = p.half_x(a['side']) + _jitter(rng)
    ph = p.player[0]
    return [
        Sprite('player_off', TEAM_A, p.player, path([(2, x0), (-ph, x0)], n)),
        Sprite('player_on', TEAM_A, p.player, path([(-ph, x0 + 4), (2, x0 + 4)], n)),
        Sprite('official', REFEREE, p.player, _still(0, x0 + 8, n)),
    ]


def _card(colors: List[Color]):
    def script(p, a, rng, n):
        x0 = p.half_x(a['side']) + _jitter(rng)
        y0 = p.mid_y + _jitter(rng)
        sprites = [
            Sprite('offender', TEAM_A, p.player, _still(y0, x0 + 3, n)),
            Sprite('referee', REFEREE, p.player, _still(y0, x0, n)),
        ]
        # cards appear in the second half of the clip, one after the other
        bounds = np.linspace(n // 2 if len(colors) == 1 else n // 3, n, len(colors) + 1).astype(int)
        for i, color in enumerate(colors):
            card = Sprite(f'card{i}', color, (3, 2), _still(y0 - 4, x0, n), visible=(int(bounds[i]), int(bounds[i + 1])))
            sprites.append(card)
        return sprites
    return script


def _foul(p, a, rng, n):
    xc = p.half_x(a['side']) + _jitter(rng)
    y0 = p.mid_y + _jitter(rng)
    return [
        Sprite('fouler', TEAM_A, p.player, path([(y0, xc - 10), (y0, xc - 1)], n)),
        Sprite('fouled', TEAM_B, p.player, path([(y0, xc + 10), (y0, xc + 1)], n)),
        Sprite('ball', BALL, p.ball, _still(y0 + p.player[0], xc, n)),
    ]


def _kick_off(p, a, rng, n):
    d = p.direction(a['side'])
    start = (p.mid_y - p.ball[0] // 2, p.w // 2 - p.ball[1] // 2)
    return [
        Sprite('taker', TEAM_A, p.player, _still(start[0] - p.player[0], start[1], n)),
        Sprite('receiver', TEAM_A, p.player, _still(start[0], start[1] + d * p.w // 8 + d * 2, n)),
        Sprite('ball', BALL, p.ball, path([start, (start[0], start[1] + d * p.w // 8)], n)),
    ]


def _ball_out_of_play(p, a, rng, n):
    x0 = p.half_x(a['side']) + _jitter(rng)
    if a['edge'] == 'top':
        points = [(p.h // 4, x0), (-3, x0 + _jitter(rng))]
    else:
        points = [(3 * p.h // 4, x0), (p.h + 1, x0 + _jitter(rng))]
    return [
        Sprite('chaser', TEAM_B, p.player, _still(points[0][0], x0 - 4, n)),
        Sprite('ball', BALL, p.ball, path(points, n)),
    ]


def _offside(p, a, rng, n):
    d = p.direction(a['side'])
    y0 = p.mid_y + _jitter(rng, 4)
    flag_x = p.half_x(a['side'])
    return [
        Sprite('defender', TEAM_B, p.player, _still(y0 + 4, p.goal_x(a['side']) - d * p.w // 4, n)),
        Sprite('attacker', TEAM_A, p.player,
               path([(y0, p.w // 2 + d * p.w // 8), (y0, p.goal_x(a['side']) - d * p.w // 5)], n)),
        Sprite('linesman', REFEREE, (2, 2), _still(0, flag_x + 3, n)),
        Sprite('flag', YELLOW, (2, 2), _still(0, flag_x, n), visible=(n // 2, 1 << 30)),
    ]


def _clearance(p, a, rng, n):
    d = p.direction(a['side'])
    start = (p.mid_y + _jitter(rng), p.goal_x(a['side']) - d * p.w // 12)
    if a['distance'] == 'long':
        end = (p.mid_y + _jitter(rng, 6), p.w // 2 - d * p.w // 6)
    else:
        end = (p.mid_y + _jitter(rng, 6), p.goal_x(a['side']) - d * p.w // 4)
    return [
        Sprite('defender', TEAM_B, p.player, _still(start[0] - 1, start[1] + d * 3, n)),
        Sprite('ball', BALL, p.ball, path([start, end], n)),
    ]


SCRIPTS: Dict[str, Callable[..., List[Sprite]]] = {
    'shots_on_target': _shots_on_target,
    'shots_off_target': _shots_off_target,
    'goal': _goal,
    'penalty': _penalty,
    'direct_freekick': _direct_freekick,
    'indirect_freekick': _indirect_freekick,
    'corner': _corner,
    'substitution': _substitution,
    'yellow_card': _card([YELLOW]),
    'red_card': _card([RED]),
    'yellow_red_card': _card([YELLOW, RED]),
    'foul': _foul,
    'kick_off': _kick_off,
    'ball_out_of_play': _ball_out_of_play,
    'offside': _offside,
    'clearance': _clearance,
}


def _clip_box(y: int, x: int, size: Tuple[int, int], h: int, w: int) -> Optional[Tuple[slice, slice]]:
    y0, x0 = max(y, 0), max(x, 0)
    y1, x1 = min(y + size[0], h), min(x + size[1], w)
    if y0 >= y1 or x0 >= x1:
        return None
    return slice(y0, y1), slice(x0, x1)


def render(pitch: Pitch, sprites: List[Sprite], n_frames: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw the sprites over the pitch and derive their optical flow

    Flow at frame t is the displacement track[t+1] - track[t] of the topmost
    sprite covering a pixel (u = dx, v = dy); background pixels have zero flow.
    """
    background = pitch.background()
    frames = np.repeat(background[None], n_frames, axis=0)
    flow = np.zeros((n_frames, 2, pitch.h, pitch.w), dtype=np.float32)
    for t in range(n_frames):
        for sprite in sprites:
            if not sprite.is_visible(t):
                continue
            y, x = (int(v) for v in sprite.track[t])
            box = _clip_box(y, x, sprite.size, pitch.h, pitch.w)
            if box is None:
                continue
            dy, dx = (int(v) for v in sprite.track[t + 1] - sprite.track[t])
            frames[t][box] = sprite.color
            flow[t, 0][box] = dx
            flow[t, 1][box] = dy
    return frames, flow


def gen_clip(seed: int, action: str, duration_s: float, fps: int = 2,
             height: int = 64, width: int = 128,
             grammar: Optional[CaptionGrammar] = None, clip_id: str = '') -> SyntheticClip:
    """
    Generate one synthetic clip

    Args:
        seed: drives outcome attributes and sprite jitter; same seed, same clip
        action: one of the sixteen action categories
        duration_s: clip length in seconds; frames = round(duration_s * fps)
        fps: sampling rate (2 frames per second by default)
        height, width: frame size in pixels
        grammar: caption grammar (defaults to the shipped data file)

    Returns:
        SyntheticClip with frames, exact flow, event record and caption tokens
    """
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    action = normalize_action(action)
    n_frames = max(1, int(round(duration_s * fps)))
    grammar = grammar or load_grammar()

    rng = np.random.default_rng(seed)
    attributes = grammar.sample_attributes(action, rng)
    pitch = Pitch(height, width)
    sprites = SCRIPTS[action](pitch, attributes, rng, n_frames)
    frames, flow = render(pitch, sprites, n_frames)

    caption = tokenize(grammar.render(action, attributes))
    events = SceneEvent(action=action, attributes=attributes,
                        tracks={s.name: s.track.copy() for s in sprites})
    return SyntheticClip(frames=frames, true_flow=flow, events=events, caption=caption,
                         clip_id=clip_id, seed=seed)
