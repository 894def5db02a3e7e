"""Instruction generation (template speaker) and BLEU-4 scoring."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graphbuild import NavGraph
from .rng import make_rng
from .trajsample import OBJECT_MAX_DIST, ObjectAnnotation, Trajectory

DIRECTION_TOKENS = ("left", "right", "around", "straight")
MIN_TOKENS = 8
MAX_TOKENS = 60


@dataclass(frozen=True)
class TurnBands:
    """Heading-change bands in degrees: straight <= ``straight``, around > ``around``."""

    straight: float = 30.0
    around: float = 135.0


@dataclass(frozen=True)
class InstructionRecord:
    tokens: tuple[str, ...]
    speaker_tag: str
    scene_id: str
    node_ids: tuple[int, ...]

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def classify_turns(graph: NavGraph, node_ids: Sequence[int], bands: TurnBands = TurnBands()) -> list[str]:
    """One of left / right / around / straight per intermediate node.

    Bearings are measured counter-clockwise in the world frame, so a positive
    heading change is a left turn.
    """
    pos = graph.positions[list(node_ids)]
    d = np.diff(pos, axis=0)
    a, b = d[:-1], d[1:]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]
    out = []
    for delta in np.degrees(np.arctan2(cross, dot)):
        if abs(delta) <= bands.straight:
            out.append("straight")
        elif abs(delta) > bands.around:
            out.append("around")
        else:
            out.append("left" if delta > 0 else "right")
    return out


_TURN = {
    "left": ("turn left", "take a left", "make a left", "bear left"),
    "right": ("turn right", "take a right", "make a right", "bear right"),
    "around": ("turn around", "spin around", "head back around"),
    "straight": ("go straight", "continue straight", "keep straight", "carry on straight"),
}
_MOVE = ("walk forward", "go ahead", "move forward", "head forward", "walk on")
_START_OBJ = ("start near the {}", "begin by the {}", "starting next to the {}")
_START = ("start here", "begin here", "from where you stand")
_STOP_OBJ = ("stop next to the {}", "wait by the {}", "stop near the {}")
_STOP = ("and stop", "stop there", "wait there")
_NUM = (
    "zero one two three four five six seven eight nine ten eleven twelve thirteen "
    "fourteen fifteen sixteen seventeen eighteen nineteen twenty"
).split()


def _meters(x: float) -> str:
    n = max(1, int(round(x)))
    word = _NUM[n] if n < len(_NUM) else str(n)
    return f"about {word} meter" if n == 1 else f"about {word} meters"


def _nearest_object(graph, node, objects, max_dist):
    best = None
    p = graph.positions[node]
    for o in objects:
        d = math.hypot(o.position.x - p[0], o.position.y - p[1])
        if d <= max_dist and (best is None or (d, o.object_id) < best[0]):
            best = ((d, o.object_id), o)
    return None if best is None else best[1]


class TemplateSpeaker:
    """Deterministic rule-based speaker: heading changes become turn clauses."""

    tag = "template-v1"

    def __init__(self, bands: TurnBands = TurnBands(), object_radius: float = OBJECT_MAX_DIST):
        self.bands = bands
        self.object_radius = object_radius

    def __call__(self, graph, trajectory, seed, objects=()):
        nodes = trajectory.node_ids
        if len(nodes) < 2:
            raise ValueError("instruction needs a trajectory of at least 2 nodes")
        rng = make_rng(seed, "speaker", trajectory.scene_id, *nodes)
        pick = lambda options: options[int(rng.integers(len(options)))]  # noqa: E731

        turns = classify_turns(graph, nodes, self.bands)
        lengths = [graph.edge_length(a, b) for a, b in zip(nodes[:-1], nodes[1:])]

        start_obj = _nearest_object(graph, nodes[0], objects, self.object_radius)
        start = pick(_START_OBJ).format(start_obj.label) if start_obj else pick(_START)
        target = None
        if trajectory.target_object is not None:
            target = next((o for o in objects if o.object_id == trajectory.target_object), None)
        if target is None:
            target = _nearest_object(graph, nodes[-1], objects, self.object_radius)
        stop = pick(_STOP_OBJ).format(target.label) if target else pick(_STOP)
        first = f"{pick(_MOVE)} {_meters(lengths[0])}"
        turn_words = [pick(_TURN[t]) for t in turns]
        moves = [pick(_MOVE) for _ in turns]

        variants = (
            [f"then {t} and {m} {_meters(ln)}" for t, m, ln in zip(turn_words, moves, lengths[1:])],
            [f"then {t} and {m}" for t, m in zip(turn_words, moves)],
            [f"then {t}" for t in turn_words],
        )
        for steps in variants:
            tokens = " ".join([start, first, *steps, stop]).split()
            if len(tokens) <= MAX_TOKENS:
                break
        if len(tokens) > MAX_TOKENS:
            raise ValueError(f"trajectory too long for a {MAX_TOKENS}-token instruction")
        return InstructionRecord(tuple(tokens), self.tag, trajectory.scene_id, tuple(nodes))


SPEAKERS = {TemplateSpeaker.tag: TemplateSpeaker}


def generate_instruction(
    graph: NavGraph,
    trajectory: Trajectory,
    seed: int,
    objects: Sequence[ObjectAnnotation] = (),
    speaker: str = TemplateSpeaker.tag,
) -> InstructionRecord:
    return SPEAKERS[speaker]()(graph, trajectory, seed, objects)


# ---------------------------------------------------------------- BLEU


@dataclass(frozen=True)
class BleuScore:
    value: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    matches: tuple[int, int, int, int]
    totals: tuple[int, int, int, int]
    candidate_length: int
    reference_length: int


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check(candidate, references):
    if not candidate:
        raise ValueError("empty candidate")
    if not references or any(len(r) == 0 for r in references):
        raise ValueError("need at least one non-empty reference")


def clipped_counts(candidate: Sequence[str], references: Sequence[Sequence[str]]):
    """``(matches, totals)`` per order 1..4, clipped by the per-reference maximum."""
    matches, totals = [], []
    for n in range(1, 5):
        cand = _ngrams(candidate, n)
        ceiling: Counter = Counter()
        for ref in references:
            ceiling |= _ngrams(ref, n)
        matches.append(sum(min(c, ceiling[g]) for g, c in cand.items()))
        totals.append(max(0, len(candidate) - n + 1))
    return matches, totals


def _closest_ref_len(c, references):
    return min((abs(len(r) - c), len(r)) for r in references)[1]


def _score(matches, totals, c, r, smooth):
    precisions = []
    for n, (m, t) in enumerate(zip(matches, totals), start=1):
        if m == 0 and n > 1 and smooth:
            precisions.append(1.0 / (t + 1))
        else:
            precisions.append(m / t if t else 0.0)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    if min(precisions) <= 0.0:
        value = 0.0
    else:
        value = bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)
    return BleuScore(value, tuple(precisions), bp, tuple(matches), tuple(totals), c, r)


def bleu4(candidate: Sequence[str], references: Sequence[Sequence[str]], smooth: bool = True) -> BleuScore:
    """BLEU-4 of one tokenized candidate against its references.

    Higher-order precisions with zero matches are smoothed to
    ``1 / (total + 1)`` (add-one); a zero unigram precision always scores 0.
    """
    _check(candidate, references)
    matches, totals = clipped_counts(candidate, references)
    c = len(candidate)
    return _score(matches, totals, c, _closest_ref_len(c, references), smooth)


def corpus_bleu4(candidates, references, smooth: bool = True) -> BleuScore:
    """Corpus BLEU-4: counts and lengths summed over sentence pairs before scoring."""
    if len(candidates) != len(references) or not candidates:
        raise ValueError("candidates and references must be non-empty and aligned")
    matches, totals = [0] * 4, [0] * 4
    c = r = 0
    for cand, refs in zip(candidates, references):
        _check(cand, refs)
        m, t = clipped_counts(cand, refs)
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        c += len(cand)
        r += _closest_ref_len(len(cand), refs)
    return _score(matches, totals, c, r, smooth)
