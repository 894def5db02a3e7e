from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import bleu_by_hand

from navgen.envworld import Point2D
from navgen.graphbuild import NavEdge, NavGraph, Viewpoint
from navgen.instructgen import (
    DIRECTION_TOKENS,
    MAX_TOKENS,
    MIN_TOKENS,
    TurnBands,
    bleu4,
    classify_turns,
    clipped_counts,
    corpus_bleu4,
    generate_instruction,
)
from navgen.trajsample import ObjectAnnotation, Trajectory, enumerate_r2r_paths, place_objects, path_length


def polyline_graph(points):
    vps = tuple(Viewpoint(i, Point2D(*p)) for i, p in enumerate(points))
    edges = tuple(NavEdge(i, i + 1, math.dist(points[i], points[i + 1])) for i in range(len(points) - 1))
    g = NavGraph("poly", vps, edges)
    return g, Trajectory("poly", tuple(range(len(points))), path_length(g, range(len(points))))


def turn_oracle(points, straight=30.0, around=135.0, eps=1e-7):
    """Allowed classes per turn; both neighbours are allowed within ``eps`` degrees of a band edge."""
    out = []
    for a, b, c in zip(points, points[1:], points[2:]):
        u = (b[0] - a[0], b[1] - a[1])
        v = (c[0] - b[0], c[1] - b[1])
        cosang = (u[0] * v[0] + u[1] * v[1]) / (math.hypot(*u) * math.hypot(*v))
        ang = math.degrees(math.acos(max(-1.0, min(1.0, cosang))))
        side = "left" if u[0] * v[1] - u[1] * v[0] > 0 else "right"
        allowed = set()
        for x in (ang - eps, ang, ang + eps):
            allowed.add("straight" if x <= straight else "around" if x > around else side)
        out.append(allowed)
    return out


def assert_turns(graph, node_ids, points):
    got = classify_turns(graph, node_ids)
    allowed = turn_oracle(points)
    assert len(got) == len(allowed)
    assert all(g in a for g, a in zip(got, allowed))
    return Counter(got)


def direction_tokens(rec):
    return Counter(t for t in rec.tokens if t in DIRECTION_TOKENS)


def test_straight_corridor_has_no_turn():
    g, t = polyline_graph([(0, 0), (2, 0.1), (4, 0), (6, 0.1)])
    rec = generate_instruction(g, t, seed=1)
    assert "turn" not in rec.tokens
    assert direction_tokens(rec) == Counter({"straight": 2})


def test_single_left_bend():
    # heading east, then north: counter-clockwise is a left turn
    g, t = polyline_graph([(0, 0), (2, 0), (2, 2)])
    rec = generate_instruction(g, t, seed=3)
    assert rec.tokens.count("left") == 1 and "right" not in rec.tokens


def test_around_band():
    assert classify_turns(*_poly([(0, 0), (2, 0), (0.1, 0.3)])) == ["around"]
    assert classify_turns(*_poly([(0, 0), (2, 0), (2, -2)])) == ["right"]


def _poly(points):
    g, t = polyline_graph(points)
    return g, t.node_ids


def test_seeds_change_text_not_turns():
    pts = [(0, 0), (2, 0), (2, 2), (4, 2.5), (4, 5), (1, 5)]
    g, t = polyline_graph(pts)
    a, b = generate_instruction(g, t, 1), generate_instruction(g, t, 2)
    assert a.text != b.text
    assert direction_tokens(a) == direction_tokens(b) == assert_turns(g, t.node_ids, pts)


def test_rejects_single_node():
    g, _ = polyline_graph([(0, 0), (1, 0)])
    with pytest.raises(ValueError):
        generate_instruction(g, Trajectory("poly", (0,), 0.0), 1)


def test_object_labels_in_start_and_stop():
    g, t = polyline_graph([(0, 0), (2, 0), (4, 0)])
    objs = [ObjectAnnotation(0, "piano", Point2D(0.5, 0.5), 0, 0.7, True),
            ObjectAnnotation(1, "lamp", Point2D(4.5, 0.5), 2, 0.7, True)]
    rec = generate_instruction(g, t, 1, objs)
    assert rec.tokens.index("piano") < rec.tokens.index("lamp")


def test_scene_wide_turn_multiset_and_length(scene7):
    grid, graph, _ = scene7
    objs = place_objects(grid, graph, 12, seed=1)
    for traj in enumerate_r2r_paths(graph, per_scene_cap=None)[::5]:
        rec = generate_instruction(graph, traj, 11, objs)
        pts = [tuple(graph.positions[i]) for i in traj.node_ids]
        assert direction_tokens(rec) == assert_turns(graph, traj.node_ids, pts)
        assert MIN_TOKENS <= len(rec.tokens) <= MAX_TOKENS
        assert rec.text == rec.text.lower()
        assert rec == generate_instruction(graph, traj, 11, objs)


def test_custom_bands():
    g, t = polyline_graph([(0, 0), (2, 0), (3.5, 1.5)])  # 45 degree left
    assert classify_turns(g, t.node_ids) == ["left"]
    assert classify_turns(g, t.node_ids, TurnBands(straight=50, around=135)) == ["straight"]


# ---------------------------------------------------------------- BLEU


def test_bleu_identity():
    x = "walk forward then turn left and stop".split()
    assert bleu4(x, [x]).value == 1.0


def test_bleu_no_overlap():
    assert bleu4("a b c d".split(), ["e f g h".split()], smooth=False).value == 0.0
    assert bleu4("a b c d".split(), ["e f g h".split()]).value == 0.0


def test_bleu_counting_example():
    cand = "the cat sat on the mat".split()
    ref = "the cat is on the mat".split()
    expected = (5 / 6 * 3 / 5 * 1 / 4 * 1 / 4) ** 0.25
    s = bleu4(cand, [ref])
    assert s.matches == (5, 3, 1, 0) and s.totals == (6, 5, 4, 3)
    assert abs(s.value - expected) < 1e-12
    assert abs(s.value - bleu_by_hand(cand, [ref])) < 1e-12


def test_bleu_rejects_empty():
    with pytest.raises(ValueError):
        bleu4([], [["a"]])
    with pytest.raises(ValueError):
        bleu4(["a"], [])


VOCAB = list("abcdefg")


def _random_sentence(rng, lo=1, hi=14):
    return [VOCAB[i] for i in rng.integers(0, len(VOCAB), int(rng.integers(lo, hi)))]


@pytest.mark.parametrize("smooth", [True, False])
def test_bleu_matches_hand_oracle_randomized(smooth):
    rng = np.random.default_rng(0)
    for _ in range(200):
        cand = _random_sentence(rng)
        refs = [_random_sentence(rng) for _ in range(int(rng.integers(1, 4)))]
        assert abs(bleu4(cand, refs, smooth).value - bleu_by_hand(cand, refs, smooth)) < 1e-12


def test_reference_union_monotone():
    rng = np.random.default_rng(1)
    same_r = 0
    for _ in range(100):
        cand = _random_sentence(rng, 4)
        refs = [_random_sentence(rng, 4) for _ in range(int(rng.integers(1, 3)))]
        extra = _random_sentence(rng, 4)
        m0, _ = clipped_counts(cand, refs)
        m1, _ = clipped_counts(cand, refs + [extra])
        assert all(b >= a for a, b in zip(m0, m1))
        s0, s1 = bleu4(cand, refs, smooth=False), bleu4(cand, refs + [extra], smooth=False)
        assert all(b >= a for a, b in zip(s0.precisions, s1.precisions))
        if s0.reference_length == s1.reference_length:
            same_r += 1
            assert s1.value >= s0.value
    assert same_r > 50


def test_reference_union_can_lower_brevity_penalty():
    # a longer extra reference becomes the closest length, so BP falls below 1
    cand = "a b c d e".split()
    s0 = bleu4(cand, ["a b c".split()], smooth=False)
    s1 = bleu4(cand, ["a b c".split(), "x y z w v u".split()], smooth=False)
    assert s0.matches == s1.matches
    assert s1.brevity_penalty < s0.brevity_penalty == 1.0


def test_corpus_bleu_sums_counts():
    cands = ["the cat sat on the mat".split(), "a b c d".split()]
    refs = [["the cat is on the mat".split()], ["a b c d".split()]]
    s = corpus_bleu4(cands, refs)
    assert s.matches == (9, 6, 3, 1) and s.totals == (10, 8, 6, 4)
    assert s.value == pytest.approx((0.9 * 0.75 * 0.5 * 0.25) ** 0.25, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(VOCAB), min_size=4, max_size=30))
def test_bleu_self_is_one(tokens):
    assert bleu4(tokens, [tokens]).value == pytest.approx(1.0, abs=1e-12)
