from collections import Counter, deque

import numpy as np
import pytest

from fbparse.lf import LogicalForm
from fbparse.world import (
    DEFAULT_WORLD_SIZES, CorruptionError, CorpusError, CorruptionPolicy, WorldError, build_corpus,
    corrupt, count_predicates, diff_lf, generate_example, generate_questions, generate_world, parse_query, render_confirmation,
)
from fbparse.world.edits import ENTITY_SUB, apply_corrections, edit_sites
from fbparse.world.schema import SWAPS, Query


@pytest.fixture(scope="module")
def world():
    return generate_world(0, DEFAULT_WORLD_SIZES)


def test_world_is_deterministic():
    a = generate_world(7, DEFAULT_WORLD_SIZES)
    b = generate_world(7, DEFAULT_WORLD_SIZES)
    assert a == b
    assert generate_world(8, DEFAULT_WORLD_SIZES) != a


def test_minimal_world():
    w = generate_world(0, {"person": 1, "organization": 1, "time": 1, "topic": 1})
    w.check()
    assert len(w.persons) == 1 and len(w.emails) >= 1


def test_world_rejects_bad_sizes():
    with pytest.raises(WorldError):
        generate_world(0, {"person": 0, "organization": 1, "time": 1, "topic": 1})


def test_world_facts_reference_known_entities(world):
    for e in world.emails:
        assert e.sender in world.persons and e.recipient in world.persons
    assert set(world.employer.values()) == set(world.organizations)
    assert {e.topic for e in world.emails} == set(world.topics)
    assert {e.time for e in world.emails} == set(world.times)


def test_full_scale_question_count_is_reachable(world):
    qs = generate_questions(world, 3556, np.random.default_rng(0))
    assert len({q.key for q in qs}) == 3556


def test_example_without_context_has_no_mentions(world):
    rng = np.random.default_rng(1)
    for _ in range(50):
        u, y, m = generate_example(world, rng, 0)
        assert len(m) == 0
        assert not {"them", "him", "her", "that"} & set(u.tokens)


def test_reference_resolves_to_a_mention(world):
    rng = np.random.default_rng(2)
    seen = 0
    for _ in range(400):
        u, y, m = generate_example(world, rng, 3)
        if {"him", "her", "them"} & set(u.tokens):
            seen += 1
            person = m.of_kind("person")[0].tokens[0]
            assert person in y.tokens
            assert person not in u.tokens
    assert seen > 10


def test_mention_kinds_and_distractors(world):
    rng = np.random.default_rng(3)
    for _ in range(200):
        u, y, m = generate_example(world, rng, 3)
        assert len(m) <= 3
        for mention in m:
            assert mention.kind in ("person", "organization", "time", "topic")


def test_predicate_count_histogram_spans_one_to_six(world):
    rng = np.random.default_rng(4)
    hist = Counter(count_predicates(generate_example(world, rng, 2)[1]) for _ in range(10000))
    assert set(range(1, 7)) <= set(hist)


def test_corrupt_zero_is_identity(world):
    rng = np.random.default_rng(0)
    u, y, m = generate_example(world, rng, 1)
    assert corrupt(y, 0, rng, world) is y


def test_corrupt_infeasible_raises(world):
    y = LogicalForm.from_text("( organization ( employs alice ) )")
    with pytest.raises(CorruptionError):
        corrupt(y, 2, np.random.default_rng(0), world)


def test_diff_of_identical_is_empty(world):
    y = LogicalForm.from_text("( email ( sender alice ) ( about budget ) )")
    assert diff_lf(y, y) == []


def test_single_entity_swap_is_one_entity_substitution():
    y = LogicalForm.from_text("( email ( sender alice ) ( about budget ) )")
    p = LogicalForm.from_text("( email ( sender bob ) ( about budget ) )")
    d = diff_lf(y, p)
    assert len(d) == 1 and d[0].kind == ENTITY_SUB
    assert d[0].wrong == ("bob",) and d[0].right == ("alice",)
    assert p.tokens[d[0].position] == "bob"


# brute-force minimal edit search: breadth-first over clause multisets


def _state(q: Query):
    # nested arguments are tagged with a leading "@"
    return (q.head, tuple(sorted((c.pred, c.arg if isinstance(c.arg, str) else "@" + c.arg.org)
                                 for c in q.clauses)))


def _moves(state, gold_items):
    head, items = state
    gold_args = {a for _, a in gold_items}
    for i, (pred, arg) in enumerate(items):
        rest = items[:i] + items[i + 1:]
        yield (head, rest)  # deletion
        for a in gold_args:  # entity substitution
            if a != arg and a.startswith("@") == arg.startswith("@"):
                yield (head, tuple(sorted(rest + ((pred, a),))))
        if pred in SWAPS:  # predicate substitution
            yield (head, tuple(sorted(rest + ((SWAPS[pred], arg),))))
    for g in gold_items:  # insertion
        yield (head, tuple(sorted(items + (g,))))


def brute_force_distance(gold: LogicalForm, predicted: LogicalForm, limit: int = 4) -> int:
    target = _state(parse_query(gold))
    start = _state(parse_query(predicted))
    frontier = deque([(start, 0)])
    seen = {start}
    while frontier:
        s, d = frontier.popleft()
        if s == target:
            return d
        if d == limit:
            continue
        for nxt in _moves(s, target[1]):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, d + 1))
    return limit + 1


@pytest.mark.parametrize("k", [1, 2, 3])
def test_corrupt_distance_matches_brute_force(world, k):
    rng = np.random.default_rng(10 + k)
    done = 0
    while done < 40:
        u, y, m = generate_example(world, rng, 2)
        if k > edit_sites(parse_query(y).canonical()):
            continue
        y_hat = corrupt(y, k, rng, world, m)
        parse_query(y_hat)  # well-formed
        assert y_hat != y
        assert len(diff_lf(y, y_hat)) == k
        assert brute_force_distance(y, y_hat) == k
        assert apply_corrections(y_hat, diff_lf(y, y_hat)) == y
        done += 1


def test_corruption_histogram_dominated_by_one(world):
    rng = np.random.default_rng(5)
    policy = CorruptionPolicy()
    ks = Counter()
    for _ in range(2000):
        u, y, m = generate_example(world, rng, 2)
        ks[len(diff_lf(y, corrupt(y, policy.sample_k(y, rng), rng, world, m)))] += 1
    assert ks[1] > ks[2] > ks[3] > 0
    assert ks[1] > sum(ks.values()) / 2


def test_confirmation_is_injective_and_local(world):
    rng = np.random.default_rng(6)
    seen = {}
    for _ in range(2000):
        u, y, m = generate_example(world, rng, 1)
        text = render_confirmation(y).text
        if text in seen:
            assert seen[text] == y
        seen[text] = y
    y = LogicalForm.from_text("( email ( sender alice ) ( before march ) )")
    z = LogicalForm.from_text("( email ( sender alice ) ( after march ) )")
    a, b = render_confirmation(y).tokens, render_confirmation(z).tokens
    assert a[0] == "did" and "march" in a
    assert [i for i in range(len(a)) if a[i] != b[i]] == [a.index("before")]


def test_corpus_partitions_and_invariants(world):
    c = build_corpus(world, {"seed_labeled": 50, "unlabeled": 100, "test": 200},
                     rng=np.random.default_rng(0))
    assert len(c.seed) == 50 and len(c.test) == 200
    keys = lambda rs: {(r.utterance.tokens, r.mentions.serialize()) for r in rs}
    assert not keys(c.seed) & keys(c.test)
    assert not keys(c.seed) & keys(c.unlabeled)
    assert not keys(c.unlabeled) & keys(c.test)
    assert len(keys(c.unlabeled)) == 100
    for r in c.seed + c.test:
        assert r.gold_lf is not None and r.predicted_lf is None
    per_q = Counter(r.record_id.split(".")[0] for r in c.unlabeled)
    assert set(per_q.values()) <= {1, 2, 3}
    for r in c.unlabeled:
        assert r.predicted_lf != r.gold_lf
        assert r.feedback is not None


def test_feedback_per_question_near_target_average(world):
    c = build_corpus(world, {"seed_labeled": 1, "unlabeled": 1700, "test": 1},
                     rng=np.random.default_rng(1))
    assert abs(c.stats["feedback_per_question"] - 1.9) < 0.05


def test_full_scale_counts(world):
    c = build_corpus(world, {"seed_labeled": 300, "unlabeled": 1700, "test": 1285},
                     rng=np.random.default_rng(2))
    assert (len(c.seed), len(c.test)) == (300, 1285)
    assert c.stats["counts"]["unlabeled_questions"] == 1700


def test_corpus_infeasible_counts_raise():
    tiny = generate_world(0, {"person": 1, "organization": 1, "time": 1, "topic": 1})
    with pytest.raises(CorpusError):
        build_corpus(tiny, {"seed_labeled": 100, "unlabeled": 100, "test": 100},
                     rng=np.random.default_rng(0))


def test_corpus_is_deterministic(world, tmp_path):
    counts = {"seed_labeled": 5, "unlabeled": 10, "test": 5}
    a = build_corpus(world, counts, rng=np.random.default_rng(9)).write(tmp_path / "a")
    b = build_corpus(world, counts, rng=np.random.default_rng(9)).write(tmp_path / "b")
    for split in ("seed", "unlabeled", "test", "stats"):
        assert open(a[split], "rb").read() == open(b[split], "rb").read()
