"""The simulated user: zero-noise faithfulness (via an inverter written only
for tests) and calibration of the noise model."""
import itertools
import re

import numpy as np
import pytest

from fbparse.lf import Utterance
from fbparse.world import DEFAULT_WORLD_SIZES, corrupt, diff_lf, generate_example, generate_world, parse_query
from fbparse.world.feedback import (
    AFFIRMATIONS, DELETION_TEMPLATES, FEEDBACK_NESTED, FEEDBACK_PHRASES, HEAD_WORDS, INSERTION_TEMPLATES,
    KIND_TEMPLATES, KIND_WORDS, NO_NOISE, OPENERS, SUBSTITUTION_TEMPLATES, NoiseConfig, generate_feedback,
)
from fbparse.world.schema import Clause, Nested, Query

AFFIRM = {tuple(a.split()) for a in AFFIRMATIONS}


@pytest.fixture(scope="module")
def world():
    return generate_world(0, DEFAULT_WORLD_SIZES)


def golds(world, n, seed=0):
    rng = np.random.default_rng(seed)
    return [generate_example(world, rng, int(rng.integers(0, 3)))[1] for _ in range(n)]


# ---- inverter -------------------------------------------------------------

def _pattern(template):
    return [("slot", w[1]) if re.fullmatch(r"\{[RWKC]\}", w) else ("lit", w) for w in template.split()]


def match_all(pattern, words):
    """Every slot assignment under which ``pattern`` spells ``words``."""
    if not pattern:
        return [{}] if not words else []
    (kind, v), rest = pattern[0], pattern[1:]
    if kind == "lit":
        return match_all(rest, words[1:]) if words and words[0] == v else []
    out = []
    for i in range(1, len(words) + 1):
        for m in match_all(rest, words[i:]):
            out.append({v: " ".join(words[:i]), **m})
    return out


KINDS = [(k, _pattern(t)) for k, ts in (("sub", SUBSTITUTION_TEMPLATES), ("kind", KIND_TEMPLATES),
                                      ("ins", INSERTION_TEMPLATES), ("del", DELETION_TEMPLATES)) for t in ts]
PHRASES = [(p, _pattern(f.replace("{}", "{C}"))) for p, fs in FEEDBACK_PHRASES.items() for f in fs]
NESTED = [_pattern(f.replace("{}", "{C}")) for f in FEEDBACK_NESTED]
HEADS = {v: k for k, v in HEAD_WORDS.items()}
KIND_OF = {v: k for k, v in KIND_WORDS.items()}


def read_clause(text):
    """Every clause a phrase could denote."""
    out = []
    for pred, pat in PHRASES:
        for m in match_all(pat, text.split()):
            arg = m["C"]
            for npat in NESTED:
                out += [Clause(pred, Nested(n["C"])) for n in match_all(npat, arg.split()) if " " not in n["C"]]
            if " " not in arg:
                out.append(Clause(pred, arg))
    return out


def edits_of(part):
    """Every query-to-query function one feedback clause could mean."""
    fns = []
    for kind, pat in KINDS:
        for g in match_all(pat, part.split()):
            if kind == "ins":
                fns += [lambda q, c=c: Query(q.head, q.clauses + (c,)) for c in read_clause(g["C"])]
            elif kind == "del":
                fns += [lambda q, c=c: Query(q.head, tuple(x for x in q.clauses if x != c)) if c in q.clauses else None
                        for c in read_clause(g["C"])]
            elif kind == "kind":
                if g["K"] in KIND_OF and " " not in g["R"]:
                    def fn(q, k=KIND_OF[g["K"]], r=g["R"]):
                        hit = [c for c in q.clauses if c.entity_kind == k]
                        if len(hit) != 1:
                            return None
                        new = Clause(hit[0].pred, Nested(r) if isinstance(hit[0].arg, Nested) else r)
                        return Query(q.head, tuple(new if c == hit[0] else c for c in q.clauses))
                    fns.append(fn)
            else:
                r, w = g["R"], g["W"]
                if w in HEADS and r in HEADS:
                    fns.append(lambda q, h=HEADS[r], o=HEADS[w]: Query(h, q.clauses) if q.head == o else None)
                for old, new in itertools.product(read_clause(w), read_clause(r)):
                    if old.arg == new.arg:
                        fns.append(lambda q, o=old, n=new: Query(q.head, tuple(n if c == o else c for c in q.clauses))
                                   if o in q.clauses else None)
                if " " not in w and " " not in r:
                    def ent(q, w=w, r=r):
                        hit = [c for c in q.clauses if c.entity == w]
                        if len(hit) != 1:
                            return None
                        c0 = hit[0]
                        new = Clause(c0.pred, Nested(r) if isinstance(c0.arg, Nested) else r)
                        return Query(q.head, tuple(new if c == c0 else c for c in q.clauses))
                    fns.append(ent)
    return fns


def invert(predicted, feedback):
    """All parses reachable by reading the feedback as edits of ``predicted``."""
    text = " ".join(feedback.tokens)
    bodies = [text] + [text[len(o) + 1:] for o in OPENERS if o and text.startswith(o + " ")]
    results = set()
    for body in bodies:
        parts = body.split(" and ")
        options = [edits_of(p) for p in parts]
        if not all(options):
            continue
        for choice in itertools.product(*options):
            for order in itertools.permutations(choice):
                q = parse_query(predicted)
                for fn in order:
                    q = fn(q) if q is not None else None
                if q is not None:
                    try:
                        results.add(q.validate().to_lf())
                    except ValueError:
                        pass
    return results, len(parts)


# ---- tests ----------------------------------------------------------------

def test_correct_parse_zero_noise_is_affirmed(world):
    rng = np.random.default_rng(0)
    for y in golds(world, 50):
        f, n = generate_feedback(y, y, NO_NOISE, rng, world)
        assert n == 0 and f.tokens in AFFIRM


@pytest.mark.parametrize("k", [1, 2, 3])
def test_zero_noise_feedback_inverts_to_gold(world, k):
    rng = np.random.default_rng(k)
    checked = 0
    for y in golds(world, 150, seed=k):
        try:
            pred = corrupt(y, k, rng, world)
        except ValueError:
            continue
        f, n = generate_feedback(y, pred, NO_NOISE, rng, world)
        assert n == len(diff_lf(y, pred)) >= 1
        got, parts = invert(pred, f)
        assert parts == n
        assert y in got, (y.text, pred.text, " ".join(f.tokens))
        checked += 1
    assert checked > 50


def _binom_ok(hits, n, p):
    return abs(hits / n - p) <= 3 * np.sqrt(p * (1 - p) / n)


def one_predicate_golds(world, n):
    out = [y for y in golds(world, 3000, seed=9) if parse_query(y).num_predicates == 1]
    assert len(out) >= n
    return out[:n]


def test_miss_rate_calibrated(world):
    noise = NoiseConfig()
    rng = np.random.default_rng(1)
    pool = one_predicate_golds(world, 200)
    preds = [corrupt(y, 1, rng, world) for y in pool]
    n, misses = 10_000, 0
    for i in range(n):
        f, c = generate_feedback(pool[i % len(pool)], preds[i % len(pool)], noise, rng, world)
        misses += c == 0
    assert _binom_ok(misses, n, 0.01), misses


def test_spurious_rate_calibrated(world):
    noise = NoiseConfig()
    rng = np.random.default_rng(2)
    pool = golds(world, 500, seed=3)
    n = 10_000
    spurious = sum(generate_feedback(pool[i % 500], pool[i % 500], noise, rng, world)[1] > 0 for i in range(n))
    assert _binom_ok(spurious, n, 0.04), spurious


def test_miss_rate_grows_with_complexity(world):
    noise = NoiseConfig()
    rng = np.random.default_rng(4)
    by_len = {}
    for y in golds(world, 3000, seed=5):
        by_len.setdefault(min(parse_query(y).num_predicates, 3), []).append(y)
    rates = []
    for L in (1, 3):
        pool = by_len[L][:100]
        preds = [corrupt(y, 1, rng, world) for y in pool]
        n = 10_000
        misses = sum(generate_feedback(pool[i % 100], preds[i % 100], noise, rng, world)[1] == 0 for i in range(n))
        rates.append(misses / n)
    assert rates[1] > rates[0]


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(miss_error_rate=1.5)
    with pytest.raises(ValueError):
        NoiseConfig(complexity_scaling=-1)
    assert NoiseConfig(0.5, 0, 10).miss_rate(5) == 1.0


def test_feedback_is_deterministic(world):
    y = golds(world, 1)[0]
    pred = corrupt(y, 1, np.random.default_rng(0), world)
    a = generate_feedback(y, pred, NoiseConfig(), np.random.default_rng(7), world)
    b = generate_feedback(y, pred, NoiseConfig(), np.random.default_rng(7), world)
    assert a == b and isinstance(a[0], Utterance)
