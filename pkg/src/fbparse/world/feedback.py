"""Templated user feedback on a predicted parse, with a false-positive /
false-negative noise model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..lf import LogicalForm, Utterance
from .edits import (
    DELETION, ENTITY_SUB, INSERTION, PREDICATE_SUB, Correction, CorruptionError,
    clause_from_tokens, corrupt, diff_lf,
)
from .schema import Clause, Nested, parse_query
from .world import KIND_POOLS

# feedback-side wording per predicate; every phrase maps to one predicate
FEEDBACK_PHRASES = {
    "sender": ("from {}", "sent by {}"),
    "recipient": ("to {}", "sent to {}"),
    "about": ("about {}", "regarding {}"),
    "before": ("before {}", "earlier than {}"),
    "after": ("after {}", "later than {}"),
    "works_at": ("working at {}", "employed by {}"),
    "sent_to": ("who emailed {}", "who wrote to {}"),
    "received_from": ("who heard from {}", "who got mail from {}"),
    "wrote_about": ("who wrote about {}", "who discussed {}"),
    "employs": ("employing {}", "that employs {}"),
}
FEEDBACK_NESTED = ("someone at {}", "people at {}")
KIND_WORDS = {"person": "person", "organization": "company", "time": "month", "topic": "topic"}
HEAD_WORDS = {"email": "emails", "person": "people", "organization": "companies"}

# {R} right, {W} wrong, {K} kind word (only when the kind is unique in the parse)
SUBSTITUTION_TEMPLATES = (
    "i meant {R} , not {W}",
    "not {W} , {R}",
    "it should be {R} instead of {W}",
    "i said {R} not {W}",
    "replace {W} with {R}",
    "{R} rather than {W}",
    "change {W} to {R}",
    "it is {R} not {W}",
)
KIND_TEMPLATES = (
    "you got the {K} wrong , it should be {R}",
    "wrong {K} , i meant {R}",
    "the {K} is {R}",
    "i asked about a different {K} , {R}",
)
# {C} is a clause phrase
INSERTION_TEMPLATES = (
    "you forgot {C}",
    "also {C}",
    "add {C}",
    "you left out {C}",
    "it should also be {C}",
    "i also wanted {C}",
    "only those {C}",
    "missing {C}",
    "plus {C}",
)
DELETION_TEMPLATES = (
    "drop {C}",
    "remove {C}",
    "without {C}",
    "i did not say {C}",
    "not necessarily {C}",
    "forget {C}",
    "ignore {C}",
    "i never asked for {C}",
    "no need for {C}",
)
OPENERS = ("", "no ,", "that's wrong ,", "nope ,", "wrong ,")
AFFIRMATIONS = (
    "that's right", "that's correct", "yes", "correct", "yes , exactly", "perfect",
    "looks good", "great , thanks",
)
JOINER = " and "


@dataclass(frozen=True)
class NoiseConfig:
    miss_error_rate: float = 0.01
    spurious_correction_rate: float = 0.04
    complexity_scaling: float = 0.5

    def __post_init__(self):
        for name in ("miss_error_rate", "spurious_correction_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.complexity_scaling < 0:
            raise ValueError("complexity_scaling must be non-negative")

    def miss_rate(self, num_predicates: int) -> float:
        r = self.miss_error_rate * (1.0 + self.complexity_scaling * (num_predicates - 1))
        return min(1.0, max(0.0, r))


NO_NOISE = NoiseConfig(0.0, 0.0, 0.0)


class _PoolWorld:
    """Stand-in entity source when no world is supplied."""

    def entities(self, kind):
        return tuple(KIND_POOLS[kind])


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def clause_phrase(c: Clause, rng) -> str:
    arg = _pick(rng, FEEDBACK_NESTED).format(c.arg.org) if isinstance(c.arg, Nested) else c.arg
    return _pick(rng, FEEDBACK_PHRASES[c.pred]).format(arg)


def realize_correction(corr: Correction, predicted: LogicalForm, rng) -> str:
    """One templated clause of feedback for a single correction."""
    pq = parse_query(predicted)
    if corr.kind == INSERTION:
        return _pick(rng, INSERTION_TEMPLATES).format(C=clause_phrase(clause_from_tokens(corr.right), rng))
    if corr.kind == DELETION:
        return _pick(rng, DELETION_TEMPLATES).format(C=clause_phrase(clause_from_tokens(corr.wrong), rng))
    if corr.kind == PREDICATE_SUB:
        if corr.position == 1:
            return _pick(rng, SUBSTITUTION_TEMPLATES).format(
                R=HEAD_WORDS[corr.right[0]], W=HEAD_WORDS[corr.wrong[0]])
        old = next(c for c in pq.clauses if c.pred == corr.wrong[0])
        new = Clause(corr.right[0], old.arg)
        return _pick(rng, SUBSTITUTION_TEMPLATES).format(
            R=clause_phrase(new, rng), W=clause_phrase(old, rng))
    # entity substitution
    wrong = corr.wrong[0]
    clause = next(c for c in pq.clauses if c.entity == wrong)
    kind = clause.entity_kind
    unique = sum(1 for c in pq.clauses if c.entity_kind == kind) == 1
    templates = SUBSTITUTION_TEMPLATES + (KIND_TEMPLATES if unique else ())
    return _pick(rng, templates).format(R=corr.right[0], W=wrong, K=KIND_WORDS[kind])


def realize_feedback(corrections, predicted: LogicalForm, rng) -> Utterance:
    order = rng.permutation(len(corrections))
    parts = [realize_correction(corrections[i], predicted, rng) for i in order]
    text = JOINER.join(parts)
    opener = _pick(rng, OPENERS)
    return Utterance.from_text(f"{opener} {text}" if opener else text)


def affirmation(rng) -> Utterance:
    return Utterance.from_text(_pick(rng, AFFIRMATIONS))


def generate_feedback(gold: LogicalForm, predicted: LogicalForm, noise: NoiseConfig,
                      rng: np.random.Generator, world=None):
    """Simulated user reply to ``predicted`` when the intended parse is ``gold``.

    Returns (feedback utterance, number of corrections it expresses).
    """
    if gold == predicted:
        if rng.random() < noise.spurious_correction_rate:
            # correct a parse that was already right
            try:
                fake = corrupt(gold, 1, rng, world or _PoolWorld())
            except CorruptionError:
                return affirmation(rng), 0
            return realize_feedback(diff_lf(fake, predicted), predicted, rng), 1
        return affirmation(rng), 0
    diff = diff_lf(gold, predicted)
    if rng.random() < noise.miss_rate(parse_query(gold).num_predicates):
        return affirmation(rng), 0
    return realize_feedback(diff, predicted, rng), len(diff)
