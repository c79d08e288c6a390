"""Templated questions with dialog references, and parse confirmations."""
from __future__ import annotations

import numpy as np

from ..lf import LogicalForm, Mention, MentionList, Utterance
from .schema import Clause, Nested, Query, parse_query
from .world import World

EMAIL_OPENERS = ("show me emails", "find emails", "find messages", "any emails")
PERSON_OPENERS = ("who", "which people", "find people who")
ORG_TEMPLATES = ("where does {} work", "who employs {}", "which company is {} at")

# question phrasing per predicate; "{}" is the argument. One wording each keeps
# the desk-scale seed set (50 questions) learnable.
CLAUSE_PHRASES = {
    "sender": ("from {}",),
    "recipient": ("to {}",),
    "about": ("about {}",),
    "before": ("before {}",),
    "after": ("after {}",),
    "works_at": ("work at {}",),
    "sent_to": ("emailed {}",),
    "received_from": ("heard from {}",),
    "wrote_about": ("wrote about {}",),
    "employs": ("employing {}",),
}
NESTED_PHRASES = ("someone at {}", "employees of {}")

REFERENCES = {
    "person": ("them", "him", "her"),
    "organization": ("that company",),
    "time": ("that month",),
    "topic": ("that topic",),
}

# one fixed phrase per predicate: confirmations must be injective
CONFIRM_HEAD = {"email": "emails", "person": "people", "organization": "organizations"}
CONFIRM_PHRASE = {
    "sender": "sent by {}",
    "recipient": "sent to {}",
    "about": "about {}",
    "before": "before {}",
    "after": "after {}",
    "works_at": "working at {}",
    "sent_to": "who emailed {}",
    "received_from": "who heard from {}",
    "wrote_about": "who wrote about {}",
    "employs": "employing {}",
}
CONFIRM_NESTED = "someone at {}"

EMAIL_FILTER_COUNTS = ((1, 0.3), (2, 0.35), (3, 0.25), (4, 0.1))
PERSON_FILTER_COUNTS = ((1, 0.5), (2, 0.35), (3, 0.15))
HEAD_WEIGHTS = (("email", 0.6), ("person", 0.25), ("organization", 0.15))


def _choice(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _weighted(rng, pairs):
    vals, w = zip(*pairs)
    w = np.asarray(w, dtype=float)
    return vals[int(rng.choice(len(vals), p=w / w.sum()))]


def _email_query(world: World, rng, nest_prob: float) -> Query:
    e = _choice(rng, world.emails)
    options = ["sender", "about", "time"]
    if e.recipient != e.sender:
        options.append("recipient")
    n = min(_weighted(rng, EMAIL_FILTER_COUNTS), len(options))
    picked = [options[i] for i in rng.choice(len(options), size=n, replace=False)]
    clauses = []
    used_orgs = set()
    for p in picked:
        if p in ("sender", "recipient"):
            person = e.sender if p == "sender" else e.recipient
            org = world.employer[person]
            if rng.random() < nest_prob and org not in used_orgs:
                used_orgs.add(org)
                clauses.append(Clause(p, Nested(org)))
            else:
                clauses.append(Clause(p, person))
        elif p == "about":
            clauses.append(Clause("about", e.topic))
        else:
            rank = world.time_rank(e.time)
            later = world.times[rank + 1:]
            earlier = world.times[:rank]
            if later and (not earlier or rng.random() < 0.5):
                clauses.append(Clause("before", _choice(rng, later)))
            elif earlier:
                clauses.append(Clause("after", _choice(rng, earlier)))
    if not clauses:
        clauses.append(Clause("sender", e.sender))
    return Query("email", tuple(clauses))


def _person_query(world: World, rng) -> Query:
    p = _choice(rng, world.persons)
    sent = [e for e in world.emails if e.sender == p and e.recipient != p]
    got = [e for e in world.emails if e.recipient == p and e.sender != p]
    options = {"works_at": world.employer[p]}
    if sent:
        options["sent_to"] = _choice(rng, sent).recipient
        options["wrote_about"] = _choice(rng, sent).topic
    if got:
        options["received_from"] = _choice(rng, got).sender
    keys = list(options)
    n = min(_weighted(rng, PERSON_FILTER_COUNTS), len(keys))
    picked = [keys[i] for i in rng.choice(len(keys), size=n, replace=False)]
    return Query("person", tuple(Clause(k, options[k]) for k in picked))


def sample_query(world: World, rng, nest_prob: float = 0.25) -> Query:
    for _ in range(100):
        head = _weighted(rng, HEAD_WEIGHTS)
        if head == "email":
            q = _email_query(world, rng, nest_prob)
        elif head == "person":
            q = _person_query(world, rng)
        else:
            q = Query("organization", (Clause("employs", _choice(rng, world.persons)),))
        ents = q.entities()
        if len(set(ents)) == len(ents):
            return q.canonical().validate()
    raise RuntimeError("could not sample a query with distinct entities")


def _realize_clause(c: Clause, surface: dict, rng) -> str:
    """Question phrase for one clause; ``surface`` maps entities to their wording."""
    if isinstance(c.arg, Nested):
        arg = _choice(rng, NESTED_PHRASES).format(surface.get(c.arg.org, c.arg.org))
    else:
        arg = surface.get(c.arg, c.arg)
    return _choice(rng, CLAUSE_PHRASES[c.pred]).format(arg)


def realize_question(q: Query, surface: dict, rng, shuffle_prob: float = 0.0) -> str:
    clauses = list(q.clauses)
    order = rng.permutation(len(clauses)) if rng.random() < shuffle_prob else np.arange(len(clauses))
    phrases = [_realize_clause(clauses[i], surface, rng) for i in order]
    if q.head == "email":
        return " ".join([_choice(rng, EMAIL_OPENERS)] + phrases)
    if q.head == "person":
        return _choice(rng, PERSON_OPENERS) + " " + " and ".join(phrases)
    (c,) = clauses
    return _choice(rng, ORG_TEMPLATES).format(surface.get(c.arg, c.arg))


def generate_example(world: World, rng: np.random.Generator, context_size: int,
                     ref_prob: float = 0.35):
    """One (question, gold parse, dialog mentions) triple.

    A reference ("them", "that company", ...) resolves to the first mention of
    its kind; further mentions are distractors absent from the gold parse.
    """
    if context_size < 0:
        raise ValueError("context_size must be >= 0")
    q = sample_query(world, rng)
    surface: dict[str, str] = {}
    referenced: list[Mention] = []
    kinds_used = set()
    if context_size > 0:
        for c in q.clauses:
            kind = c.entity_kind
            if (len(referenced) < context_size and kind not in kinds_used
                    and rng.random() < ref_prob):
                kinds_used.add(kind)
                surface[c.entity] = _choice(rng, REFERENCES[kind])
                referenced.append(Mention(kind, (c.entity,)))
    taken = set(q.entities())
    distractors: list[Mention] = []
    kinds = ("person", "organization", "time", "topic")
    while len(referenced) + len(distractors) < context_size:
        kind = _choice(rng, kinds)
        free = [e for e in world.entities(kind) if e not in taken]
        if not free:
            if all(not [e for e in world.entities(k) if e not in taken] for k in kinds):
                break
            continue
        ent = _choice(rng, free)
        taken.add(ent)
        distractors.append(Mention(kind, (ent,)))
    # dialog order: within a kind the referenced mention is the most recent
    text = realize_question(q, surface, rng)
    return Utterance.from_text(text), q.to_lf(), MentionList(tuple(referenced + distractors))


def _confirm_clause(c: Clause) -> str:
    arg = CONFIRM_NESTED.format(c.arg.org) if isinstance(c.arg, Nested) else c.arg
    return CONFIRM_PHRASE[c.pred].format(arg)


def render_confirmation(lf: LogicalForm) -> Utterance:
    """'did you mean ...' realization of a parse, one fixed phrase per clause."""
    q = parse_query(lf).canonical()
    parts = ["did you mean", CONFIRM_HEAD[q.head]] + [_confirm_clause(c) for c in q.clauses]
    return Utterance.from_text(" ".join(parts))
