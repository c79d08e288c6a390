"""Atomic edits between parses: the legacy-parser corruption channel and diffs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..lf import LogicalForm, MentionList
from .schema import (
    EXCLUSIVE, PREDICATES, SWAPS, Clause, Nested, Query, StructureError,
    parse_query,
)

ENTITY_SUB = "entity-substitution"
PREDICATE_SUB = "predicate-substitution"
INSERTION = "insertion"
DELETION = "deletion"
CORRECTION_KINDS = (ENTITY_SUB, PREDICATE_SUB, INSERTION, DELETION)


class CorruptionError(ValueError):
    pass


@dataclass(frozen=True)
class Correction:
    """One fix turning the predicted parse toward the gold parse.

    ``position`` indexes the predicted parse's tokens (for insertions: the
    head token the clause attaches to).
    """

    kind: str
    position: int
    wrong: tuple[str, ...]
    right: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in CORRECTION_KINDS:
            raise ValueError(f"unknown correction kind {self.kind!r}")


def clause_from_tokens(tokens: Sequence[str]) -> Clause:
    toks = list(tokens)
    if len(toks) == 4:
        return Clause(toks[1], toks[2])
    if len(toks) == 7 and toks[2] == "(":
        return Clause(toks[1], Nested(toks[4]))
    raise StructureError(f"not a clause: {' '.join(toks)!r}")


def _clause_positions(query: Query) -> list[int]:
    """Token offset of each clause's opening bracket in the canonical form."""
    pos = 2
    out = []
    for c in query.clauses:
        out.append(pos)
        pos += len(c.tokens())
    return out


_BIG = 1e6


def _pair_cost(g: Clause, p: Clause) -> float:
    if isinstance(g.arg, Nested) != isinstance(p.arg, Nested):
        return _BIG
    arg = 0.0 if g.arg == p.arg else 1.0
    if g.pred == p.pred:
        return arg
    if SWAPS.get(p.pred) == g.pred:
        return 1.0 + arg
    return _BIG


def diff_lf(gold: LogicalForm, predicted: LogicalForm) -> list[Correction]:
    """Minimal edit script under the four correction kinds."""
    gq = parse_query(gold).canonical()
    pq = parse_query(predicted).canonical()
    out: list[Correction] = []
    if gq.head != pq.head:
        out.append(Correction(PREDICATE_SUB, 1, (pq.head,), (gq.head,)))
        pos = _clause_positions(pq)
        out += [Correction(DELETION, pos[j], c.tokens(), ()) for j, c in enumerate(pq.clauses)]
        out += [Correction(INSERTION, 1, (), c.tokens()) for c in gq.clauses]
        return out
    G, Pn = len(gq.clauses), len(pq.clauses)
    cost = np.full((G + Pn, Pn + G), _BIG)
    for i, g in enumerate(gq.clauses):
        for j, p in enumerate(pq.clauses):
            cost[i, j] = _pair_cost(g, p)
        cost[i, Pn + i] = 1.0  # gold clause missing from the prediction
    for j in range(Pn):
        cost[G + j, j] = 1.0  # spurious predicted clause
    cost[G:, Pn:] = 0.0
    rows, cols = linear_sum_assignment(cost)
    positions = _clause_positions(pq)
    for i, j in zip(rows, cols):
        if i < G and j < Pn:
            g, p = gq.clauses[i], pq.clauses[j]
            at = positions[j]
            if g.pred != p.pred:
                out.append(Correction(PREDICATE_SUB, at + 1, (p.pred,), (g.pred,)))
            if g.arg != p.arg:
                off = at + (4 if isinstance(p.arg, Nested) else 2)
                out.append(Correction(ENTITY_SUB, off, (p.entity,), (g.entity,)))
        elif i < G:
            out.append(Correction(INSERTION, 1, (), gq.clauses[i].tokens()))
        elif j < Pn:
            out.append(Correction(DELETION, positions[j], pq.clauses[j].tokens(), ()))
    out.sort(key=lambda c: (c.position, CORRECTION_KINDS.index(c.kind), c.right))
    return out


def _free_entity(kind: str, world, taken: set, rng, mentions: Optional[MentionList],
                 mention_bias: float) -> Optional[str]:
    if mentions is not None and rng.random() < mention_bias:
        near = [m.tokens[0] for m in mentions.of_kind(kind) if m.tokens[0] not in taken]
        if near:
            return near[int(rng.integers(len(near)))]
    pool = [e for e in world.entities(kind) if e not in taken]
    if not pool:
        return None
    return pool[int(rng.integers(len(pool)))]


def edit_sites(query: Query) -> int:
    """Upper bound on simultaneous non-interacting edits for a query."""
    absent = [p for p, (h, _) in PREDICATES.items() if h == query.head and p not in query.preds
              and EXCLUSIVE.get(p) not in query.preds]
    return len(query.clauses) + len(absent)


def _try_corrupt(gold: Query, k: int, rng, world, mentions, mention_bias) -> Optional[Query]:
    clauses = list(gold.clauses)
    taken = set(gold.entities())
    absent = [p for p, (h, _) in PREDICATES.items() if h == gold.head and p not in gold.preds
              and EXCLUSIVE.get(p) not in gold.preds]
    sites = [("clause", i) for i in range(len(clauses))] + [("absent", p) for p in absent]
    if k > len(sites):
        return None
    chosen = [sites[i] for i in rng.choice(len(sites), size=k, replace=False)]
    deleted = set()
    for site, ref in chosen:
        preds = {c.pred for j, c in enumerate(clauses) if j not in deleted}
        if site == "absent":
            if ref in preds or EXCLUSIVE.get(ref) in preds:
                return None
            kind = PREDICATES[ref][1]
            ent = _free_entity(kind, world, taken, rng, mentions, mention_bias)
            if ent is None:
                return None
            taken.add(ent)
            clauses.append(Clause(ref, ent))
            continue
        c = clauses[ref]
        options = ["entity"]
        swap = SWAPS.get(c.pred)
        if swap and swap not in preds and EXCLUSIVE.get(swap, None) not in preds - {c.pred}:
            options.append("predicate")
        remaining = len(clauses) - len(deleted)
        if remaining >= 2:
            options.append("delete")
        move = options[int(rng.integers(len(options)))]
        if move == "entity":
            ent = _free_entity(c.entity_kind, world, taken, rng, mentions, mention_bias)
            if ent is None:
                return None
            taken.add(ent)
            clauses[ref] = Clause(c.pred, Nested(ent) if isinstance(c.arg, Nested) else ent)
        elif move == "predicate":
            clauses[ref] = Clause(swap, c.arg)
        else:
            deleted.add(ref)
    kept = tuple(c for j, c in enumerate(clauses) if j not in deleted)
    try:
        return Query(gold.head, kept).canonical().validate()
    except StructureError:
        return None


def corrupt(y: LogicalForm, k: int, rng: np.random.Generator, world,
            mentions: Optional[MentionList] = None, mention_bias: float = 0.5,
            max_tries: int = 200) -> LogicalForm:
    """A well-formed parse exactly ``k`` atomic edits away from ``y``.

    Substituted entities prefer same-kind dialog mentions (with probability
    ``mention_bias``), mimicking a parser that resolves a reference wrongly.
    """
    if k < 0:
        raise CorruptionError("k must be non-negative")
    if k == 0:
        return y
    gold = parse_query(y).canonical()
    if k > edit_sites(gold):
        raise CorruptionError(f"{k} edits exceed the {edit_sites(gold)} feasible for {y.text!r}")
    for _ in range(max_tries):
        q = _try_corrupt(gold, k, rng, world, mentions, mention_bias)
        if q is None:
            continue
        out = q.to_lf()
        if len(diff_lf(y, out)) == k:
            return out
    raise CorruptionError(f"could not place {k} edits in {y.text!r}")


def apply_corrections(predicted: LogicalForm, corrections: Sequence[Correction]) -> LogicalForm:
    """Replay a diff on the predicted parse (inverse of ``diff_lf``)."""
    q = parse_query(predicted).canonical()
    head = q.head
    clauses = list(q.clauses)
    positions = _clause_positions(q)
    by_pos = {p: i for i, p in enumerate(positions)}
    drop = set()
    added = []
    for c in corrections:
        if c.kind == PREDICATE_SUB and c.position == 1:
            head = c.right[0]
        elif c.kind == PREDICATE_SUB:
            i = by_pos[c.position - 1]
            clauses[i] = Clause(c.right[0], clauses[i].arg)
        elif c.kind == ENTITY_SUB:
            i = max(j for j, p in enumerate(positions) if p < c.position)
            cl = clauses[i]
            arg = Nested(c.right[0]) if isinstance(cl.arg, Nested) else c.right[0]
            clauses[i] = Clause(cl.pred, arg)
        elif c.kind == DELETION:
            drop.add(by_pos[c.position])
        else:
            added.append(clause_from_tokens(c.right))
    kept = [c for i, c in enumerate(clauses) if i not in drop] + added
    return Query(head, tuple(kept)).canonical().to_lf()
