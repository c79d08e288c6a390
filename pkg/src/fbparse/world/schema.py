"""Predicate inventory and the structured view of a logical form.

Every logical form in the synthetic domain has the shape

    ( HEAD ( PRED ARG ) ( PRED ARG ) ... )

with clauses in canonical predicate order and at most one clause per
predicate. ARG is an entity token or, for person-typed email filters, the
nested constraint ``( works_at ORG )``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from ..lf import CLOSE, OPEN, LogicalForm

HEADS = ("email", "person", "organization")

# predicate -> (head it attaches to, argument kind)
PREDICATES: dict[str, tuple[str, str]] = {
    "sender": ("email", "person"),
    "recipient": ("email", "person"),
    "about": ("email", "topic"),
    "before": ("email", "time"),
    "after": ("email", "time"),
    "works_at": ("person", "organization"),
    "sent_to": ("person", "person"),
    "received_from": ("person", "person"),
    "wrote_about": ("person", "topic"),
    "employs": ("organization", "person"),
}
PREDICATE_ORDER = {p: i for i, p in enumerate(PREDICATES)}
NESTED = "works_at"
NESTABLE = ("sender", "recipient")

# substitutions that keep the argument type
SWAPS = {
    "sender": "recipient",
    "recipient": "sender",
    "before": "after",
    "after": "before",
    "sent_to": "received_from",
    "received_from": "sent_to",
}

# predicates that may not co-occur in one logical form
EXCLUSIVE = {"before": "after", "after": "before"}


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class Nested:
    org: str

    def tokens(self) -> tuple[str, ...]:
        return (OPEN, NESTED, self.org, CLOSE)


Arg = Union[str, Nested]


@dataclass(frozen=True)
class Clause:
    pred: str
    arg: Arg

    def tokens(self) -> tuple[str, ...]:
        inner = self.arg.tokens() if isinstance(self.arg, Nested) else (self.arg,)
        return (OPEN, self.pred) + inner + (CLOSE,)

    @property
    def entity(self) -> str:
        return self.arg.org if isinstance(self.arg, Nested) else self.arg

    @property
    def entity_kind(self) -> str:
        return "organization" if isinstance(self.arg, Nested) else PREDICATES[self.pred][1]

    @property
    def num_predicates(self) -> int:
        return 2 if isinstance(self.arg, Nested) else 1


@dataclass(frozen=True)
class Query:
    head: str
    clauses: tuple[Clause, ...]

    def canonical(self) -> "Query":
        return Query(self.head, tuple(sorted(self.clauses, key=lambda c: PREDICATE_ORDER[c.pred])))

    def to_lf(self) -> LogicalForm:
        toks = [OPEN, self.head]
        for c in self.canonical().clauses:
            toks.extend(c.tokens())
        toks.append(CLOSE)
        return LogicalForm(tuple(toks))

    def clause(self, pred: str) -> Optional[Clause]:
        for c in self.clauses:
            if c.pred == pred:
                return c
        return None

    @property
    def preds(self) -> set[str]:
        return {c.pred for c in self.clauses}

    def entities(self) -> list[str]:
        return [c.entity for c in self.clauses]

    @property
    def num_predicates(self) -> int:
        return sum(c.num_predicates for c in self.clauses)

    def validate(self) -> "Query":
        if self.head not in HEADS:
            raise StructureError(f"unknown head {self.head!r}")
        seen = set()
        for c in self.clauses:
            if c.pred not in PREDICATES or PREDICATES[c.pred][0] != self.head:
                raise StructureError(f"predicate {c.pred!r} does not attach to {self.head!r}")
            if c.pred in seen:
                raise StructureError(f"duplicate predicate {c.pred!r}")
            if isinstance(c.arg, Nested) and c.pred not in NESTABLE:
                raise StructureError(f"predicate {c.pred!r} takes no nested argument")
            seen.add(c.pred)
        for p, q in EXCLUSIVE.items():
            if p in seen and q in seen:
                raise StructureError(f"{p!r} and {q!r} cannot co-occur")
        if not self.clauses:
            raise StructureError("a query needs at least one clause")
        return self


def parse_query(lf: LogicalForm) -> Query:
    """Structured view of a well-formed domain logical form."""
    toks = list(lf.tokens)
    pos = 0

    def expect(tok):
        nonlocal pos
        if pos >= len(toks) or toks[pos] != tok:
            raise StructureError(f"expected {tok!r} at position {pos} in {lf.text!r}")
        pos += 1

    def atom():
        nonlocal pos
        if pos >= len(toks) or toks[pos] in (OPEN, CLOSE):
            raise StructureError(f"expected a symbol at position {pos} in {lf.text!r}")
        pos += 1
        return toks[pos - 1]

    expect(OPEN)
    head = atom()
    clauses = []
    while pos < len(toks) and toks[pos] == OPEN:
        expect(OPEN)
        pred = atom()
        if pos < len(toks) and toks[pos] == OPEN:
            expect(OPEN)
            inner = atom()
            if inner != NESTED:
                raise StructureError(f"only {NESTED!r} may be nested, got {inner!r}")
            arg: Arg = Nested(atom())
            expect(CLOSE)
        else:
            arg = atom()
        expect(CLOSE)
        clauses.append(Clause(pred, arg))
    expect(CLOSE)
    if pos != len(toks):
        raise StructureError(f"trailing tokens in {lf.text!r}")
    return Query(head, tuple(clauses)).validate()


def count_predicates(lf: LogicalForm) -> int:
    """Number of predicate symbols below the head (nested ones included)."""
    return parse_query(lf).num_predicates
