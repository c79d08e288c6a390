"""Logical forms, dialog mentions, interaction records and their JSONL format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

MENTION_KINDS = ("person", "organization", "time", "topic")
OPEN, CLOSE = "(", ")"
MENTION_OPEN, MENTION_CLOSE = "[", "]"

RECORD_FIELDS = (
    "utterance",
    "mentions",
    "predicted_lf",
    "feedback",
    "num_corrections",
    "gold_lf",
)


class RecordError(ValueError):
    """A dataset line or record violates the interchange format."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


def check_token(tok: str) -> str:
    if not isinstance(tok, str) or not tok or any(c.isspace() for c in tok):
        raise RecordError(f"invalid token {tok!r}: tokens are non-empty and whitespace-free")
    return tok


def tokenize(text: str) -> tuple[str, ...]:
    return tuple(text.split())


@dataclass(frozen=True)
class Utterance:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) < 1:
            raise RecordError("utterance must contain at least one token")
        for t in self.tokens:
            check_token(t)

    @classmethod
    def from_text(cls, text: str) -> "Utterance":
        return cls(tokenize(text))

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def brackets_balanced(tokens: Sequence[str]) -> bool:
    depth = 0
    for t in tokens:
        if t == OPEN:
            depth += 1
        elif t == CLOSE:
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


@dataclass(frozen=True, eq=False)
class LogicalForm:
    """Linearized prefix-form parse. Equality is token-sequence equality."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        for t in self.tokens:
            check_token(t)
        if not brackets_balanced(self.tokens):
            raise RecordError(
                f"unbalanced structural brackets in logical form: {' '.join(self.tokens)!r}"
            )

    @classmethod
    def unchecked(cls, tokens) -> "LogicalForm":
        """Wrap decoder output, which is not guaranteed to be well formed."""
        lf = object.__new__(cls)
        object.__setattr__(lf, "tokens", tuple(tokens))
        return lf

    @property
    def well_formed(self) -> bool:
        return brackets_balanced(self.tokens)

    def __eq__(self, other):
        if not isinstance(other, LogicalForm):
            return NotImplemented
        return self.tokens == other.tokens

    def __hash__(self):
        return hash(self.tokens)

    @classmethod
    def from_text(cls, text: str) -> "LogicalForm":
        return cls(tokenize(text))

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __str__(self):
        return self.text


def lf_equal(a: LogicalForm, b: LogicalForm) -> bool:
    return tuple(a.tokens) == tuple(b.tokens)


@dataclass(frozen=True)
class Mention:
    kind: str
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.kind not in MENTION_KINDS:
            raise RecordError(f"unknown mention kind {self.kind!r}; expected one of {MENTION_KINDS}")
        if not self.tokens:
            raise RecordError("mention must contain at least one token")
        for t in self.tokens:
            check_token(t)


@dataclass(frozen=True)
class MentionList:
    mentions: tuple[Mention, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mentions", tuple(self.mentions))

    def ordered(self) -> list[Mention]:
        # stable: dialog order is kept within a kind
        rank = {k: i for i, k in enumerate(MENTION_KINDS)}
        return sorted(self.mentions, key=lambda m: rank[m.kind])

    def serialize(self) -> tuple[str, ...]:
        out: list[str] = []
        for m in self.ordered():
            out.append(MENTION_OPEN)
            out.extend(m.tokens)
            out.append(MENTION_CLOSE)
        return tuple(out)

    def of_kind(self, kind: str) -> list[Mention]:
        return [m for m in self.ordered() if m.kind == kind]

    def __len__(self):
        return len(self.mentions)

    def __iter__(self):
        return iter(self.mentions)


AFFIRMATION = Utterance(("that's", "right"))


@dataclass(frozen=True)
class InteractionRecord:
    utterance: Utterance
    mentions: MentionList = field(default_factory=MentionList)
    predicted_lf: Optional[LogicalForm] = None
    feedback: Optional[Utterance] = None
    num_corrections: int = 0
    gold_lf: Optional[LogicalForm] = None
    record_id: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.num_corrections, int) or isinstance(self.num_corrections, bool):
            raise RecordError("num_corrections must be an integer")
        if self.num_corrections < 0:
            raise RecordError("num_corrections must be non-negative")

    @property
    def is_labeled(self) -> bool:
        return self.gold_lf is not None


def _lf_json(lf: Optional[LogicalForm]):
    return None if lf is None else list(lf.tokens)


def record_to_dict(record: InteractionRecord) -> dict:
    d = {
        "utterance": list(record.utterance.tokens),
        "mentions": [{"kind": m.kind, "tokens": list(m.tokens)} for m in record.mentions],
        "predicted_lf": _lf_json(record.predicted_lf),
        "feedback": None if record.feedback is None else list(record.feedback.tokens),
        "num_corrections": record.num_corrections,
        "gold_lf": _lf_json(record.gold_lf),
    }
    if record.record_id is not None:
        d["record_id"] = record.record_id
    return d


def serialize_record(record: InteractionRecord) -> str:
    return json.dumps(record_to_dict(record), ensure_ascii=False, separators=(", ", ": "))


def _tokens(obj, name: str, line_number):
    if not isinstance(obj, list) or not all(isinstance(t, str) for t in obj):
        raise RecordError(f"field {name!r} must be a list of token strings", line_number)
    return tuple(obj)


def parse_record(line: str, line_number: Optional[int] = None) -> InteractionRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise RecordError(f"malformed JSON ({e.msg})", line_number) from None
    if not isinstance(obj, dict):
        raise RecordError("record must be a JSON object", line_number)
    missing = [k for k in RECORD_FIELDS if k not in obj]
    if missing:
        raise RecordError(f"missing fields {missing}", line_number)
    try:
        mentions = []
        if not isinstance(obj["mentions"], list):
            raise RecordError("field 'mentions' must be a list")
        for m in obj["mentions"]:
            if not isinstance(m, dict) or "kind" not in m or "tokens" not in m:
                raise RecordError("each mention needs 'kind' and 'tokens'")
            mentions.append(Mention(m["kind"], _tokens(m["tokens"], "mentions.tokens", None)))
        pred = obj["predicted_lf"]
        gold = obj["gold_lf"]
        fb = obj["feedback"]
        rid = obj.get("record_id")
        return InteractionRecord(
            utterance=Utterance(_tokens(obj["utterance"], "utterance", None)),
            mentions=MentionList(tuple(mentions)),
            predicted_lf=None if pred is None else LogicalForm(_tokens(pred, "predicted_lf", None)),
            feedback=None if fb is None else Utterance(_tokens(fb, "feedback", None)),
            num_corrections=obj["num_corrections"],
            gold_lf=None if gold is None else LogicalForm(_tokens(gold, "gold_lf", None)),
            record_id=None if rid is None else str(rid),
        )
    except RecordError as e:
        if e.line_number is None and line_number is not None:
            raise RecordError(str(e), line_number) from None
        raise


def write_records(path, records: Iterable[InteractionRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(serialize_record(r))
            fh.write("\n")
            n += 1
    return n


def iter_records(path) -> Iterator[InteractionRecord]:
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            yield parse_record(line, line_number=i)


def read_records(path) -> list[InteractionRecord]:
    return list(iter_records(path))


class Vocabulary:
    """Dense token <-> id bijection with fixed reserved ids 0..3."""

    PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
    RESERVED = (PAD, BOS, EOS, UNK)

    def __init__(self, tokens: Iterable[str] = ()):
        self._itos: list[str] = list(self.RESERVED)
        self._stoi: dict[str, int] = {t: i for i, t in enumerate(self._itos)}
        for t in tokens:
            self.add(t)

    pad_id, bos_id, eos_id, unk_id = 0, 1, 2, 3

    def add(self, token: str) -> int:
        if token not in self._stoi:
            check_token(token)
            self._stoi[token] = len(self._itos)
            self._itos.append(token)
        return self._stoi[token]

    def __contains__(self, token) -> bool:
        return token in self._stoi

    def __len__(self):
        return len(self._itos)

    def id(self, token: str) -> int:
        return self._stoi.get(token, self.unk_id)

    def token(self, idx: int) -> str:
        return self._itos[idx]

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    @property
    def tokens(self) -> list[str]:
        return list(self._itos)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self._itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(lines[: len(cls.RESERVED)]) != cls.RESERVED:
            raise RecordError(f"vocabulary file {path} does not start with reserved symbols")
        return cls(lines[len(cls.RESERVED):])

    @classmethod
    def build(cls, sequences: Iterable[Iterable[str]], min_count: int = 1) -> "Vocabulary":
        counts: dict[str, int] = {}
        order: list[str] = []
        for seq in sequences:
            for t in seq:
                if t not in counts:
                    counts[t] = 0
                    order.append(t)
                counts[t] += 1
        return cls(t for t in order if counts[t] >= min_count and t not in cls.RESERVED)
