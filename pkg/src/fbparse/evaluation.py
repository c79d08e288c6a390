"""Exact-match metrics and the correction-count breakdown."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .lf import InteractionRecord, LogicalForm, lf_equal
from .world.schema import StructureError, count_predicates

BUCKETS = ("1", "2", "3+")


def bucket_of(num_corrections: int) -> Optional[str]:
    if num_corrections <= 0:
        return None
    return BUCKETS[min(num_corrections, 3) - 1]


def decode(parser, record: InteractionRecord, beam_width: int = 1) -> LogicalForm:
    if beam_width == 1:
        return parser.greedy(record.utterance, record.mentions)
    return parser.beam_search(record.utterance, record.mentions, beam_width=beam_width)[0][0]


def predictions(parser, records: Sequence[InteractionRecord], beam_width: int = 1) -> list:
    """Decoded parse per record; records sharing a question are decoded once."""
    cache = {}
    out = []
    for r in records:
        key = (r.utterance.tokens, r.mentions.serialize())
        if key not in cache:
            cache[key] = decode(parser, r, beam_width)
        out.append(cache[key])
    return out


def _require_gold(records):
    for r in records:
        if r.gold_lf is None:
            raise ValueError(f"record {r.record_id} has no gold parse to evaluate against")


def exact_match_accuracy(parser, records: Sequence[InteractionRecord], beam_width: int = 1,
                         preds: Optional[list] = None) -> float:
    _require_gold(records)
    if not records:
        return 0.0
    preds = preds if preds is not None else predictions(parser, records, beam_width)
    return float(np.mean([lf_equal(p, r.gold_lf) for p, r in zip(preds, records)]))


def unlabeled_recovery_accuracy(parser, records: Sequence[InteractionRecord],
                                training_ids: Optional[Sequence[str]] = None, beam_width: int = 1,
                                preds: Optional[list] = None) -> float:
    """Exact match on the very feedback records used in training."""
    if training_ids is not None:
        got = sorted(r.record_id for r in records)
        if got != sorted(training_ids):
            raise ValueError("evaluation records differ from the training-time unlabeled set")
    return exact_match_accuracy(parser, records, beam_width, preds)


def gold_predicates(lf: LogicalForm) -> int:
    try:
        return count_predicates(lf)
    except StructureError:
        return 0


def breakdown_by_corrections(parser, records: Sequence[InteractionRecord], beam_width: int = 1,
                             preds: Optional[list] = None) -> list:
    """Accuracy and mean gold predicate count per correction bucket (1, 2, 3+)."""
    _require_gold(records)
    preds = preds if preds is not None else predictions(parser, records, beam_width)
    groups: dict = {}
    for p, r in zip(preds, records):
        b = bucket_of(r.num_corrections)
        if b is not None:
            groups.setdefault(b, []).append((lf_equal(p, r.gold_lf), gold_predicates(r.gold_lf)))
    rows = []
    for b in BUCKETS:
        if b in groups:
            hits, npred = zip(*groups[b])
            rows.append({"correction_bucket": b, "accuracy": float(np.mean(hits)),
                         "mean_gold_lf_length": float(np.mean(npred)), "n": len(hits)})
    return rows


def mean_predicates(records: Sequence[InteractionRecord]) -> float:
    return float(np.mean([gold_predicates(r.gold_lf) for r in records])) if records else 0.0
