"""Seed / unlabeled / test datasets over a synthetic world."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..lf import InteractionRecord, LogicalForm, write_records
from .edits import CorruptionError, corrupt, edit_sites
from .feedback import NoiseConfig, generate_feedback
from .grammar import generate_example
from .schema import parse_query


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class CorruptionPolicy:
    """How the stand-in legacy parser errs.

    The number of edits k is drawn from ``k_weights`` over 1..len, tilted
    toward more edits on longer gold parses, and restricted to feasible k.
    """

    k_weights: tuple = (0.6, 0.3, 0.1)
    complexity_tilt: float = 0.3
    mention_bias: float = 0.5
    feedback_per_question: tuple = (0.3, 0.5, 0.2)  # P(1), P(2), P(3) records
    max_context: int = 3

    def k_distribution(self, lf: LogicalForm) -> np.ndarray:
        q = parse_query(lf)
        ks = np.arange(1, len(self.k_weights) + 1)
        w = np.asarray(self.k_weights, float) * (1 + self.complexity_tilt * (q.num_predicates - 1)) ** (ks - 1)
        w[ks > edit_sites(q.canonical())] = 0.0
        return w / w.sum()

    def sample_k(self, lf: LogicalForm, rng) -> int:
        p = self.k_distribution(lf)
        return int(rng.choice(len(p), p=p)) + 1


@dataclass
class Question:
    qid: int
    utterance: object
    gold: LogicalForm
    mentions: object

    @property
    def key(self):
        return (self.utterance.tokens, tuple(self.mentions.serialize()))


@dataclass
class Corpus:
    seed: list
    unlabeled: list
    test: list
    stats: dict = field(default_factory=dict)

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for split in ("seed", "unlabeled", "test"):
            paths[split] = str(out / f"{split}.jsonl")
            write_records(paths[split], getattr(self, split))
        paths["stats"] = str(out / "stats.json")
        Path(paths["stats"]).write_text(json.dumps(self.stats, indent=2, sort_keys=True) + "\n")
        return paths


def generate_questions(world, n: int, rng, policy: CorruptionPolicy = CorruptionPolicy(),
                       exclude=(), start_id: int = 0, max_attempts_factor: int = 50) -> list:
    """``n`` distinct questions, none of whose keys appear in ``exclude``."""
    seen = set(exclude)
    out = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > max_attempts_factor * max(n, 20):
            raise CorpusError(f"world too small: found {len(out)} of {n} distinct questions")
        ctx = int(rng.integers(policy.max_context + 1))
        u, y, m = generate_example(world, rng, ctx)
        q = Question(start_id + len(out), u, y, m)
        if q.key in seen:
            continue
        seen.add(q.key)
        out.append(q)
    return out


def labeled_record(q: Question, prefix: str) -> InteractionRecord:
    return InteractionRecord(q.utterance, q.mentions, gold_lf=q.gold, record_id=f"{prefix}-{q.qid}")


def feedback_records(q: Question, world, policy: CorruptionPolicy, noise: NoiseConfig, rng) -> list:
    """One to three corrective-feedback records with distinct wrong parses."""
    want = int(rng.choice(len(policy.feedback_per_question), p=np.asarray(policy.feedback_per_question))) + 1
    preds = []
    for _ in range(20 * want):
        if len(preds) == want:
            break
        k = policy.sample_k(q.gold, rng)
        try:
            y_hat = corrupt(q.gold, k, rng, world, q.mentions, policy.mention_bias)
        except CorruptionError as e:
            raise CorpusError(f"world too small to corrupt question {q.qid}: {e}") from e
        if y_hat != q.gold and y_hat not in preds:
            preds.append(y_hat)
    out = []
    for j, y_hat in enumerate(preds):
        f, n = generate_feedback(q.gold, y_hat, noise, rng, world)
        out.append(InteractionRecord(q.utterance, q.mentions, y_hat, f, n, q.gold, f"u{q.qid}.{j}"))
    return out


def corpus_stats(seed, unlabeled, test) -> dict:
    hist = Counter(r.num_corrections for r in unlabeled)
    questions = {r.record_id.split(".")[0] for r in unlabeled}
    misses = sum(1 for r in unlabeled if r.num_corrections == 0)
    return {
        "counts": {"seed": len(seed), "unlabeled_records": len(unlabeled),
                   "unlabeled_questions": len(questions), "test": len(test)},
        "correction_histogram": {str(k): hist[k] for k in sorted(hist)},
        "feedback_per_question": len(unlabeled) / max(len(questions), 1),
        "affirmation_noise_records": misses,
        "realized_miss_rate": misses / max(len(unlabeled), 1),
    }


def build_corpus(world, counts: dict, policy: CorruptionPolicy = CorruptionPolicy(),
                 noise: NoiseConfig = NoiseConfig(), rng: Optional[np.random.Generator] = None,
                 fixed_test: Optional[list] = None) -> Corpus:
    """Disjoint seed (gold only), unlabeled (feedback) and test question sets.

    ``counts`` has keys seed_labeled, unlabeled (questions) and test. A
    ``fixed_test`` list of Questions is reused instead of drawing a new one.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for key in ("seed_labeled", "unlabeled", "test"):
        if counts.get(key, 0) < 1 and not (key == "test" and fixed_test):
            raise CorpusError(f"count {key!r} must be >= 1")
    if fixed_test is None:
        test_q = generate_questions(world, counts["test"], rng, policy, start_id=0)
    else:
        test_q = list(fixed_test)
    base = max((q.qid for q in test_q), default=-1) + 1
    train_q = generate_questions(world, counts["seed_labeled"] + counts["unlabeled"], rng, policy,
                                 exclude=[q.key for q in test_q], start_id=base)
    seed_q = train_q[:counts["seed_labeled"]]
    unl_q = train_q[counts["seed_labeled"]:]
    seed = [labeled_record(q, "seed") for q in seed_q]
    test = [labeled_record(q, "test") for q in test_q]
    unlabeled = []
    for q in unl_q:
        unlabeled.extend(feedback_records(q, world, policy, noise, rng))
    stats = corpus_stats(seed, unlabeled, test)
    stats["policy"] = asdict(policy)
    stats["noise"] = asdict(noise)
    return Corpus(seed, unlabeled, test, stats)


def questions_of(records) -> list:
    """Distinct questions (by record-id stem) in first-seen order."""
    out, seen = [], set()
    for r in records:
        stem = r.record_id.split(".")[0]
        if stem not in seen:
            seen.add(stem)
            out.append(stem)
    return out
