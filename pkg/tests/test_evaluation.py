import numpy as np
import pytest

from fbparse.data import build_vocabs, default_max_len
from fbparse.evaluation import (
    BUCKETS, breakdown_by_corrections, bucket_of, decode, exact_match_accuracy, unlabeled_recovery_accuracy,
)
from fbparse.lf import InteractionRecord, Utterance, Vocabulary
from fbparse.parsers import ParserConfig, TaskParser
from fbparse.training import TrainingConfig, make_parsers, pretrain
from fbparse.world import DEFAULT_WORLD_SIZES, build_corpus, generate_world


class Lookup:
    """Stand-in parser answering from a table (a cheat checkpoint)."""

    def __init__(self, records):
        self.table = {(r.utterance.tokens, r.mentions.serialize()): r.gold_lf for r in records}

    def greedy(self, u, m, f=None):
        return self.table[(u.tokens, m.serialize())]


@pytest.fixture(scope="module")
def world():
    return generate_world(0, DEFAULT_WORLD_SIZES)


@pytest.fixture(scope="module")
def corpus(world):
    return build_corpus(world, {"seed_labeled": 20, "unlabeled": 300, "test": 100}, rng=np.random.default_rng(1))


def test_missing_gold_raises():
    r = InteractionRecord(Utterance(("hi",)))
    with pytest.raises(ValueError):
        exact_match_accuracy(Lookup([]), [r])
    with pytest.raises(ValueError):
        breakdown_by_corrections(Lookup([]), [r])


def test_cheat_parser_scores_one(corpus):
    assert exact_match_accuracy(Lookup(corpus.test), corpus.test) == 1.0
    ids = [r.record_id for r in corpus.unlabeled]
    assert unlabeled_recovery_accuracy(Lookup(corpus.unlabeled), corpus.unlabeled, ids) == 1.0


def test_recovery_requires_training_ids(corpus):
    ids = [r.record_id for r in corpus.unlabeled][:-1]
    with pytest.raises(ValueError):
        unlabeled_recovery_accuracy(Lookup(corpus.unlabeled), corpus.unlabeled, ids)


def test_untrained_parser_near_zero(corpus):
    in_v, out_v = build_vocabs(corpus.seed, corpus.unlabeled)
    p = TaskParser(in_v, out_v, ParserConfig(64, 32, 0.08, default_max_len(corpus.seed)), seed=0)
    assert exact_match_accuracy(p, corpus.test) < 0.05


def test_disjoint_vocabulary_parser_scores_zero(corpus):
    p = TaskParser(Vocabulary(["qqq"]), Vocabulary(["zzz"]), ParserConfig(4, 3, 0.5, 6), seed=0)
    assert exact_match_accuracy(p, corpus.test[:20]) == 0.0


def test_memorized_example_scores_one(world, corpus):
    seed = corpus.seed[:1]
    in_v, out_v = build_vocabs(seed)
    task, _ = make_parsers("full", in_v, out_v, ParserConfig(64, 32, 0.08, default_max_len(seed)))
    pretrain(seed, task, None, TrainingConfig(pretrain_epochs=50, learning_rate=3e-2), world)
    assert exact_match_accuracy(task, seed) == 1.0


def test_beam_one_is_greedy(corpus):
    in_v, out_v = build_vocabs(corpus.seed)
    p = TaskParser(in_v, out_v, ParserConfig(8, 6, 0.5, 10), seed=2)
    for r in corpus.test[:5]:
        assert decode(p, r, 1) == p.greedy(r.utterance, r.mentions)
        assert decode(p, r, 3) == p.beam_search(r.utterance, r.mentions, beam_width=3)[0][0]


def test_bucket_mapping():
    assert [bucket_of(k) for k in range(6)] == [None, "1", "2", "3+", "3+", "3+"]


def test_buckets_partition_corrective_records(corpus):
    rows = breakdown_by_corrections(Lookup(corpus.unlabeled), corpus.unlabeled)
    assert [r["correction_bucket"] for r in rows] == list(BUCKETS)
    assert sum(r["n"] for r in rows) == sum(r.num_corrections > 0 for r in corpus.unlabeled)
    single = [r for r in corpus.unlabeled if r.num_corrections == 1]
    assert len(breakdown_by_corrections(Lookup(single), single)) == 1


def test_gold_length_rises_with_bucket(corpus):
    rows = breakdown_by_corrections(Lookup(corpus.unlabeled), corpus.unlabeled)
    lengths = [r["mean_gold_lf_length"] for r in rows]
    assert lengths == sorted(lengths)
