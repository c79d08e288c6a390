"""Vocabulary construction and small helpers shared by training and the CLI."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .lf import InteractionRecord, Vocabulary
from .world.feedback import AFFIRMATIONS


def build_vocabs(seed: Sequence[InteractionRecord], unlabeled: Sequence[InteractionRecord] = (),
                 min_count: int = 1):
    """Input vocabulary from every training-visible utterance, mention and
    feedback token; output vocabulary from the seed parses."""
    inputs = []
    for r in list(seed) + list(unlabeled):
        inputs.append(r.utterance.tokens)
        inputs.append(r.mentions.serialize())
        if r.feedback is not None:
            inputs.append(r.feedback.tokens)
    inputs.extend(a.split() for a in AFFIRMATIONS)
    in_vocab = Vocabulary.build(inputs, min_count)
    out_vocab = Vocabulary.build([r.gold_lf.tokens for r in seed if r.gold_lf is not None])
    return in_vocab, out_vocab


def default_max_len(seed: Sequence[InteractionRecord]) -> int:
    """Twice the 95th-percentile gold length of the seed set."""
    lengths = [len(r.gold_lf) for r in seed if r.gold_lf is not None]
    if not lengths:
        return 30
    return int(2 * np.ceil(np.percentile(lengths, 95)))


def clone_parser(parser):
    """Independent copy (weights and optimizer state) of a parser."""
    return type(parser)(parser.in_vocab, parser.out_vocab, parser.config, params=parser.params.copy())
