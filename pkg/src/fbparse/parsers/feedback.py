"""Feedback parser: P(y | u, f; theta_f).

Two bidirectional encoders, one over the utterance plus mentions and one over
the feedback. The decoder context adds the two attention summaries, and the
output softmax gains one copy logit per feedback token. The original parse
y-hat is never an input; it only enters through rejection during inference.
"""
from __future__ import annotations

from typing import Optional

from ..lf import MentionList, Utterance
from .base import Seq2SeqParser


class FeedbackParser(Seq2SeqParser):
    prefix = "feedback."
    uses_feedback = True

    def source_specs(self):
        return [("enc", "W_a"), ("fenc", "W_e")]

    def source_tokens(self, u: Utterance, m: MentionList, f: Optional[Utterance]):
        if f is None:
            raise ValueError("the feedback parser needs a feedback utterance")
        return [tuple(u.tokens) + m.serialize(), tuple(f.tokens)]

    def encode_feedback(self, P, f: Utterance):
        """Per-token bidirectional states b_k of the feedback, shape (K, 2H)."""
        H, _ = self._encode_tokens(P, "fenc", f.tokens)
        return H


class TaskArchitectureProposer(Seq2SeqParser):
    """Task-parser architecture sitting in the feedback-parser slot.

    Used by the no-feedback baselines: accepts and ignores f, so the product
    of experts becomes two independently initialized task parsers.
    """

    prefix = "feedback."
    uses_feedback = False

    def prepare(self, u, m, f=None):
        return super().prepare(u, m, None)

    def loss(self, P, u, m, y, f=None):
        return super().loss(P, u, m, y, None)

    def sample(self, u, m, rng, f=None, **kw):
        return super().sample(u, m, rng, None, **kw)
