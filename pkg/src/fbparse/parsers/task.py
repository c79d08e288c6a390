"""Task parser: P(y | u; theta_t) over the utterance plus its dialog mentions."""
from __future__ import annotations

from .base import Seq2SeqParser


class TaskParser(Seq2SeqParser):
    prefix = "task."
    uses_feedback = False

    def sample(self, u, m, rng, f=None, **kw):
        # feedback is never read
        return super().sample(u, m, rng, None, **kw)

    def prepare(self, u, m, f=None):
        return super().prepare(u, m, None)

    def loss(self, P, u, m, y, f=None):
        return super().loss(P, u, m, y, None)
