"""Finite-difference checks of the complete parser losses."""
from __future__ import annotations

import time

import numpy as np

from .inference import MHConfig, TabularModel, exact_map, mh_map
from .lf import LogicalForm, Mention, MentionList, Utterance, Vocabulary
from .nn import grad_check
from .parsers import FeedbackParser, ParserConfig, TaskParser

# short examples; "alice" is outside the output vocabulary so the copy route is exercised
EXAMPLES = (
    ("which company is alice at", ("bob",), "( organization ( employs alice ) )", "no , i meant alice"),
    ("find emails about budget", (), "( email ( about budget ) )", "that's right"),
    ("who emailed him", ("carol",), "( person ( sent_to carol ) )", "also about budget"),
)


def example_vocabs():
    ins = [u.split() for u, _, _, _ in EXAMPLES] + [f.split() for *_, f in EXAMPLES]
    ins += [list(m) + ["[", "]"] for _, m, _, _ in EXAMPLES]
    out = ["(", ")", "email", "person", "organization", "employs", "about", "sent_to", "budget"]
    return Vocabulary.build(ins), Vocabulary(out)


def parser_grad_check(kind: str = "task", seed: int = 0, emb_dim: int = 5, hidden: int = 4,
                      num_coords: int = 300, eps: float = 1e-5) -> dict:
    """Max relative error of the full NLL gradient of a freshly initialized parser."""
    in_vocab, out_vocab = example_vocabs()
    cfg = ParserConfig(emb_dim=emb_dim, hidden=hidden, init_scale=0.5, max_len=12)
    cls = {"task": TaskParser, "feedback": FeedbackParser}[kind]
    parser = cls(in_vocab, out_vocab, cfg, seed=seed)
    t0 = time.perf_counter()
    worst = 0.0
    for u, m, y, f in EXAMPLES:
        u = Utterance.from_text(u)
        ml = MentionList(tuple(Mention("person", (name,)) for name in m))
        lf = LogicalForm.from_text(y)
        fb = Utterance.from_text(f) if parser.uses_feedback else None
        err = grad_check(lambda P: parser.loss(P, u, ml, lf, fb), parser.params.values,
                         eps=eps, num_coords=num_coords, seed=seed)
        worst = max(worst, err)
    return {"parser": kind, "max_relative_error": worst, "seconds": time.perf_counter() - t0,
            "num_parameters": parser.params.size()}


def mh_exact_agreement(num_models: int = 100, num_iterations: int = 200, sigma: float = 1.0,
                       min_space: int = 5, max_space: int = 200, seed: int = 0) -> dict:
    """How often ``mh_map`` finds the exact MAP of two random tabular experts.

    Each instance draws a space of ``min_space``..``max_space`` forms and
    independent N(0, sigma) logits for the task and feedback experts.
    """
    rng = np.random.default_rng(seed)
    matches = 0
    t0 = time.perf_counter()
    cfg = MHConfig(num_iterations=num_iterations, reject_yhat=False)
    for i in range(num_models):
        k = int(rng.integers(min_space, max_space + 1))
        space = [("y", str(j)) for j in range(k)]
        task = TabularModel(space, rng.normal(0, sigma, k))
        fb = TabularModel(space, rng.normal(0, sigma, k))
        got = mh_map(None, None, None, None, task, fb, cfg, np.random.default_rng([seed, i]))
        matches += bool(got) and got == exact_map(None, None, None, space, task, fb)
    return {"matches": matches, "instances": num_models, "seconds": time.perf_counter() - t0}
