"""Latent-parse MAP estimation with an independence Metropolis-Hastings chain.

The feedback parser proposes, the task parser decides acceptance, and every
accepted proposal is scored under the product of both parsers. Because the
proposal ignores the current state, the full MH ratio reduces to the task
parser's likelihood ratio.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .lf import LogicalForm, Vocabulary


class _NoSample:
    """Returned by ``mh_map`` when the chain recorded nothing."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self):
        return False

    def __repr__(self):
        return "NO_SAMPLE"


NO_SAMPLE = _NoSample()


@dataclass(frozen=True)
class ScoredParse:
    lf: LogicalForm
    log_pt: float
    log_pf: Optional[float] = None

    @property
    def joint_score(self) -> float:
        if self.log_pf is None:
            return self.log_pt
        return self.log_pt + self.log_pf


@dataclass(frozen=True)
class MHConfig:
    num_iterations: int = 20
    reject_yhat: bool = True
    max_resample_attempts: int = 25

    def __post_init__(self):
        if self.num_iterations < 1:
            raise ValueError("num_iterations must be >= 1")
        if self.max_resample_attempts < 1:
            raise ValueError("max_resample_attempts must be >= 1")


@dataclass
class MHTrace:
    initial: Optional[tuple] = None
    proposals: list = field(default_factory=list)  # tokens, None when rejection ran dry
    accepted: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    state_scores: list = field(default_factory=list)  # joint score of the chain state
    recorded: dict = field(default_factory=dict)  # tokens -> joint score
    yhat_rejections: int = 0
    result: object = None


def acceptance_ratio(log_pt_proposed: float, log_pt_current: float) -> float:
    """min(1, p_t(y') / p_t(y))."""
    if not (math.isfinite(log_pt_proposed) and math.isfinite(log_pt_current)):
        raise ValueError(f"acceptance ratio needs finite log-likelihoods, got "
                         f"{log_pt_proposed} and {log_pt_current}")
    d = log_pt_proposed - log_pt_current
    return 1.0 if d >= 0 else math.exp(d)


def independence_ratio(proposed: ScoredParse, current: ScoredParse) -> float:
    """Textbook independence-sampler ratio with target p_t*p_f and proposal p_f."""
    log_r = (proposed.joint_score + current.log_pf) - (current.joint_score + proposed.log_pf)
    return 1.0 if log_r >= 0 else math.exp(log_r)


def _tokens(y) -> tuple:
    return tuple(y.tokens) if isinstance(y, LogicalForm) else tuple(y)


def _draw_proposals(feedback, ctx_f, n: int, rng, yhat: Optional[tuple], cfg: MHConfig,
                    trace: Optional[MHTrace]):
    """N proposals; with rejection on, copies of y-hat are redrawn (bounded)."""
    props = list(feedback.sample_ctx(ctx_f, rng, n))
    if yhat is None or not cfg.reject_yhat:
        return props
    bad = [i for i, p in enumerate(props) if p == yhat]
    attempts = 0
    while bad and attempts < cfg.max_resample_attempts:
        attempts += 1
        if trace is not None:
            trace.yhat_rejections += len(bad)
        redraw = feedback.sample_ctx(ctx_f, rng, len(bad))
        for i, p in zip(bad, redraw):
            props[i] = p
        bad = [i for i in bad if props[i] == yhat]
    if trace is not None:
        trace.yhat_rejections += len(bad)
    for i in bad:
        props[i] = None
    return props


def mh_map(u, m, f, yhat, task, feedback, cfg: MHConfig = MHConfig(),
           rng: Optional[np.random.Generator] = None, trace: Optional[MHTrace] = None,
           ctx_t=None, ctx_f=None):
    """MAP estimate of the latent parse, or NO_SAMPLE.

    ``task`` and ``feedback`` expose ``prepare``, ``sample_ctx`` and
    ``score_ctx`` (the parsers do; so do the tabular toy models).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    ctx_t = ctx_t if ctx_t is not None else task.prepare(u, m, None)
    ctx_f = ctx_f if ctx_f is not None else feedback.prepare(u, m, f)
    yhat_t = None if yhat is None else _tokens(yhat)
    N = cfg.num_iterations

    current = task.sample_ctx(ctx_t, rng, 1)[0]
    proposals = _draw_proposals(feedback, ctx_f, N, rng, yhat_t, cfg, trace)
    coins = rng.random(N)

    distinct = list(dict.fromkeys([current] + [p for p in proposals if p is not None]))
    lp_t = dict(zip(distinct, task.score_ctx(ctx_t, distinct)))
    lp_f = dict(zip(distinct, feedback.score_ctx(ctx_f, distinct)))

    samples: dict = {}
    if trace is not None:
        trace.initial = current
    for y_new, coin in zip(proposals, coins):
        accepted, r = False, 0.0
        if y_new is not None:
            if math.isfinite(lp_t[y_new]):
                r = acceptance_ratio(lp_t[y_new], lp_t[current]) if math.isfinite(lp_t[current]) else 1.0
            if coin < r:
                accepted = True
                current = y_new
                samples[y_new] = lp_t[y_new] + lp_f[y_new]
        if trace is not None:
            trace.proposals.append(y_new)
            trace.accepted.append(accepted)
            trace.ratios.append(r)
            trace.state_scores.append(float(lp_t[current] + lp_f[current]))
    if not samples:
        result = NO_SAMPLE
    else:
        best = max(samples.values())
        ties = [y for y, s in samples.items() if s == best]
        result = LogicalForm.unchecked(min(ties, key=lambda y: _id_key(task, y)))
    if trace is not None:
        trace.recorded = dict(samples)
        trace.result = result
    return result


def _id_key(model, tokens) -> tuple:
    vocab = getattr(model, "out_vocab", None)
    if vocab is None:
        return tuple(tokens)
    # out-of-vocabulary (copied) tokens sort after every vocabulary id, by surface
    return tuple((0, vocab.id(t), "") if t in vocab else (1, 0, t) for t in tokens)


def exact_map(u, m, f, lf_space: Sequence, task, feedback) -> LogicalForm:
    """argmax over an enumerated space of log p_t + log p_f, ties to the smaller id sequence."""
    space = [_tokens(y) for y in lf_space]
    if not space:
        raise ValueError("exact_map needs a non-empty logical-form space")
    ctx_t = task.prepare(u, m, None)
    ctx_f = feedback.prepare(u, m, f)
    scores = np.asarray(task.score_ctx(ctx_t, space)) + np.asarray(feedback.score_ctx(ctx_f, space))
    best = scores.max()
    ties = [y for y, s in zip(space, scores) if s == best]
    return LogicalForm.unchecked(min(ties, key=lambda y: _id_key(task, y)))


def run_chain(u, m, f, task, feedback, num_steps: int, rng: np.random.Generator,
              batch: int = 1000) -> list:
    """Plain independence chain (no y-hat rejection); returns the visited states."""
    ctx_t = task.prepare(u, m, None)
    ctx_f = feedback.prepare(u, m, f)
    current = task.sample_ctx(ctx_t, rng, 1)[0]
    lp_cache = {current: float(task.score_ctx(ctx_t, [current])[0])}
    states = []
    done = 0
    while done < num_steps:
        k = min(batch, num_steps - done)
        props = feedback.sample_ctx(ctx_f, rng, k)
        new = [p for p in dict.fromkeys(props) if p not in lp_cache]
        if new:
            lp_cache.update(zip(new, map(float, task.score_ctx(ctx_t, new))))
        coins = rng.random(k)
        for y_new, coin in zip(props, coins):
            if coin < acceptance_ratio(lp_cache[y_new], lp_cache[current]):
                current = y_new
            states.append(current)
        done += k
    return states


def mh_chain_diagnostics(trace: MHTrace, record_id: Optional[str] = None) -> dict:
    proposed = [a for p, a in zip(trace.proposals, trace.accepted) if p is not None]
    rate = float(np.mean(proposed)) if proposed else 0.0
    best = max(trace.recorded.values()) if trace.recorded else None
    return {
        "record_id": record_id,
        "acceptance_rate": rate,
        "distinct_parses": len(trace.recorded),
        "best_score": best,
        "returned_no_sample": trace.result is NO_SAMPLE,
        "yhat_rejections": trace.yhat_rejections,
        "score_trajectory": list(trace.state_scores),
    }


def diagnostics_json(diag: dict) -> str:
    return json.dumps(diag, sort_keys=True)


class TabularModel:
    """Explicit distribution over token sequences, duck-typed like a parser.

    Handy as a toy expert: ``prepare`` ignores its inputs, sampling is exact
    and scoring is a table lookup (unknown sequences score -inf).
    """

    def __init__(self, space: Sequence, logits, out_vocab: Optional[Vocabulary] = None):
        self.space = [_tokens(y) for y in space]
        logits = np.asarray(logits, dtype=np.float64)
        if len(logits) != len(self.space):
            raise ValueError("one logit per logical form")
        self.logp = logits - np.logaddexp.reduce(logits)
        self.index = {y: i for i, y in enumerate(self.space)}
        self.out_vocab = out_vocab

    def prepare(self, u=None, m=None, f=None):
        return self

    def sample_ctx(self, ctx, rng, n: int = 1, max_len=None, greedy: bool = False):
        if greedy:
            return [self.space[int(np.argmax(self.logp))]] * n
        idx = rng.choice(len(self.space), size=n, p=np.exp(self.logp))
        return [self.space[i] for i in idx]

    def score_ctx(self, ctx, lfs, include_eos: bool = True):
        return np.array([self.logp[self.index[_tokens(y)]] if _tokens(y) in self.index else -np.inf
                         for y in lfs])

    def probs(self) -> np.ndarray:
        return np.exp(self.logp)
