"""Attentive encoder-decoder with copy routes, shared by both parsers.

The decoder emits one surface token per step from a single softmax over
generate logits W_o[s; c] and one bilinear copy logit per source position.
A surface token's probability is the summed mass of every route that emits it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..lf import LogicalForm, MentionList, Utterance, Vocabulary
from ..nn import ParamStore, Tape
from ..nn import tensor as F


@dataclass(frozen=True)
class ParserConfig:
    emb_dim: int = 64
    hidden: int = 32
    init_scale: float = 0.08
    max_len: int = 30


PAPER_PARSER_CONFIG = ParserConfig(emb_dim=300, hidden=128)


@dataclass
class Source:
    name: str
    tokens: tuple[str, ...]
    H: object  # (T, 2H) encoder states, Tensor or ndarray
    attn: str  # parameter name of the bilinear attention matrix


@dataclass
class Context:
    """Encoded inputs plus the logit-index <-> surface-token bookkeeping."""

    sources: list[Source]
    init: object  # initial decoder state [s0; cell0]
    surface: list[str]
    surface_index: dict[str, int]
    proj: np.ndarray  # (num_logits, num_surface) 0/1 route -> surface map
    input_ids: np.ndarray  # surface id -> decoder input embedding row
    out_vocab_size: int
    unk_warnings: int = 0

    @property
    def num_logits(self) -> int:
        return self.proj.shape[0]

    def target_surface(self, tok: str) -> int:
        idx = self.surface_index.get(tok)
        if idx is None:
            return self.surface_index[Vocabulary.UNK]
        return idx

    def logit_index(self, tok: str) -> np.ndarray:
        return np.flatnonzero(self.proj[:, self.target_surface(tok)])


def uniform_init(params: ParamStore, name: str, shape, rng, scale):
    params[name] = rng.uniform(-scale, scale, size=shape)


class Seq2SeqParser:
    """Base class; subclasses declare their encoders via ``source_specs``."""

    prefix = "task."
    uses_feedback = False

    def __init__(self, in_vocab: Vocabulary, out_vocab: Vocabulary,
                 config: ParserConfig = ParserConfig(), params: Optional[ParamStore] = None,
                 seed: int = 0):
        self.in_vocab = in_vocab
        self.out_vocab = out_vocab
        self.config = config
        if params is None:
            params = ParamStore()
            self.init_params(params, np.random.default_rng(seed))
        self.params = params
        self.unk_targets = 0

    # ------------------------------------------------------------ structure

    def source_specs(self) -> list[tuple[str, str]]:
        """(encoder name, attention matrix name) per source, in logit order."""
        return [("enc", "W_a")]

    def n(self, name: str) -> str:
        return self.prefix + name

    def param_shapes(self) -> dict[str, tuple]:
        D, H = self.config.emb_dim, self.config.hidden
        shapes = {"E_in": (len(self.in_vocab), D), "E_out": (len(self.out_vocab), D)}
        for enc, attn in self.source_specs():
            for d in ("fwd", "bwd"):
                shapes[f"{enc}.{d}.Wx"] = (D, 4 * H)
                shapes[f"{enc}.{d}.Wh"] = (H, 4 * H)
                shapes[f"{enc}.{d}.b"] = (4 * H,)
            shapes[attn] = (H, 2 * H)
        n_src = len(self.source_specs())
        shapes["W_init"] = (2 * H * n_src, H)
        shapes["b_init"] = (H,)
        shapes["dec.Wx"] = (D + 2 * H, 4 * H)
        shapes["dec.Wh"] = (H, 4 * H)
        shapes["dec.b"] = (4 * H,)
        shapes["W_o"] = (3 * H, len(self.out_vocab))
        return {self.n(k): v for k, v in shapes.items()}

    def init_params(self, params: ParamStore, rng: np.random.Generator) -> None:
        for name, shape in self.param_shapes().items():
            uniform_init(params, name, shape, rng, self.config.init_scale)

    def own_params(self) -> dict[str, np.ndarray]:
        return {k: self.params[k] for k in self.param_shapes()}

    # -------------------------------------------------------------- encoding

    def source_tokens(self, u: Utterance, m: MentionList, f: Optional[Utterance]) -> list[tuple[str, ...]]:
        return [tuple(u.tokens) + m.serialize()]

    def _encode_tokens(self, P, enc: str, tokens: Sequence[str]):
        ids = self.in_vocab.ids(tokens)
        X = F.embed(P[self.n("E_in")], ids)
        fwd = F.lstm_sequence(X, P[self.n(f"{enc}.fwd.Wx")], P[self.n(f"{enc}.fwd.Wh")], P[self.n(f"{enc}.fwd.b")])
        bwd = F.lstm_sequence(X, P[self.n(f"{enc}.bwd.Wx")], P[self.n(f"{enc}.bwd.Wh")], P[self.n(f"{enc}.bwd.b")],
                              reverse=True)
        H = F.concat([fwd, bwd], axis=-1)
        summary = F.concat([F.row(fwd, len(tokens) - 1), F.row(bwd, 0)])
        return H, summary

    def encode(self, P, u: Utterance, m: MentionList, f: Optional[Utterance] = None) -> Context:
        toks = self.source_tokens(u, m, f)
        sources, summaries = [], []
        for (enc, attn), st in zip(self.source_specs(), toks):
            H, summary = self._encode_tokens(P, enc, st)
            sources.append(Source(enc, tuple(st), H, attn))
            summaries.append(summary)
        summary = summaries[0] if len(summaries) == 1 else F.concat(summaries)
        s0 = F.tanh(F.affine(summary, P[self.n("W_init")], P[self.n("b_init")]))
        init = F.concat([s0, np.zeros(self.config.hidden)])
        return self._context(sources, init)

    def _context(self, sources: list[Source], init) -> Context:
        V = len(self.out_vocab)
        surface = list(self.out_vocab.tokens)
        index = {t: i for i, t in enumerate(surface)}
        routes = list(range(V))
        for src in sources:
            for tok in src.tokens:
                if tok not in index:
                    index[tok] = len(surface)
                    surface.append(tok)
                routes.append(index[tok])
        proj = np.zeros((len(routes), len(surface)))
        proj[np.arange(len(routes)), routes] = 1.0
        input_ids = np.array([self.out_vocab.id(t) for t in surface], dtype=np.int64)
        return Context(sources, init, surface, index, proj, input_ids, V)

    # -------------------------------------------------------------- decoding

    def step(self, P, ctx: Context, s):
        """Logits over (V_out ++ copy positions of every source) and context vector."""
        scores, summaries = [], []
        for src in ctx.sources:
            a = F.bilinear(s, P[self.n(src.attn)], src.H)
            scores.append(a)
            summaries.append(F.matmul(F.softmax(a), src.H))
        c = summaries[0] if len(summaries) == 1 else F.add_n(summaries)
        gen = F.matmul(F.concat([s, c]), P[self.n("W_o")])
        return F.concat([gen] + scores), c

    def attention(self, P, ctx: Context, s) -> list[np.ndarray]:
        return [F._softmax(F.value(F.bilinear(s, P[self.n(src.attn)], src.H))) for src in ctx.sources]

    def advance(self, P, ctx: Context, hc, token_input_ids, c):
        x = F.concat([F.embed(P[self.n("E_out")], token_input_ids), c])
        return F.lstm_step(x, hc, P[self.n("dec.Wx")], P[self.n("dec.Wh")], P[self.n("dec.b")])

    def _hd(self):
        return self.config.hidden

    # ---------------------------------------------------------- likelihoods

    def sequence_logprob(self, P, ctx: Context, tokens: Sequence[str], include_eos: bool = True):
        """Teacher-forced sum of log surface-token probabilities (tape or raw)."""
        hc = ctx.init
        terms = []
        targets = list(tokens) + ([Vocabulary.EOS] if include_eos else [])
        for j, tok in enumerate(targets):
            if ctx.target_surface(tok) == ctx.surface_index[Vocabulary.UNK] and tok != Vocabulary.UNK:
                ctx.unk_warnings += 1
            logits, c = self.step(P, ctx, F.slice_last(hc, 0, self._hd()))
            terms.append(F.log_marginal(logits, ctx.logit_index(tok)))
            if j < len(tokens) and (j + 1 < len(targets)):
                hc = self.advance(P, ctx, hc, ctx.input_ids[ctx.target_surface(tok)], c)
        return F.add_n(terms)

    def loss(self, P, u, m, y: LogicalForm, f=None):
        ctx = self.encode(P, u, m, f)
        lp = self.sequence_logprob(P, ctx, y.tokens)
        self.unk_targets += ctx.unk_warnings
        return F.scale(lp, -1.0)

    def loss_and_grads(self, u, m, y: LogicalForm, f=None) -> tuple[float, dict]:
        tape = Tape()
        loss = self.loss(tape.bind(self.params.values), u, m, y, f)
        grads = tape.backward(loss)
        return F.as_float(loss), {k: g for k, g in grads.items() if k.startswith(self.prefix)}

    def prepare(self, u, m, f=None) -> Context:
        return self.encode(self.params.values, u, m, f)

    def _surface_logprobs(self, logits: np.ndarray, ctx: Context) -> np.ndarray:
        mx = logits.max(axis=-1, keepdims=True)
        e = np.exp(logits - mx)
        z = e.sum(axis=-1, keepdims=True)
        with np.errstate(divide="ignore"):
            return np.log(e @ ctx.proj) - np.log(z)

    def score_ctx(self, ctx: Context, lfs: Sequence, include_eos: bool = True) -> np.ndarray:
        """Batched raw log-likelihoods of token sequences under one context."""
        P = self.params.values
        seqs = [tuple(lf.tokens) if isinstance(lf, LogicalForm) else tuple(lf) for lf in lfs]
        B = len(seqs)
        if B == 0:
            return np.zeros(0)
        eos = ctx.surface_index[Vocabulary.EOS]
        steps = [
            [ctx.target_surface(t) for t in s] + ([eos] if include_eos else []) for s in seqs
        ]
        lengths = np.array([len(s) for s in steps])
        L = int(lengths.max()) if B else 0
        targets = np.full((B, max(L, 1)), eos, dtype=np.int64)
        for b, s in enumerate(steps):
            targets[b, : len(s)] = s
        total = np.zeros(B)
        hc = np.tile(ctx.init, (B, 1))
        H = self._hd()
        for j in range(L):
            logits, c = self.step(P, ctx, hc[:, :H])
            lp = self._surface_logprobs(logits, ctx)
            live = lengths > j
            total[live] += lp[live, targets[live, j]]
            if j + 1 < L:
                hc = self.advance(P, ctx, hc, ctx.input_ids[targets[:, j]], c)
        return total

    def logprob(self, u, m, y, f=None, include_eos: bool = True) -> float:
        return float(self.score_ctx(self.prepare(u, m, f), [y], include_eos)[0])

    def step_distribution(self, ctx: Context, prefix: Sequence[str] = ()) -> np.ndarray:
        """Joint softmax over routes after consuming ``prefix`` (for inspection)."""
        P = self.params.values
        hc = ctx.init
        for tok in prefix:
            _, c = self.step(P, ctx, hc[: self._hd()])
            hc = self.advance(P, ctx, hc, ctx.input_ids[ctx.target_surface(tok)], c)
        logits, _ = self.step(P, ctx, hc[: self._hd()])
        return F._softmax(logits)

    # ---------------------------------------------------- sampling / search

    def sample_ctx(self, ctx: Context, rng: np.random.Generator, n: int = 1,
                   max_len: Optional[int] = None, greedy: bool = False) -> list[tuple[str, ...]]:
        P = self.params.values
        max_len = max_len or self.config.max_len
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        eos = ctx.surface_index[Vocabulary.EOS]
        H = self._hd()
        seqs: list[list[int]] = [[] for _ in range(n)]
        alive = np.arange(n)
        hc = np.tile(ctx.init, (n, 1))
        for _ in range(max_len):
            logits, c = self.step(P, ctx, hc[:, :H])
            lp = self._surface_logprobs(logits, ctx)
            if greedy:
                choice = np.argmax(lp, axis=1)
            else:
                probs = np.exp(lp)
                cum = np.cumsum(probs, axis=1)
                r = rng.random(len(alive)) * cum[:, -1]
                choice = np.minimum((cum <= r[:, None]).sum(axis=1), probs.shape[1] - 1)
            keep = choice != eos
            for row, tok in zip(alive[keep], choice[keep]):
                seqs[row].append(int(tok))
            if not keep.any():
                alive = alive[keep]
                break
            hc = self.advance(P, ctx, hc[keep], ctx.input_ids[choice[keep]], c[keep])
            alive = alive[keep]
        return [tuple(ctx.surface[i] for i in s) for s in seqs]

    def sample(self, u, m, rng, f=None, max_len: Optional[int] = None, n: Optional[int] = None,
               greedy: bool = False):
        ctx = self.prepare(u, m, f)
        seqs = self.sample_ctx(ctx, rng, n or 1, max_len, greedy)
        out = [as_lf(s) for s in seqs]
        return out if n is not None else out[0]

    def greedy(self, u, m, f=None, max_len: Optional[int] = None):
        return self.beam_search(u, m, beam_width=1, f=f, max_len=max_len)[0][0]

    def beam_ctx(self, ctx: Context, beam_width: int, max_len: Optional[int] = None):
        if beam_width < 1:
            raise ValueError("beam width must be >= 1")
        P = self.params.values
        max_len = max_len or self.config.max_len
        eos = ctx.surface_index[Vocabulary.EOS]
        H = self._hd()
        live: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
        states = ctx.init[None, :]
        finished: list[tuple[float, tuple[int, ...]]] = []
        for step in range(max_len + 1):
            logits, c = self.step(P, ctx, states[:, :H])
            lp = self._surface_logprobs(logits, ctx)
            cands = []
            for bi, (score, seq) in enumerate(live):
                row = score + lp[bi]
                if step == max_len:
                    # length cap reached: only termination is allowed
                    cands.append((row[eos], seq + (eos,), bi))
                    continue
                for t in np.argsort(-row, kind="stable")[:beam_width]:
                    if np.isfinite(row[t]):
                        cands.append((row[t], seq + (int(t),), bi))
            cands.sort(key=lambda x: (-x[0], x[1]))
            top = cands[:beam_width]
            new_live, parents, toks = [], [], []
            for score, seq, bi in top:
                if seq[-1] == eos:
                    finished.append((score, seq[:-1]))
                else:
                    new_live.append((score, seq))
                    parents.append(bi)
                    toks.append(seq[-1])
            finished.sort(key=lambda x: (-x[0], x[1]))
            if not new_live:
                break
            if len(finished) >= beam_width and finished[beam_width - 1][0] >= new_live[0][0]:
                break
            pa = np.array(parents)
            states = self.advance(P, ctx, states[pa], ctx.input_ids[np.array(toks)], c[pa])
            live = new_live
        finished.sort(key=lambda x: (-x[0], x[1]))
        return [(as_lf(tuple(ctx.surface[i] for i in seq)), float(score)) for score, seq in finished[:beam_width]]

    def beam_search(self, u, m, beam_width: int = 5, f=None, max_len: Optional[int] = None):
        return self.beam_ctx(self.prepare(u, m, f), beam_width, max_len)

    def attention_dump(self, u, m, f=None, max_len: Optional[int] = None) -> dict:
        """Greedy decode, recording attention weights over every source per step."""
        P = self.params.values
        ctx = self.prepare(u, m, f)
        y = self.greedy(u, m, f, max_len)
        hc = ctx.init
        steps = []
        for tok in list(y.tokens) + [Vocabulary.EOS]:
            s = hc[: self._hd()]
            weights = self.attention(P, ctx, s)
            steps.append({
                "output": tok,
                **{src.name: [float(w) for w in wt] for src, wt in zip(ctx.sources, weights)},
            })
            if tok == Vocabulary.EOS:
                break
            _, c = self.step(P, ctx, s)
            hc = self.advance(P, ctx, hc, ctx.input_ids[ctx.target_surface(tok)], c)
        return {
            "sources": {src.name: list(src.tokens) for src in ctx.sources},
            "prediction": list(y.tokens),
            "steps": steps,
        }


def as_lf(tokens: Sequence[str]) -> LogicalForm:
    return LogicalForm.unchecked(tokens)
