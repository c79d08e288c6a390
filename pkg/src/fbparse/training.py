"""Supervised pre-training and the hard-EM loop over feedback records."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .inference import NO_SAMPLE, MHConfig, MHTrace, mh_chain_diagnostics, mh_map
from .lf import AFFIRMATION, InteractionRecord, LogicalForm
from .nn import clip_and_step
from .parsers import FeedbackParser, TaskArchitectureProposer, TaskParser
from .world.corpus import CorruptionPolicy
from .world.edits import CorruptionError, corrupt
from .world.feedback import NO_NOISE, affirmation, generate_feedback

MODES = ("full", "no_feedback", "no_feedback_reject", "self_training")
LOG_FIELDS = ("phase", "epoch", "parser", "loss", "skipped", "acceptance_rate_mean", "seconds")


@dataclass(frozen=True)
class TrainingConfig:
    pretrain_epochs: int = 20
    semisup_epochs: int = 10
    learning_rate: float = 1e-4
    semisup_learning_rate: Optional[float] = None  # None: same rate as pre-training
    clip_threshold: float = 10.0
    mh: MHConfig = MHConfig()
    mode: str = "full"
    seed: int = 0
    shuffle: bool = True
    corrective_mix: float = 0.5  # share of corrective pairs in feedback-parser pre-training
    feedback_steps: int = 2  # feedback-parser updates per seed record and epoch
    self_training_beam: int = 5
    replay: bool = False  # extra supervised pass over the seed set per semi-supervised epoch
    record_time: bool = False  # wall-clock in the log breaks byte-identical reruns

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.pretrain_epochs < 0 or self.semisup_epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def add(self, phase, epoch, parser, loss, skipped=0, acceptance=None, seconds=None):
        self.rows.append({
            "phase": phase, "epoch": epoch, "parser": parser, "loss": loss, "skipped": skipped,
            "acceptance_rate_mean": acceptance, "seconds": seconds,
        })

    def losses(self, phase: str, parser: str) -> list:
        return [r["loss"] for r in self.rows if r["phase"] == phase and r["parser"] == parser]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in self.rows:
            w.writerow([_cell(r[k]) for k in LOG_FIELDS])
        return buf.getvalue()

    def extend(self, other: "TrainingLog"):
        self.rows.extend(other.rows)
        self.diagnostics.extend(other.diagnostics)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)  # shortest text that round-trips exactly
    return v


def make_rng(cfg: TrainingConfig, *stream) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, *stream])


def sgd_step(parser, cfg: TrainingConfig, u, m, y: LogicalForm, f=None, lr: Optional[float] = None) -> float:
    loss, grads = parser.loss_and_grads(u, m, y, f)
    lr = cfg.learning_rate if lr is None else lr
    clip_and_step(parser.params, grads, lr=lr, clip_threshold=cfg.clip_threshold)
    return loss


def seed_loss(parser, records: Sequence[InteractionRecord]) -> float:
    """Mean NLL of the gold parses (feedback parsers see the affirmation)."""
    f = AFFIRMATION if parser.uses_feedback else None
    total = 0.0
    for r in records:
        ctx = parser.prepare(r.utterance, r.mentions, f)
        total -= float(parser.score_ctx(ctx, [r.gold_lf])[0])
    return total / max(len(records), 1)


def corrective_example(r: InteractionRecord, rng, world, policy: CorruptionPolicy):
    """(feedback, y-hat) for a seed record: affirmation or a synthesized correction."""
    try:
        k = policy.sample_k(r.gold_lf, rng)
        y_hat = corrupt(r.gold_lf, k, rng, world, r.mentions, policy.mention_bias)
    except CorruptionError:
        return affirmation(rng), r.gold_lf
    f, _ = generate_feedback(r.gold_lf, y_hat, NO_NOISE, rng, world)
    return f, y_hat


def feedback_inputs(r: InteractionRecord, rng, cfg: TrainingConfig, world, policy) -> list:
    """Feedback utterances paired with one seed record in one pre-training epoch.

    ``corrective_mix`` of them are synthesized corrections, the rest
    affirmations; ``feedback_steps`` utterances per record and epoch.
    """
    n_corr = int(round(cfg.corrective_mix * cfg.feedback_steps))
    out = [corrective_example(r, rng, world, policy)[0] for _ in range(n_corr)]
    out += [affirmation(rng) for _ in range(cfg.feedback_steps - n_corr)]
    return [out[i] for i in rng.permutation(len(out))]


def pretrain(seed_set: Sequence[InteractionRecord], task: TaskParser, feedback, cfg: TrainingConfig,
             world=None, policy: CorruptionPolicy = CorruptionPolicy(), train_task: bool = True,
             train_feedback: bool = True, log: Optional[TrainingLog] = None):
    """Per-example NLL minimization of both parsers on gold parses."""
    if not seed_set:
        raise ValueError("pre-training needs a non-empty seed set")
    for r in seed_set:
        if r.gold_lf is None:
            raise ValueError(f"seed record {r.record_id} has no gold parse")
    log = log if log is not None else TrainingLog()
    parsers = [(p, name) for p, name, on in ((task, "task", train_task), (feedback, "feedback", train_feedback))
               if on and p is not None]
    for p, name in parsers:
        log.add("pretrain", 0, name, seed_loss(p, seed_set))
    for epoch in range(1, cfg.pretrain_epochs + 1):
        for p, name in parsers:
            t0 = time.perf_counter()
            rng = make_rng(cfg, 1, epoch, 0 if name == "task" else 1)
            order = rng.permutation(len(seed_set)) if cfg.shuffle else np.arange(len(seed_set))
            for i in order:
                r = seed_set[i]
                if p.uses_feedback:
                    for f in feedback_inputs(r, rng, cfg, world, policy):
                        sgd_step(p, cfg, r.utterance, r.mentions, r.gold_lf, f)
                else:
                    sgd_step(p, cfg, r.utterance, r.mentions, r.gold_lf)
            secs = time.perf_counter() - t0 if cfg.record_time else None
            log.add("pretrain", epoch, name, seed_loss(p, seed_set), seconds=secs)
    return task, feedback, log


def infer_latent(record: InteractionRecord, task, feedback, cfg: TrainingConfig, rng,
                 trace: Optional[MHTrace] = None):
    """The latent parse used as the training target for one record, or NO_SAMPLE."""
    if cfg.mode == "self_training":
        beams = task.beam_search(record.utterance, record.mentions, beam_width=cfg.self_training_beam)
        return beams[0][0] if beams else NO_SAMPLE
    mh = cfg.mh
    if cfg.mode == "no_feedback":
        mh = MHConfig(mh.num_iterations, False, mh.max_resample_attempts)
    elif cfg.mode in ("full", "no_feedback_reject"):
        mh = MHConfig(mh.num_iterations, True, mh.max_resample_attempts)
    return mh_map(record.utterance, record.mentions, record.feedback, record.predicted_lf,
                  task, feedback, mh, rng, trace)


def train_semisup(records: Sequence[InteractionRecord], task, feedback, cfg: TrainingConfig,
                  seed_set: Sequence[InteractionRecord] = (), log: Optional[TrainingLog] = None,
                  epoch_callback=None):
    """Hard-EM: infer one latent parse per record, then one step per parser."""
    log = log if log is not None else TrainingLog()
    update_feedback = cfg.mode != "self_training" and feedback is not None
    lr = cfg.learning_rate if cfg.semisup_learning_rate is None else cfg.semisup_learning_rate
    for epoch in range(1, cfg.semisup_epochs + 1):
        t0 = time.perf_counter()
        rng = make_rng(cfg, 2, epoch)
        order = rng.permutation(len(records)) if cfg.shuffle else np.arange(len(records))
        skipped = 0
        rates = []
        for i in order:
            r = records[i]
            trace = MHTrace() if cfg.mode != "self_training" else None
            y_f = infer_latent(r, task, feedback, cfg, rng, trace)
            if trace is not None:
                d = mh_chain_diagnostics(trace, r.record_id)
                rates.append(d["acceptance_rate"])
                if epoch == cfg.semisup_epochs:  # keep the final epoch's chains only
                    log.diagnostics.append(dict(d, epoch=epoch))
            if y_f is NO_SAMPLE:
                skipped += 1
                continue
            sgd_step(task, cfg, r.utterance, r.mentions, y_f, lr=lr)
            if update_feedback:
                sgd_step(feedback, cfg, r.utterance, r.mentions, y_f, r.feedback, lr=lr)
        if cfg.replay and seed_set:
            for i in rng.permutation(len(seed_set)):
                s = seed_set[i]
                sgd_step(task, cfg, s.utterance, s.mentions, s.gold_lf, lr=lr)
        secs = time.perf_counter() - t0 if cfg.record_time else None
        acc = float(np.mean(rates)) if rates else None
        ref = seed_set if seed_set else [r for r in records if r.gold_lf is not None]
        log.add("semisup", epoch, "task", seed_loss(task, ref) if ref else None, skipped, acc, secs)
        if update_feedback:
            log.add("semisup", epoch, "feedback", seed_loss(feedback, ref) if ref else None, skipped, acc, secs)
        if epoch_callback is not None:
            epoch_callback(epoch, task, feedback)
    return task, feedback, log


def make_parsers(mode: str, in_vocab, out_vocab, parser_config, seed: int = 0):
    """Task parser plus the model in the feedback slot for ``mode``."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    task = TaskParser(in_vocab, out_vocab, parser_config, seed=seed)
    if mode == "full":
        fb = FeedbackParser(in_vocab, out_vocab, parser_config, seed=seed + 1)
    elif mode == "self_training":
        fb = None
    else:
        fb = TaskArchitectureProposer(in_vocab, out_vocab, parser_config, seed=seed + 1)
    return task, fb


def training_config_dict(cfg: TrainingConfig) -> dict:
    d = asdict(cfg)
    d["mh"] = asdict(cfg.mh)
    return d
