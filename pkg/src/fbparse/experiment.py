"""The mode x unlabeled-size x replication grid and its CSV outputs.

Each replication draws fresh seed and unlabeled questions against one fixed
test set. Unlabeled sizes within a replication are nested prefixes of the
largest draw, and pre-training is shared by every mode and size of the
replication, so cells differ only in what happens after pre-training.
"""
from __future__ import annotations

import csv
import io
import json
import time
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .checkpoint import save_parser
from .config import ExperimentConfig, dumps_config
from .data import build_vocabs, clone_parser, default_max_len
from .evaluation import breakdown_by_corrections, exact_match_accuracy, mean_predicates, predictions
from .training import TrainingLog, make_parsers, pretrain, train_semisup
from .world import build_corpus, generate_questions, generate_world
from .world.corpus import Corpus, questions_of

RESULT_FIELDS = ("mode", "unlabeled_size", "replication", "split", "accuracy", "mean_gold_lf_length",
                 "correction_bucket", "n", "status")
MEAN_FIELDS = ("mode", "unlabeled_size", "split", "correction_bucket", "accuracy_mean", "accuracy_sd",
               "mean_gold_lf_length_mean", "replications")


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)  # shortest text that round-trips exactly
    return str(v)


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def read_results(path) -> list:
    """results.csv back into typed dicts (blank cells become None)."""
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            row = {k: (v if v != "" else None) for k, v in r.items()}
            row["unlabeled_size"] = int(row["unlabeled_size"])
            row["replication"] = int(row["replication"])
            for k in ("accuracy", "mean_gold_lf_length"):
                row[k] = float(row[k]) if row[k] is not None else None
            row["n"] = int(row["n"]) if row["n"] is not None else None
            out.append(row)
    return out


def prefix_records(records, n_questions: int) -> list:
    """Feedback records of the first ``n_questions`` questions."""
    keep = set(questions_of(records)[:n_questions])
    return [r for r in records if r.record_id.split(".")[0] in keep]


def fixed_test_questions(cfg: ExperimentConfig, world) -> list:
    rng = np.random.default_rng([cfg.root_seed, 0])
    return generate_questions(world, cfg.test_size, rng, cfg.policy, start_id=0)


def replication_corpus(cfg: ExperimentConfig, world, test_q, rep: int) -> Corpus:
    rng = np.random.default_rng([cfg.root_seed, 1, rep])
    counts = {"seed_labeled": cfg.seed_labeled, "unlabeled": max(cfg.unlabeled_sizes), "test": cfg.test_size}
    return build_corpus(world, counts, cfg.policy, cfg.noise, rng, fixed_test=test_q)


def audit_disjoint(corpus: Corpus) -> None:
    key = lambda r: (r.utterance.tokens, r.mentions.serialize())
    test = {key(r) for r in corpus.test}
    for split in ("seed", "unlabeled"):
        if test & {key(r) for r in getattr(corpus, split)}:
            raise AssertionError(f"test set overlaps the {split} set")


def evaluate_cell(task, test, unlabeled, beam_width: int = 1) -> list:
    """(2 + number of buckets) result rows for one trained task parser."""
    rows = []
    tp = predictions(task, test, beam_width)
    rows.append({"split": "test", "accuracy": exact_match_accuracy(task, test, preds=tp),
                 "mean_gold_lf_length": mean_predicates(test), "n": len(test)})
    up = predictions(task, unlabeled, beam_width)
    rows.append({"split": "unlabeled", "accuracy": exact_match_accuracy(task, unlabeled, preds=up),
                 "mean_gold_lf_length": mean_predicates(unlabeled), "n": len(unlabeled)})
    for b in breakdown_by_corrections(task, unlabeled, preds=up):
        rows.append({"split": "unlabeled", **b})
    return rows


@dataclass
class ExperimentResult:
    rows: list
    means: list
    logs: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    seconds: float = 0.0


def cell_means(rows) -> list:
    groups: dict = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        k = (r["mode"], r["unlabeled_size"], r["split"], r.get("correction_bucket") or "")
        groups.setdefault(k, []).append(r)
    out = []
    for (mode, size, split, bucket), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], kv[0][3])):
        acc = np.array([r["accuracy"] for r in rs], dtype=float)
        out.append({
            "mode": mode, "unlabeled_size": size, "split": split, "correction_bucket": bucket,
            "accuracy_mean": float(acc.mean()),
            "accuracy_sd": float(acc.std(ddof=1)) if len(acc) > 1 else 0.0,
            "mean_gold_lf_length_mean": float(np.mean([r["mean_gold_lf_length"] for r in rs])),
            "replications": len(rs),
        })
    return out


def run_replication(cfg: ExperimentConfig, world, test_q, rep: int, progress: Optional[Callable] = None,
                    checkpoint_dir: Optional[Path] = None):
    corpus = replication_corpus(cfg, world, test_q, rep)
    audit_disjoint(corpus)
    in_vocab, out_vocab = build_vocabs(corpus.seed, corpus.unlabeled)
    pc = cfg.parser
    if cfg.derive_max_len:
        pc = replace(pc, max_len=default_max_len(corpus.seed))
    tcfg = replace(cfg.training, seed=cfg.root_seed * 1000 + rep)
    init_seed = cfg.root_seed * 1000 + 2 * rep
    task0, fb0 = make_parsers("full", in_vocab, out_vocab, pc, seed=init_seed)
    _, prop0 = make_parsers("no_feedback", in_vocab, out_vocab, pc, seed=init_seed)
    pre_log = TrainingLog()
    need_fb = "full" in cfg.modes
    need_prop = any(m in ("no_feedback", "no_feedback_reject") for m in cfg.modes)
    pretrain(corpus.seed, task0, fb0 if need_fb else None, tcfg, world, cfg.policy, log=pre_log)
    if need_prop:
        pretrain(corpus.seed, task0, prop0, tcfg, world, cfg.policy, train_task=False, log=pre_log)
    if checkpoint_dir is not None:
        save_parser(checkpoint_dir / f"rep{rep}_pretrained_task.json", task0)
    rows, logs = [], {f"rep{rep}_pretrain": pre_log}
    for size in cfg.unlabeled_sizes:
        unlabeled = prefix_records(corpus.unlabeled, size)
        for mode in cfg.modes:
            base = {"mode": mode, "unlabeled_size": size, "replication": rep}
            try:
                task = clone_parser(task0)
                slot = {"full": fb0, "self_training": None}.get(mode, prop0)
                fb = clone_parser(slot) if slot is not None else None
                log = TrainingLog()
                train_semisup(unlabeled, task, fb, replace(tcfg, mode=mode), seed_set=corpus.seed, log=log)
                logs[f"rep{rep}_{mode}_{size}"] = log
                for r in evaluate_cell(task, corpus.test, unlabeled, cfg.beam_width):
                    rows.append({**base, "correction_bucket": None, **r, "status": "ok"})
            except Exception as e:  # one failed cell must not sink the grid
                rows.append({**base, "split": "test", "status": f"error: {type(e).__name__}: {e}"})
                traceback.print_exc()
            if progress:
                progress(rep, size, mode, rows)
    return rows, logs, corpus.stats


def run_experiment(cfg: ExperimentConfig, out_dir=None, progress: Optional[Callable] = None,
                   save_checkpoints: bool = False) -> ExperimentResult:
    """Run the whole grid; writes results.csv, means.csv and logs when ``out_dir`` is given."""
    t0 = time.perf_counter()
    world = generate_world(cfg.world_seed, cfg.world_sizes)
    test_q = fixed_test_questions(cfg, world)
    out = Path(out_dir) if out_dir is not None else None
    ckpt = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(dumps_config(cfg))
        if save_checkpoints:
            ckpt = out / "checkpoints"
    rows, logs, stats = [], {}, {}
    for rep in range(cfg.replications):
        r_rows, r_logs, r_stats = run_replication(cfg, world, test_q, rep, progress, ckpt)
        rows.extend(r_rows)
        logs.update(r_logs)
        stats[f"rep{rep}"] = r_stats
    res = ExperimentResult(rows, cell_means(rows), logs, stats, time.perf_counter() - t0)
    if out is not None:
        write_outputs(res, out)
    return res


def write_outputs(res: ExperimentResult, out: Path) -> None:
    (out / "results.csv").write_text(rows_to_csv(res.rows, RESULT_FIELDS))
    (out / "means.csv").write_text(rows_to_csv(res.means, MEAN_FIELDS))
    logs = out / "logs"
    logs.mkdir(exist_ok=True)
    diagnostics = {}
    for name, log in res.logs.items():
        (logs / f"{name}.csv").write_text(log.to_csv())
        if log.diagnostics:
            diagnostics[name] = [{k: v for k, v in d.items() if k != "score_trajectory"} for d in log.diagnostics]
    (out / "diagnostics.json").write_text(json.dumps(diagnostics, sort_keys=True) + "\n")
    (out / "corpus_stats.json").write_text(json.dumps(res.stats, indent=2, sort_keys=True) + "\n")
    (out / "timing.json").write_text(json.dumps({"seconds": res.seconds}) + "\n")


def mean_accuracy(means, mode: str, size: int, split: str = "test", bucket: str = "") -> Optional[float]:
    for m in means:
        if (m["mode"], m["unlabeled_size"], m["split"], m["correction_bucket"] or "") == (mode, size, split, bucket):
            return m["accuracy_mean"]
    return None
