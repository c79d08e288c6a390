"""Command-line entry point: ``fbparse <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from .checkpoint import load_parser, save_parser
from .checks import parser_grad_check
from .data import build_vocabs, default_max_len
from .evaluation import breakdown_by_corrections, exact_match_accuracy, mean_predicates
from .experiment import RESULT_FIELDS, fixed_test_questions, prefix_records, rows_to_csv, run_experiment
from .inference import MHConfig, MHTrace, mh_chain_diagnostics, mh_map
from .lf import read_records
from .training import TrainingLog, make_parsers, pretrain, train_semisup, training_config_dict
from .world import build_corpus, generate_world

CLI_MODES = {"full": "full", "no-feedback": "no_feedback", "no-feedback-reject": "no_feedback_reject",
             "self-training": "self_training"}


def _config(args) -> config_mod.ExperimentConfig:
    cfg = config_mod.load_config(getattr(args, "config", None), getattr(args, "scale", None))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, root_seed=args.seed, training=replace(cfg.training, seed=args.seed))
    return cfg


def _write(path, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def _load_split(data_dir, split):
    return read_records(Path(data_dir) / f"{split}.jsonl")


def _find(records, record_id):
    for r in records:
        if r.record_id == record_id:
            return r
    raise SystemExit(f"no record with id {record_id!r}")


# ----------------------------------------------------------------- commands


def cmd_init_config(args):
    text = json.dumps(config_mod.DEFAULT_CONFIG, indent=2) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_gen_data(args):
    cfg = _config(args)
    world = generate_world(cfg.world_seed, cfg.world_sizes)
    test_q = fixed_test_questions(cfg, world)
    n_unl = args.unlabeled if args.unlabeled is not None else max(cfg.unlabeled_sizes)
    counts = {"seed_labeled": cfg.seed_labeled, "unlabeled": n_unl, "test": cfg.test_size}
    rng = np.random.default_rng([cfg.root_seed, 1, args.replication])
    corpus = build_corpus(world, counts, cfg.policy, cfg.noise, rng, fixed_test=test_q)
    paths = corpus.write(args.out)
    _write(Path(args.out) / "run_config.json", config_mod.dumps_config(cfg))
    print(json.dumps(corpus.stats["counts"], sort_keys=True))
    return paths


def cmd_pretrain(args):
    cfg = _config(args)
    seed = _load_split(args.data, "seed")
    unlabeled = _load_split(args.data, "unlabeled")
    world = generate_world(cfg.world_seed, cfg.world_sizes)
    in_vocab, out_vocab = build_vocabs(seed, unlabeled)
    pc = replace(cfg.parser, max_len=default_max_len(seed)) if cfg.derive_max_len else cfg.parser
    task, fb = make_parsers("full", in_vocab, out_vocab, pc, seed=cfg.root_seed * 1000)
    _, prop = make_parsers("no_feedback", in_vocab, out_vocab, pc, seed=cfg.root_seed * 1000)
    log = TrainingLog()
    pretrain(seed, task, fb, cfg.training, world, cfg.policy, log=log)
    pretrain(seed, task, prop, cfg.training, world, cfg.policy, train_task=False, log=log)
    out = Path(args.out)
    save_parser(out / "task.json", task)
    save_parser(out / "feedback.json", fb)
    save_parser(out / "proposer.json", prop)
    _write(out / "pretrain_log.csv", log.to_csv())
    _write(out / "run_config.json", config_mod.dumps_config(cfg))
    print(f"seed loss {log.losses('pretrain', 'task')[0]:.4f} -> {log.losses('pretrain', 'task')[-1]:.4f}")


def cmd_train(args):
    cfg = _config(args)
    mode = CLI_MODES[args.mode]
    records = _load_split(args.data, "unlabeled")
    if args.unlabeled is not None:
        records = prefix_records(records, args.unlabeled)
    seed = _load_split(args.data, "seed")
    init = Path(args.init)
    task = load_parser(init / "task.json")
    slot = {"full": "feedback.json", "self_training": None}.get(mode, "proposer.json")
    fb = load_parser(init / slot) if slot else None
    tcfg = replace(cfg.training, mode=mode)
    out = Path(args.out)

    def save_epoch(epoch, t, f):
        save_parser(out / "checkpoints" / f"epoch{epoch:02d}_task.json", t)
        if f is not None:
            save_parser(out / "checkpoints" / f"epoch{epoch:02d}_{slot}", f)

    log = TrainingLog()
    train_semisup(records, task, fb, tcfg, seed_set=seed, log=log, epoch_callback=save_epoch)
    save_parser(out / "task.json", task)
    if fb is not None:
        save_parser(out / slot, fb)
    _write(out / "train_log.csv", log.to_csv())
    _write(out / "diagnostics.json", json.dumps(log.diagnostics, sort_keys=True) + "\n")
    _write(out / "training_config.json", json.dumps(training_config_dict(tcfg), indent=2, sort_keys=True) + "\n")
    skipped = [r["skipped"] for r in log.rows if r["parser"] == "task"]
    print(f"mode {mode}: {len(records)} records, skipped per epoch {skipped}")


def cmd_eval(args):
    parser = load_parser(args.checkpoint)
    split = "test" if args.split == "test" else "unlabeled"
    records = _load_split(args.data, split)
    if args.unlabeled is not None and split == "unlabeled":
        records = prefix_records(records, args.unlabeled)
    if args.split == "breakdown":
        rows = breakdown_by_corrections(parser, records, args.beam)
        rows = [{"split": "unlabeled", **r} for r in rows]
    else:
        acc = exact_match_accuracy(parser, records, args.beam)
        rows = [{"split": split, "accuracy": acc, "mean_gold_lf_length": mean_predicates(records),
                 "correction_bucket": None, "n": len(records)}]
    for r in rows:
        r.setdefault("correction_bucket", None)
        r.update({"mode": args.label, "unlabeled_size": args.unlabeled or "", "replication": "", "status": "ok"})
    text = rows_to_csv(rows, RESULT_FIELDS)
    if args.out:
        _write(args.out, text)
    sys.stdout.write(text)


def cmd_experiment(args):
    cfg = _config(args)
    if args.replications is not None:
        cfg = replace(cfg, replications=args.replications)
    out = args.out or cfg.output_dir

    def progress(rep, size, mode, rows):
        if not args.quiet:
            acc = [r["accuracy"] for r in rows if (r["replication"], r["unlabeled_size"], r["mode"]) == (rep, size, mode)
                   and r.get("split") == "test" and not r.get("correction_bucket")]
            print(f"rep {rep} size {size} {mode}: test {acc[0] if acc and acc[0] is not None else 'error'}",
                  file=sys.stderr, flush=True)

    res = run_experiment(cfg, out, progress=progress, save_checkpoints=args.checkpoints)
    print(f"{len(res.rows)} rows -> {Path(out) / 'results.csv'}")


def cmd_gradcheck(args):
    worst = 0.0
    for kind in args.parser:
        r = parser_grad_check(kind, seed=args.seed, num_coords=args.coords)
        worst = max(worst, r["max_relative_error"])
        print(f"{kind}: max relative error {r['max_relative_error']:.3e} over {r['num_parameters']} parameters "
              f"({r['seconds']:.1f}s)")
    ok = worst < args.tolerance
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_mh_debug(args):
    cfg = _config(args)
    r = _find(_load_split(args.data, args.split), args.record)
    task = load_parser(Path(args.init) / "task.json")
    fb = load_parser(Path(args.init) / args.proposer)
    mh = MHConfig(args.iterations or cfg.training.mh.num_iterations, not args.no_reject,
                  cfg.training.mh.max_resample_attempts)
    trace = MHTrace()
    rng = np.random.default_rng([cfg.root_seed, 7])
    y = mh_map(r.utterance, r.mentions, r.feedback, r.predicted_lf, task, fb, mh, rng, trace)
    d = mh_chain_diagnostics(trace, r.record_id)
    d["result"] = None if not y else " ".join(y.tokens)
    d["gold"] = r.gold_lf.text if r.gold_lf is not None else None
    d["predicted"] = r.predicted_lf.text if r.predicted_lf is not None else None
    d["feedback"] = r.feedback.text if r.feedback is not None else None
    text = json.dumps(d, indent=2, sort_keys=True) + "\n"
    if args.out:
        _write(args.out, text)
    sys.stdout.write(text)


def cmd_dump_attention(args):
    parser = load_parser(args.checkpoint)
    r = _find(_load_split(args.data, args.split), args.record)
    f = r.feedback if parser.uses_feedback else None
    dump = parser.attention_dump(r.utterance, r.mentions, f)
    dump["record_id"] = r.record_id
    text = json.dumps(dump, indent=2) + "\n"
    if args.out:
        _write(args.out, text)
    sys.stdout.write(text)


# ------------------------------------------------------------------ parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbparse", description="Semantic parsing from natural-language feedback.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", help="JSON config (see `fbparse init-config`)")
        p.add_argument("--scale", choices=config_mod.SCALES, help="override the config's scale")
        p.add_argument("--seed", type=int, help="root seed")
        if data:
            p.add_argument("--data", required=True, help="directory written by gen-data")

    p = sub.add_parser("init-config", help="print the default config (paper and desk values side by side)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("gen-data", help="generate seed / unlabeled / test JSONL files")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--unlabeled", type=int, help="unlabeled questions (default: largest configured size)")
    p.add_argument("--replication", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="supervised pre-training on the seed set")
    common(p, data=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="semi-supervised training from feedback")
    common(p, data=True)
    p.add_argument("--init", required=True, help="directory written by pretrain")
    p.add_argument("--mode", choices=sorted(CLI_MODES), default="full")
    p.add_argument("--unlabeled", type=int, help="use only the first N unlabeled questions")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="exact-match accuracy of a task-parser checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("test", "unlabeled", "breakdown"), default="test")
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--unlabeled", type=int, help="first N unlabeled questions (as used in training)")
    p.add_argument("--label", default="", help="value for the mode column")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run the full mode x size x replication grid")
    common(p)
    p.add_argument("--out")
    p.add_argument("--replications", type=int)
    p.add_argument("--checkpoints", action="store_true", help="also save pre-trained checkpoints")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("gradcheck", help="finite-difference check of both parser losses")
    p.add_argument("--parser", nargs="+", choices=("task", "feedback"), default=["task", "feedback"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coords", type=int, default=300)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("mh-debug", help="MH chain diagnostics on one feedback record")
    common(p, data=True)
    p.add_argument("--init", required=True, help="directory with task.json and the proposer checkpoint")
    p.add_argument("--proposer", default="feedback.json")
    p.add_argument("--record", required=True)
    p.add_argument("--split", default="unlabeled")
    p.add_argument("--iterations", type=int)
    p.add_argument("--no-reject", action="store_true", help="do not redraw proposals equal to y-hat")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mh_debug)

    p = sub.add_parser("dump-attention", help="attention weights of a greedy decode as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--record", required=True)
    p.add_argument("--split", default="unlabeled")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dump_attention)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    rc = args.func(args)
    return rc if isinstance(rc, int) else 0


if __name__ == "__main__":
    sys.exit(main())
