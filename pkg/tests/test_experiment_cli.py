import csv
import json

import pytest

from conftest import TINY
from fbparse import experiment as ex
from fbparse.checkpoint import load_parser, save_parser
from fbparse.cli import main
from fbparse.config import DEFAULT_CONFIG, ConfigError, from_dict
from fbparse.nn import clip_and_step
from fbparse.parsers import FeedbackParser, ParserConfig
from fbparse.world import generate_world


def tiny(**over):
    raw = json.loads(json.dumps(TINY))
    raw.update(over)
    return from_dict(raw)


def test_row_accounting_one_cell():
    cfg = tiny(modes=["full"], corpus={"seed_labeled": 8, "unlabeled_sizes": [8], "test": 10})
    res = ex.run_experiment(cfg)
    world = generate_world(cfg.world_seed, cfg.world_sizes)
    corpus = ex.replication_corpus(cfg, world, ex.fixed_test_questions(cfg, world), 0)
    buckets = {min(r.num_corrections, 3) for r in corpus.unlabeled if r.num_corrections > 0}
    assert len(res.rows) == 2 + len(buckets)
    assert all(r["status"] == "ok" and 0 <= r["accuracy"] <= 1 for r in res.rows)


def test_means_are_arithmetic_means_and_test_set_disjoint():
    cfg = tiny(replications=2, modes=["full", "self_training"])
    res = ex.run_experiment(cfg)
    for m in res.means:
        accs = [r["accuracy"] for r in res.rows if r["mode"] == m["mode"] and r["unlabeled_size"] == m["unlabeled_size"]
                and r["split"] == m["split"] and (r["correction_bucket"] or "") == m["correction_bucket"]]
        assert m["replications"] == len(accs)
        assert abs(m["accuracy_mean"] - sum(accs) / len(accs)) <= 1e-12
    world = generate_world(cfg.world_seed, cfg.world_sizes)
    test_q = ex.fixed_test_questions(cfg, world)
    for rep in range(2):
        c = ex.replication_corpus(cfg, world, test_q, rep)
        ex.audit_disjoint(c)
        test_ids = {r.record_id for r in c.test}
        assert not test_ids & {r.record_id for r in c.seed + c.unlabeled}


def test_failed_cell_is_recorded_and_run_continues(monkeypatch):
    real = ex.train_semisup

    def flaky(records, task, fb, cfg, **kw):
        if cfg.mode == "self_training":
            raise RuntimeError("boom")
        return real(records, task, fb, cfg, **kw)

    monkeypatch.setattr(ex, "train_semisup", flaky)
    res = ex.run_experiment(tiny(modes=["full", "self_training"], corpus={"seed_labeled": 8, "unlabeled_sizes": [4],
                                                                          "test": 10}))
    bad = [r for r in res.rows if r["mode"] == "self_training"]
    assert len(bad) == 1 and bad[0]["status"].startswith("error: RuntimeError")
    assert any(r["mode"] == "full" and r["status"] == "ok" for r in res.rows)
    assert all(m["mode"] == "full" for m in res.means)


def test_prefix_records_are_nested():
    cfg = tiny()
    world = generate_world(cfg.world_seed, cfg.world_sizes)
    c = ex.replication_corpus(cfg, world, ex.fixed_test_questions(cfg, world), 0)
    small, big = ex.prefix_records(c.unlabeled, 4), ex.prefix_records(c.unlabeled, 8)
    assert small == big[:len(small)]
    assert len({r.record_id.split(".")[0] for r in big}) == 8


def test_config_side_by_side_and_validation():
    assert DEFAULT_CONFIG["training"]["learning_rate"] == {"paper": 1e-4, "desk": 5e-3}
    assert DEFAULT_CONFIG["parser"]["emb_dim"] == {"paper": 300, "desk": 64}
    paper = from_dict({}, "paper")
    assert (paper.seed_labeled, paper.unlabeled_sizes, paper.test_size, paper.replications) == \
        (300, (300, 500, 1000, 1700), 1285, 10)
    desk = from_dict({})
    assert (desk.seed_labeled, desk.unlabeled_sizes, desk.test_size, desk.replications) == (50, (50, 100, 200, 300), 200, 3)
    with pytest.raises(ConfigError):
        from_dict({"training": {"learnign_rate": 1}})
    with pytest.raises(ConfigError):
        from_dict({"replications": 0})
    with pytest.raises(ConfigError):
        from_dict({}, "laptop")


def test_checkpoint_round_trip(tmp_path):
    from fbparse.checks import EXAMPLES, example_vocabs
    from fbparse.lf import LogicalForm, MentionList, Utterance
    in_v, out_v = example_vocabs()
    p = FeedbackParser(in_v, out_v, ParserConfig(6, 5, 0.3, 10), seed=3)
    u, _, y, f = EXAMPLES[0]
    u, y, f = Utterance.from_text(u), LogicalForm.from_text(y), Utterance.from_text(f)
    _, g = p.loss_and_grads(u, MentionList(), y, f)
    clip_and_step(p.params, g)
    save_parser(tmp_path / "p.json", p)
    q = load_parser(tmp_path / "p.json")
    assert type(q) is FeedbackParser and q.params.step_count == 1
    for k in p.params:
        assert p.params[k].tobytes() == q.params[k].tobytes()
        assert p.params.m[k].tobytes() == q.params.m[k].tobytes()
    assert q.in_vocab == in_v and q.out_vocab == out_v
    assert q.logprob(u, MentionList(), y, f) == p.logprob(u, MentionList(), y, f)


def run_pipeline(root, config):
    c = ["--config", str(config)]
    data, pre, tr = root / "data", root / "pre", root / "train"
    assert main(["gen-data", *c, "--out", str(data)]) in (0, None)
    assert main(["pretrain", *c, "--data", str(data), "--out", str(pre)]) in (0, None)
    assert main(["train", *c, "--data", str(data), "--init", str(pre), "--mode", "no-feedback-reject",
                 "--unlabeled", "4", "--out", str(tr)]) in (0, None)
    for split in ("test", "unlabeled", "breakdown"):
        assert main(["eval", "--data", str(data), "--checkpoint", str(tr / "task.json"), "--split", split,
                     "--unlabeled", "4", "--out", str(root / f"eval_{split}.csv")]) in (0, None)
    assert main(["experiment", *c, "--out", str(root / "exp"), "--quiet"]) in (0, None)
    rid = json.loads((data / "unlabeled.jsonl").read_text().splitlines()[0])["record_id"]
    assert main(["mh-debug", *c, "--data", str(data), "--init", str(pre), "--record", rid,
                 "--out", str(root / "mh.json")]) in (0, None)
    assert main(["dump-attention", "--data", str(data), "--checkpoint", str(pre / "feedback.json"),
                 "--record", rid, "--out", str(root / "att.json")]) in (0, None)
    return sorted(p for p in root.rglob("*") if p.suffix in (".csv", ".jsonl", ".json") and p.is_file())


def test_cli_runs_are_byte_identical(tmp_path, tiny_config, capsys):
    a = run_pipeline(tmp_path / "a", tiny_config)
    b = run_pipeline(tmp_path / "b", tiny_config)
    rel = lambda paths, root: [p.relative_to(root) for p in paths]
    assert rel(a, tmp_path / "a") == rel(b, tmp_path / "b")
    csvs = [p for p in a if p.suffix == ".csv"]
    assert len(csvs) >= 8
    for pa, pb in zip(a, b):
        if pa.name != "timing.json":
            assert pa.read_bytes() == pb.read_bytes(), pa
    with open(tmp_path / "a" / "exp" / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(ex.RESULT_FIELDS)
    diag = json.loads((tmp_path / "a" / "mh.json").read_text())
    assert {"record_id", "acceptance_rate", "distinct_parses", "best_score", "returned_no_sample"} <= set(diag)
    att = json.loads((tmp_path / "a" / "att.json").read_text())
    assert set(att["sources"]) == {"enc", "fenc"}


def test_cli_gradcheck_and_init_config(tmp_path, capsys):
    assert main(["gradcheck", "--parser", "task", "--coords", "20"]) == 0
    assert "PASS" in capsys.readouterr().out
    main(["init-config", "--out", str(tmp_path / "c.json")])
    back = json.loads((tmp_path / "c.json").read_text())
    assert back["corpus"]["test"] == {"paper": 1285, "desk": 200}
    assert from_dict(back, "desk") == from_dict({}, "desk")


def test_cli_rejects_unknown_mode(tmp_path):
    with pytest.raises(SystemExit):
        main(["train", "--data", "x", "--init", "y", "--mode", "oracle", "--out", str(tmp_path)])
