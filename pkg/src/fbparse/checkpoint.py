"""Parser checkpoints: weights, Adam moments and vocabularies in one JSON file."""
from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import numpy as np

from .lf import Vocabulary
from .nn import ParamStore, dumps_params, loads_params
from .parsers import FeedbackParser, ParserConfig, TaskArchitectureProposer, TaskParser

PARSER_CLASSES = {cls.__name__: cls for cls in (TaskParser, FeedbackParser, TaskArchitectureProposer)}


def checkpoint_text(parser, extra: dict = None) -> str:
    arrays = {}
    for name in parser.params:
        arrays[name] = parser.params[name]
    for name in parser.params:
        arrays["adam.m/" + name] = parser.params.m[name]
        arrays["adam.v/" + name] = parser.params.v[name]
    meta = {
        "class": type(parser).__name__,
        "config": asdict(parser.config),
        "in_vocab": parser.in_vocab.tokens,
        "out_vocab": parser.out_vocab.tokens,
        "step_count": parser.params.step_count,
    }
    if extra:
        meta["extra"] = extra
    return dumps_params(arrays, meta)


def save_parser(path, parser, extra: dict = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(checkpoint_text(parser, extra), encoding="utf-8")


def load_parser(path):
    arrays, meta = loads_params(Path(path).read_text(encoding="utf-8"))
    cls = PARSER_CLASSES.get(meta.get("class"))
    if cls is None:
        raise ValueError(f"{path}: unknown parser class {meta.get('class')!r}")
    store = ParamStore()
    for name, arr in arrays.items():
        if not name.startswith("adam."):
            store[name] = arr
    for name in store:
        store.m[name] = np.array(arrays["adam.m/" + name])
        store.v[name] = np.array(arrays["adam.v/" + name])
    store.step_count = int(meta["step_count"])
    reserved = len(Vocabulary.RESERVED)
    in_vocab = Vocabulary(meta["in_vocab"][reserved:])
    out_vocab = Vocabulary(meta["out_vocab"][reserved:])
    parser = cls(in_vocab, out_vocab, ParserConfig(**meta["config"]), params=store)
    missing = set(parser.param_shapes()) - set(store)
    if missing:
        raise ValueError(f"{path}: checkpoint lacks {sorted(missing)[:3]}")
    return parser
