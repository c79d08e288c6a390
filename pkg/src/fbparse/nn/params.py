"""Named parameter storage, Adam with global-norm clipping, JSON checkpoints."""
from __future__ import annotations

import json
import math
from collections.abc import MutableMapping
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        self.param_name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_threshold: float = 10.0


class ParamStore(MutableMapping):
    """Ordered name -> array map carrying per-parameter Adam moments."""

    def __init__(self, arrays: Optional[Mapping[str, np.ndarray]] = None):
        self.values: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0
        for k, a in (arrays or {}).items():
            self[k] = a

    def __getitem__(self, name):
        return self.values[name]

    def __setitem__(self, name, arr):
        arr = np.array(arr, dtype=np.float64)
        if name in self.values and self.values[name].shape != arr.shape:
            raise ValueError(f"shape change for {name!r}: {self.values[name].shape} -> {arr.shape}")
        self.values[name] = arr
        self.m.setdefault(name, np.zeros_like(arr))
        self.v.setdefault(name, np.zeros_like(arr))

    def __delitem__(self, name):
        del self.values[name], self.m[name], self.v[name]

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def size(self) -> int:
        return sum(a.size for a in self.values.values())

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for k in self.values:
            out.values[k] = self.values[k].copy()
            out.m[k] = self.m[k].copy()
            out.v[k] = self.v[k].copy()
        out.step_count = self.step_count
        return out

    def with_prefix(self, prefix: str) -> dict[str, np.ndarray]:
        return {k: a for k, a in self.values.items() if k.startswith(prefix)}

    def init_uniform(self, name: str, shape, rng: np.random.Generator, scale: float = 0.08):
        self[name] = rng.uniform(-scale, scale, size=shape)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients(grads: Mapping[str, np.ndarray], threshold: float) -> tuple[dict, float]:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
    norm = global_norm(grads)
    if norm > threshold:
        factor = threshold / norm
        return {k: g * factor for k, g in grads.items()}, norm
    return dict(grads), norm


def clip_and_step(params: ParamStore, grads: Mapping[str, np.ndarray], lr: float = 1e-4,
                  clip_threshold: float = 10.0, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> float:
    """Clip to global L2 norm then take one bias-corrected Adam step in place.

    Returns the pre-clip gradient norm.
    """
    unknown = set(grads) - set(params.values)
    if unknown:
        raise KeyError(f"gradients for unknown parameters: {sorted(unknown)}")
    clipped, norm = clip_gradients(grads, clip_threshold)
    params.step_count += 1
    t = params.step_count
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in clipped.items():
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        params.values[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return norm


# ---------------------------------------------------------------- checkpoints


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_params(params: Mapping[str, np.ndarray], meta: Optional[dict] = None) -> str:
    """JSON text mapping name -> {shape, values}; 17 significant digits."""
    parts = []
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.float64)
        vals = ", ".join(_fmt(x) for x in arr.ravel())
        parts.append(f'{json.dumps(name)}: {{"shape": {json.dumps(list(arr.shape))}, "values": [{vals}]}}')
    header = f'"meta": {json.dumps(meta or {}, sort_keys=True)}, '
    return "{" + header + '"params": {' + ", ".join(parts) + "}}\n"


def loads_params(text: str) -> tuple[dict[str, np.ndarray], dict]:
    obj = json.loads(text)
    out = {}
    for name, entry in obj["params"].items():
        shape = tuple(entry["shape"])
        arr = np.array(entry["values"], dtype=np.float64).reshape(shape)
        out[name] = arr
    return out, obj.get("meta", {})


def save_params(path, params: Mapping[str, np.ndarray], meta: Optional[dict] = None) -> None:
    Path(path).write_text(dumps_params(params, meta), encoding="utf-8")


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads_params(Path(path).read_text(encoding="utf-8"))
