from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tape


def grad_check(loss_fn: Callable, params: Mapping[str, np.ndarray], eps: float = 1e-5,
               num_coords: int = 200, seed: int = 0, return_details: bool = False,
               numeric_dtype=np.longdouble):
    """Compare tape gradients of ``loss_fn`` with central differences.

    ``loss_fn(P)`` must accept either tape-bound parameters or the raw arrays.
    Coordinates are sampled uniformly (all of them when there are fewer than
    ``num_coords``). Returns the max of |a - n| / max(|a|, |n|, 1e-8).

    The analytic side runs in double precision. The differences are evaluated
    in ``numeric_dtype`` (extended precision by default) so that roundoff does
    not swamp coordinates whose true gradient is around 1e-8.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    tape = Tape()
    loss = loss_fn(tape.bind(params))
    analytic = tape.backward(loss)

    coords = [(k, i) for k in params for i in range(params[k].size)]
    if len(coords) > num_coords:
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(coords), size=num_coords, replace=False)
        coords = [coords[j] for j in sorted(picked)]

    probe = {k: v.astype(numeric_dtype) for k, v in params.items()}
    worst = 0.0
    details = []
    for name, flat in coords:
        arr = probe[name].reshape(-1)
        orig = arr[flat]
        arr[flat] = orig + eps
        up = np.asarray(loss_fn(probe), dtype=numeric_dtype).reshape(())
        arr[flat] = orig - eps
        down = np.asarray(loss_fn(probe), dtype=numeric_dtype).reshape(())
        arr[flat] = orig
        num = float((up - down) / (2 * numeric_dtype(eps)))
        ana = float(analytic.get(name, np.zeros_like(params[name])).reshape(-1)[flat])
        err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
        worst = max(worst, err)
        details.append((name, flat, ana, num, err))
    return (worst, details) if return_details else worst
