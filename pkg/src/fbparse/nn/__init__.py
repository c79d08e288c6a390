from .gradcheck import grad_check
from .params import (
    AdamConfig,
    NonFiniteGradient,
    ParamStore,
    clip_and_step,
    clip_gradients,
    dumps_params,
    global_norm,
    load_params,
    loads_params,
    save_params,
)
from .tensor import ShapeError, Tape, Tensor, as_float, value

__all__ = [
    "AdamConfig", "NonFiniteGradient", "ParamStore", "ShapeError", "Tape", "Tensor",
    "as_float", "clip_and_step", "clip_gradients", "dumps_params", "global_norm",
    "grad_check", "load_params", "loads_params", "save_params", "value",
]
