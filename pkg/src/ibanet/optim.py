import dataclasses
import math

import numpy as np

from ibanet.errors import ContractError, ParameterError

LR_DECAY_FACTOR = 0.1
LR_DECAY_EVERY = 20


@dataclasses.dataclass(frozen=True)
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], **hyper: float) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p) for name, p in params.items()},
            v={name: np.zeros_like(p) for name, p in params.items()},
            **hyper,  # type: ignore[arg-type]
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update with coupled L2 decay.

    Inputs are not mutated; new parameter and moment arrays are returned.
    """
    if lr < 0 or weight_decay < 0:
        msg = f"Adam needs lr >= 0 and weight_decay >= 0, got {lr=} {weight_decay=}"
        raise ParameterError(msg)

    t = state.t + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or state.m[name].shape != p.shape:
            msg = f"Adam: gradient {g.shape} / moment {state.m[name].shape} do not match parameter {name} {p.shape}"
            raise ContractError(msg)
        g = g + weight_decay * p
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        new_params[name] = p - lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        new_m[name] = m
        new_v[name] = v

    return new_params, dataclasses.replace(state, m=new_m, v=new_v, t=t)


def lr_at_epoch(base_lr: float, epoch: int) -> float:
    if epoch < 0:
        msg = f"epoch must be nonnegative, got {epoch}"
        raise ParameterError(msg)
    return base_lr * LR_DECAY_FACTOR ** math.floor(epoch / LR_DECAY_EVERY)
