"""
Adam with bias correction, plus the optional extras the trainer exposes:
L2 weight decay folded into the gradient, global-norm gradient clipping and a
cosine learning-rate schedule. All extras are off by default.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from octfluid.autodiff.module import Parameter
from octfluid.helpers.config import TrainConfig
from octfluid.helpers.errors import OptimizerError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moment buffers keyed by parameter name, and the step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def to_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {"adam_step": np.asarray(self.step, dtype=np.int64)}
        arrays.update({f"m.{name}": value for name, value in self.m.items()})
        arrays.update({f"v.{name}": value for name, value in self.v.items()})
        return arrays

    @classmethod
    def from_arrays(cls, arrays) -> "AdamState":
        state = cls(step=int(arrays["adam_step"]))
        for key in arrays:
            kind, _, name = key.partition(".")
            if kind == "m":
                state.m[name] = np.array(arrays[key])
            elif kind == "v":
                state.v[name] = np.array(arrays[key])
        return state


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate for a 0-based ``epoch``."""
    if cfg.lr_schedule == "cosine":
        return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * epoch / cfg.epochs))
    return cfg.lr


def clip_by_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the old norm."""
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, Optional[np.ndarray]],
    state: AdamState,
    cfg: TrainConfig,
    lr: Optional[float] = None,
) -> AdamState:
    """One in-place Adam update of ``params``.

    Raises:
        OptimizerError: a parameter has no gradient
    """
    missing = [name for name in params if grads.get(name) is None]
    if missing:
        raise OptimizerError(f"no gradient for parameter '{missing[0]}'" + (
            f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    lr = cfg.lr if lr is None else lr
    grads = dict(grads)
    if cfg.weight_decay > 0:
        for name, value in params.items():
            grads[name] = grads[name] + cfg.weight_decay * value
    if cfg.grad_clip > 0:
        clip_by_global_norm(grads, cfg.grad_clip)

    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise OptimizerError(f"gradient for '{name}' has shape {g.shape}, parameter {value.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m.astype(value.dtype)
        state.v[name] = v.astype(value.dtype)
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + cfg.eps_adam)
        value -= update.astype(value.dtype)
    return state


class Adam:
    """Adam over a fixed list of named parameters."""

    def __init__(self, named_parameters: Iterable[Tuple[str, Parameter]], cfg: TrainConfig,
                 state: Optional[AdamState] = None):
        self.parameters = dict(named_parameters)
        self.cfg = cfg
        self.state = state if state is not None else AdamState()

    def zero_grad(self) -> None:
        for param in self.parameters.values():
            param.grad = None

    def step(self, lr: Optional[float] = None) -> None:
        params = {name: p.data for name, p in self.parameters.items()}
        grads = {name: p.grad for name, p in self.parameters.items()}
        adam_step(params, grads, self.state, self.cfg, lr)
