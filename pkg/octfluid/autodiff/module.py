"""
Parameters and the module tree.

A ``Module`` discovers its parameters and sub-modules from its attributes in
definition order; dotted attribute paths become parameter names, for example
``encoder.stage1.block0.attn.qkv.weight``.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.stats import truncnorm

from octfluid.autodiff.tensor import Tensor
from octfluid.helpers.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InitSpec:
    """How a parameter is initialised: ``trunc_normal`` (cut at 2 std), ``zeros`` or ``ones``."""

    kind: str
    std: float = 0.0

    def sample(self, shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
        if self.kind == "zeros":
            return np.zeros(shape, dtype=np.float32)
        if self.kind == "ones":
            return np.ones(shape, dtype=np.float32)
        if self.kind == "trunc_normal":
            values = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=self.std, size=shape, random_state=rng)
            return np.asarray(values, dtype=np.float32).reshape(shape)
        raise ConfigError(f"Unknown init kind: {self.kind!r}")


def TruncNormal(std: float) -> InitSpec:
    return InitSpec("trunc_normal", std)


ZEROS = InitSpec("zeros")
ONES = InitSpec("ones")


class Parameter(Tensor):
    """Trainable tensor with its initialisation recipe."""

    def __init__(self, shape: Tuple[int, ...], init: InitSpec):
        super().__init__(np.zeros(shape, dtype=np.float32), requires_grad=True)
        self.init_spec = init

    def reset(self, rng: np.random.Generator) -> None:
        self.data = self.init_spec.sample(self.shape, rng)
        self.grad = None


class Module:
    """Base class for layers and networks."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            path = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{path}.")
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for index, child in enumerate(value):
                    yield from child.named_parameters(prefix=f"{path}.{index}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def initialize(self, seed: int) -> "Module":
        """Draw every parameter from one seeded stream, in name order."""
        rng = np.random.default_rng(seed)
        names = set()
        for name, param in self.named_parameters():
            if name in names:
                raise ConfigError(f"duplicate parameter name {name}")
            names.add(name)
            param.reset(rng)
        logger.debug("Initialised %d parameters (%d values) from seed %d", len(names), self.parameter_count(), seed)
        return self

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ConfigError(f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, param in own.items():
            value = np.asarray(state[name], dtype=np.float32)
            if value.shape != param.shape:
                raise ShapeError(f"{name}: stored shape {value.shape} != parameter shape {param.shape}")
            param.data = value.copy()
            param.grad = None

    def get_parameter(self, name: str) -> Optional[Parameter]:
        return dict(self.named_parameters()).get(name)
