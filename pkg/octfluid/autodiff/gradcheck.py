"""
Finite-difference gradient checking.

The analytic gradient comes from one backward pass; the reference is the
central difference ``(f(x + h) - f(x - h)) / 2h`` evaluated element by element.
Both run in float64 so the comparison measures the derivative formulas rather
than float32 rounding.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from octfluid.autodiff.tensor import Tensor, no_grad, precision
from octfluid.helpers.constants import GRADCHECK_DEFAULTS

logger = logging.getLogger(__name__)


@dataclass
class InputCheck:
    """Comparison results for one input tensor."""

    name: str
    checked: int
    max_abs_error: float
    max_rel_error: float
    failures: List[tuple] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


@dataclass
class GradCheckReport:
    label: str
    inputs: List[InputCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.inputs)

    @property
    def max_rel_error(self) -> float:
        return max((check.max_rel_error for check in self.inputs), default=0.0)

    def summary(self) -> str:
        status = "ok" if self.passed else "FAILED"
        failed = [c.name for c in self.inputs if not c.passed]
        tail = f" failing: {', '.join(failed[:5])}" if failed else ""
        return (
            f"{self.label}: {status} ({len(self.inputs)} inputs, "
            f"max rel err {self.max_rel_error:.2e}){tail}"
        )


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    rel_tol: float = GRADCHECK_DEFAULTS["rel_tol"],
    abs_tol: float = GRADCHECK_DEFAULTS["abs_tol"],
    step: float = GRADCHECK_DEFAULTS["step"],
    max_checks: Optional[int] = None,
    exhaustive_size: int = 0,
    names: Optional[Sequence[str]] = None,
    seed: int = 0,
    label: str = "grad_check",
) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``f(*inputs)`` with central differences.

    An element passes when ``|analytic - numeric| <= abs_tol`` or the relative
    error ``|a - n| / max(|a|, |n|)`` is within ``rel_tol``. ``max_checks``
    caps the number of randomly chosen elements per input (all by default);
    inputs with at most ``exhaustive_size`` elements are always checked in full.
    Never raises on mismatch: failures are returned in the report.
    """
    names = list(names) if names is not None else [f"input{i}" for i in range(len(inputs))]
    rng = np.random.default_rng(seed)
    saved = [(t.data, t.requires_grad, t.grad) for t in inputs]
    checks: List[InputCheck] = []
    try:
        with precision(np.float64):
            for t in inputs:
                t.data = t.data.astype(np.float64)
                t.requires_grad = True
                t.grad = None
            out = f(*inputs)
            if out.size != 1:
                raise ValueError(f"grad_check needs a scalar function, got shape {out.shape}")
            out.backward()
            analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

            def evaluate() -> float:
                with no_grad():
                    return f(*inputs).item()

            for t, grad, name in zip(inputs, analytic, names):
                flat = t.data.reshape(-1)
                count = flat.size
                if max_checks is not None and count > max(max_checks, exhaustive_size):
                    positions = rng.choice(count, size=max_checks, replace=False)
                else:
                    positions = np.arange(count)
                worst_abs = 0.0
                worst_rel = 0.0
                failures = []
                for pos in positions:
                    original = flat[pos]
                    flat[pos] = original + step
                    plus = evaluate()
                    flat[pos] = original - step
                    minus = evaluate()
                    flat[pos] = original
                    numeric = (plus - minus) / (2.0 * step)
                    a = float(grad.reshape(-1)[pos])
                    diff = abs(a - numeric)
                    rel = diff / max(abs(a), abs(numeric)) if diff > abs_tol else 0.0
                    worst_abs = max(worst_abs, diff)
                    worst_rel = max(worst_rel, rel)
                    if diff > abs_tol and rel > rel_tol:
                        failures.append((int(pos), a, numeric))
                checks.append(InputCheck(name, len(positions), worst_abs, worst_rel, failures))
    finally:
        for t, (data, requires_grad, grad) in zip(inputs, saved):
            t.data = data
            t.requires_grad = requires_grad
            t.grad = grad
    report = GradCheckReport(label, checks)
    logger.debug(report.summary())
    return report
