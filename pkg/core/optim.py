"""Adam optimiser and the staged learning-rate schedule."""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ParameterError, ShapeError

PAPER_EPOCHS = 200
STAGE_RATES = (0.007, 0.0035, 0.0018, 7e-5, 7e-6)


@dataclass
class AdamState:
    """First and second moments per parameter name, plus the shared step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, applied to `params` in place."""
    state.step += 1
    correction1 = 1 - beta1 ** state.step
    correction2 = 1 - beta2 ** state.step
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeError(f"adam_step: gradient {grad.shape} does not match parameter {name} {param.shape}")
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m *= beta1
        m += (1 - beta1) * grad
        v *= beta2
        v += (1 - beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)


class Adam:
    """Adam bound to a set of named parameters; `state` continues an earlier run."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 state: Optional[AdamState] = None):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState() if state is None else state

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float) -> None:
        adam_step(params, grads, self.state, lr, self.beta1, self.beta2, self.eps)


class StagedSchedule:
    """
    Piecewise-constant learning rate.

    The five full-scale stages last 40 epochs each over 200 epochs; a
    shorter run keeps the same five rates with proportionally shorter stages.
    """

    def __init__(self, total_epochs: int = PAPER_EPOCHS, rates: Sequence[float] = STAGE_RATES):
        if total_epochs < 1:
            raise ParameterError(f"total_epochs must be >= 1, got {total_epochs}")
        if not rates:
            raise ParameterError("Schedule needs at least one rate")
        self.total_epochs = total_epochs
        self.rates = tuple(float(r) for r in rates)

    @property
    def boundaries(self) -> Tuple[int, ...]:
        """First epoch of every stage after the first."""
        n = len(self.rates)
        return tuple(int(np.ceil(i * self.total_epochs / n)) for i in range(1, n))

    def __call__(self, epoch: int) -> float:
        if not 0 <= epoch < self.total_epochs:
            raise ParameterError(f"epoch must be in [0, {self.total_epochs}), got {epoch}")
        stage = int(np.searchsorted(self.boundaries, epoch, side='right'))
        return self.rates[stage]

    def __repr__(self) -> str:
        return f"StagedSchedule(total_epochs={self.total_epochs!r}, rates={self.rates!r})"


def lr_schedule(epoch: int, total_epochs: int = PAPER_EPOCHS) -> float:
    """Learning rate of an epoch under the staged schedule."""
    return StagedSchedule(total_epochs)(epoch)
