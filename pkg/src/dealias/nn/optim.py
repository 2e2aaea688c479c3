"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dealias.errors import InvalidArgument, NumericFault
from dealias.nn.tensor import Tensor


@dataclass
class AdamState:
    """Moment estimates and hyperparameters for one parameter array."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, param: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), **hyper)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """Apply one Adam update and return the new parameter array.

    ``state`` is updated in place. A gradient containing NaN or infinity
    is refused before anything is modified.
    """
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise InvalidArgument(f"shape mismatch: param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    if state.t < 0:
        raise InvalidArgument("step counter must be nonnegative")
    if not np.all(np.isfinite(grad)):
        raise NumericFault("non-finite gradient, Adam step refused")
    b1, b2 = state.beta1, state.beta2
    state.t += 1
    state.m = b1 * state.m + (1 - b1) * grad
    state.v = b2 * state.v + (1 - b2) * (grad * grad)
    m_hat = state.m / (1 - b1**state.t)
    v_hat = state.v / (1 - b2**state.t)
    update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return (param - update).astype(param.dtype, copy=False), state


@dataclass
class Adam:
    """Adam over an ordered list of parameter tensors."""

    params: list[Tensor]
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    states: list[AdamState] = field(default_factory=list)

    def __post_init__(self):
        if not self.states:
            self.states = [
                AdamState.zeros_like(p.data, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
                for p in self.params
            ]

    def set_lr(self, lr: float) -> None:
        self.lr = lr
        for s in self.states:
            s.lr = lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad for p in self.params]
        for g in grads:
            if g is not None and not np.all(np.isfinite(g)):
                raise NumericFault("non-finite gradient, optimizer step refused")
        for p, g, s in zip(self.params, grads, self.states):
            if g is None:
                continue
            p.data, _ = adam_step(p.data, g.astype(p.dtype, copy=False), s)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, s in enumerate(self.states):
            out[f"{prefix}.{i}.m"] = s.m.copy()
            out[f"{prefix}.{i}.v"] = s.v.copy()
            out[f"{prefix}.{i}.t"] = np.array(s.t, dtype=np.int64)
        return out

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray]) -> None:
        for i, s in enumerate(self.states):
            s.m = np.array(arrays[f"{prefix}.{i}.m"], dtype=s.m.dtype)
            s.v = np.array(arrays[f"{prefix}.{i}.v"], dtype=s.v.dtype)
            s.t = int(arrays[f"{prefix}.{i}.t"])
