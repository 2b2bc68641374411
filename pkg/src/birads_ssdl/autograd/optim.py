"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    # per-parameter update counts; differ from t when steps touch parameter subsets
    counts: dict[str, int] = field(default_factory=dict)

    def reset(self) -> None:
        self.t = 0
        self.m.clear()
        self.v.clear()
        self.counts.clear()


def adam_step(params, state: AdamState) -> None:
    """Apply one Adam update to ``params`` (an iterable of :class:`Parameter`).

    Parameters are visited in name order. A parameter whose ``grad`` is None
    is treated as having a zero gradient. Bias correction uses each
    parameter's own update count, which equals ``t`` whenever every step
    passes the same parameter set.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for p in sorted(params, key=lambda q: q.name):
        n = state.counts.get(p.name, 0) + 1
        state.counts[p.name] = n
        corr1 = 1.0 - b1 ** n
        corr2 = 1.0 - b2 ** n
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.data, dtype=np.float64)
            v = np.zeros_like(p.data, dtype=np.float64)
        else:
            v = state.v[p.name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g.astype(np.float64) ** 2)
        state.m[p.name] = m
        state.v[p.name] = v
        update = state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
        p.data = (p.data - update).astype(p.data.dtype)


def zero_grad(params) -> None:
    for p in params:
        p.grad = np.zeros_like(p.data)


__all__ = ["AdamState", "adam_step", "zero_grad", "Parameter"]
