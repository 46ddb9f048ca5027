from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from stac.nn.autodiff import Parameter, ShapeMismatch


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


class Adam:
    """Adam with bias correction over a fixed parameter group.

    The group's values are moved into one flat buffer (each `Parameter.value`
    becomes a view of it), so a step is a few vector ops instead of a loop.
    """

    def __init__(self, params: Sequence[Parameter], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        sizes = [p.value.size for p in self.params]
        dtype = np.result_type(*[p.value.dtype for p in self.params]) if self.params else float
        self.flat = np.zeros(sum(sizes), dtype=dtype)
        self._cuts = np.cumsum([0] + sizes)
        for p, a, b in zip(self.params, self._cuts[:-1], self._cuts[1:]):
            view = self.flat[a:b].reshape(p.value.shape)
            view[...] = p.value
            p.value = view
        self.state = AdamState(lr, beta1, beta2, eps, 0, [np.zeros_like(self.flat)],
                               [np.zeros_like(self.flat)])

    def step(self, grads: Sequence[np.ndarray] | None = None) -> None:
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.value) for p in self.params]
        if len(grads) != len(self.params):
            raise ShapeMismatch("one gradient per parameter expected")
        for p, g in zip(self.params, grads):
            if np.shape(g) != p.value.shape:
                raise ShapeMismatch(f"param {p.value.shape} vs grad {np.shape(g)}")
        g = np.concatenate([np.ravel(g) for g in grads]) if grads else self.flat[:0]
        adam_step(self.state, [self.flat], [g])


def adam_step(s: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    """In-place Adam update of `params`."""
    if len(params) != len(grads) or len(params) != len(s.first_moment):
        raise ShapeMismatch("parameter, gradient and moment lists differ in length")
    s.step_count += 1
    t = s.step_count
    c1 = 1.0 - s.beta1 ** t
    c2 = 1.0 - s.beta2 ** t
    for p, g, m, v in zip(params, grads, s.first_moment, s.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {g.shape}")
        m *= s.beta1
        m += (1.0 - s.beta1) * g
        v *= s.beta2
        v += (1.0 - s.beta2) * g * g
        p -= s.lr * (m / c1) / (np.sqrt(v / c2) + s.eps)


def polyak_update(target: Sequence[np.ndarray], online: Sequence[np.ndarray], tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, in place."""
    if len(target) != len(online):
        raise ShapeMismatch("target and online parameter lists differ in length")
    for t, o in zip(target, online):
        if t.shape != o.shape:
            raise ShapeMismatch(f"target {t.shape} vs online {o.shape}")
        t *= 1.0 - tau
        t += tau * o
