"""Adam optimizer over named parameter sets."""

from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from .autograd import Tensor


class Adam:
    """In-place Adam with per-parameter first/second moment state.

    Fixed defaults betas=(0.9, 0.999), eps=1e-8; the learning rate is the
    only knob the training recipes vary.
    """

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params: Dict[str, Tensor] = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self) -> None:
        """Apply one update; every parameter must carry a grad."""
        missing = [name for name, p in self.params.items() if p.grad is None]
        if missing:
            raise ValueError(f"adam step with missing grads: {sorted(missing)}")
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bias1
            v_hat = v / bias2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
