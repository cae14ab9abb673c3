# apps/trainer/optim.py
"""
Stochastic gradient descent with classical momentum:

    v <- mu * v - lr * g
    theta <- theta + v
"""
from typing import List, Optional, Sequence

import numpy as np

from apps.common.exceptions import ConfigurationError
from apps.diffcore import Variable


def sgd_momentum_step(params: Sequence[Variable], velocities: Sequence[np.ndarray], lr: float, mu: float) -> None:
    """Update params and velocities in place, then zero the gradients"""
    if len(params) != len(velocities):
        raise ConfigurationError(f"{len(params)} parameters but {len(velocities)} velocity buffers")
    for param, velocity in zip(params, velocities):
        velocity *= mu
        if param.grad is not None:
            velocity -= lr * param.grad
        param.value += velocity
        param.zero_grad()


class SGDMomentum:
    def __init__(self, params: Sequence[Variable], lr: float, momentum: float = 0.9):
        if lr <= 0:
            raise ConfigurationError(f"Learning rate must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigurationError(f"Momentum must lie in [0, 1), got {momentum}")
        self.params: List[Variable] = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocities: List[np.ndarray] = [np.zeros_like(param.value) for param in self.params]

    def step(self) -> None:
        sgd_momentum_step(self.params, self.velocities, self.lr, self.momentum)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def reset(self, velocities: Optional[Sequence[np.ndarray]] = None) -> None:
        for index, velocity in enumerate(self.velocities):
            velocity[...] = 0.0 if velocities is None else velocities[index]
