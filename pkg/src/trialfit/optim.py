"""SGD with classical momentum."""
from __future__ import annotations

from typing import Dict, List, Sequence

import numpy as np

from .autodiff import Parameter
from .errors import CheckpointError, ContractError


class SGD:
    """``v <- momentum * v + grad``; ``param <- param - lr * v``.

    Parameters are named by position (``"0"``, ``"1"``, ...) unless ``names``
    is given; the trial passes the model's parameter paths.
    """

    def __init__(self, params: Sequence[Parameter], lr: float, momentum: float = 0.0, names: Sequence[str] = None):
        if not lr > 0:
            raise ContractError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ContractError(f"momentum must lie in [0, 1), got {momentum}")
        self.params: List[Parameter] = list(params)
        self.names = list(names) if names is not None else [str(i) for i in range(len(self.params))]
        if len(self.names) != len(self.params) or len(set(self.names)) != len(self.names):
            raise ContractError("optimizer parameter names must be unique, one per parameter")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for name, p in zip(self.names, self.params):
            if p.grad is None:
                raise ContractError(f"parameter {name!r} has no gradient; call backward before step")
        for i, p in enumerate(self.params):
            v = self.momentum * self.velocity[i] + p.grad
            self.velocity[i] = v
            p.value = p.value - self.lr * v

    def state_dict(self) -> dict:
        return {
            "lr": self.lr,
            "momentum": self.momentum,
            "velocity": {n: v.copy() for n, v in zip(self.names, self.velocity)},
        }

    def load_state_dict(self, record: dict) -> None:
        velocity: Dict[str, np.ndarray] = record["velocity"]
        if set(velocity) != set(self.names):
            missing = sorted(set(self.names) ^ set(velocity))
            raise CheckpointError(f"optimizer buffers do not match parameters: {missing[0]!r}")
        for name, p in zip(self.names, self.params):
            buf = np.asarray(velocity[name], dtype=np.float64)
            if buf.shape != p.shape:
                raise CheckpointError(f"optimizer buffer {name!r} has shape {buf.shape}, parameter has {p.shape}")
        lr, momentum = float(record["lr"]), float(record["momentum"])
        if not lr > 0:
            raise CheckpointError(f"stored learning rate {lr} is not positive")
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.array(velocity[n], dtype=np.float64) for n in self.names]


def optimizer_state(opt: SGD) -> dict:
    return opt.state_dict()


def load_optimizer_state(opt: SGD, record: dict) -> None:
    opt.load_state_dict(record)
