"""Small fully connected building blocks for the example models."""
from __future__ import annotations

import math
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


class Module:
    """Base model: parameters are discovered from attributes in assignment order.

    Subclasses implement ``forward(x, state=None)``. The trial only passes the
    state when it was built with ``pass_state=True``.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            name = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        ad.zero_grad(self.parameters())

    def forward(self, x, state=None):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """``x @ weight + bias`` with weight of shape (in, out).

    The bias is added through a column of ones because tensors never broadcast
    implicitly.
    """

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = Parameter(uniform_init(rng, in_features, (in_features, out_features)), name="weight")
        self.bias = Parameter(uniform_init(rng, in_features, (1, out_features)), name="bias")

    def forward(self, x, state=None, frozen: bool = False):
        x = ad.tensor(x)
        w, b = self.weight, self.bias
        if frozen:
            w, b = w.detach(), b.detach()
        ones = Tensor(np.ones((x.shape[0], 1)))
        return x @ w + ones @ b


_ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu, "sigmoid": ad.sigmoid}


class MLP(Module):
    """Stack of Linear layers with a hidden activation and optional output activation.

    ``frozen=True`` evaluates with detached parameters, so gradients reach the
    input but not this network's weights.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, hidden: str = "tanh", output: str = None):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self._hidden = _ACTIVATIONS[hidden]
        self._output = _ACTIVATIONS[output] if output else None

    def forward(self, x, state=None, frozen: bool = False):
        h = ad.tensor(x)
        for i, layer in enumerate(self.layers):
            h = layer.forward(h, frozen=frozen)
            if i < len(self.layers) - 1:
                h = self._hidden(h)
        if self._output is not None:
            h = self._output(h)
        return h
