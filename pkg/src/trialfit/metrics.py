"""Streaming metrics arranged as trees.

A root metric turns each step's state into a number; its children aggregate
that number stream (mean, standard deviation, running mean). Decorators
compose these trees, and ``default_for_key`` lets a trial refer to one by a
string::

    @default_for_key("acc")
    @running_mean
    @std
    @mean
    class CategoricalAccuracy(Metric): ...
"""
from __future__ import annotations

import math
from collections import deque
from typing import Callable, Dict, List, Optional

import numpy as np

from . import state as S
from .autodiff import Tensor
from .errors import ConfigurationError


def _as_array(value) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.value
    return np.asarray(value, dtype=np.float64)


class Metric:
    """A streaming statistic. ``process`` runs per step, ``process_final`` per epoch end."""

    def __init__(self, name: str):
        self.name = name

    def process(self, state) -> Optional[float]:
        return None

    def process_final(self, state) -> Optional[float]:
        return None

    def reset(self, state) -> None:
        pass

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Mean(Metric):
    """Arithmetic mean of the values seen since the last reset."""

    def __init__(self, name: str):
        super().__init__(name)
        self.reset(None)

    def process(self, value):
        self._n += 1
        self._mean += (float(value) - self._mean) / self._n

    def process_final(self, state):
        return self._mean if self._n else None

    def reset(self, state):
        self._n = 0
        self._mean = 0.0


class Std(Metric):
    """Population standard deviation (divide by n), accumulated with Welford's update."""

    def __init__(self, name: str):
        super().__init__(name)
        self.reset(None)

    def process(self, value):
        x = float(value)
        self._n += 1
        delta = x - self._mean
        self._mean += delta / self._n
        self._m2 += delta * (x - self._mean)

    def process_final(self, state):
        if not self._n:
            return None
        return math.sqrt(max(self._m2, 0.0) / self._n)

    def reset(self, state):
        self._n = 0
        self._mean = 0.0
        self._m2 = 0.0


class RunningMean(Metric):
    """Unweighted mean of the most recent ``window`` values, emitted every step."""

    def __init__(self, name: str, window: int = 50):
        if window < 1:
            raise ConfigurationError(f"running mean window must be >= 1, got {window}")
        super().__init__(name)
        self.window = window
        self._values = deque(maxlen=window)

    def process(self, value):
        self._values.append(float(value))
        return math.fsum(self._values) / len(self._values)

    def reset(self, state):
        self._values.clear()


class MetricTree(Metric):
    """Root metric whose per-step output flows to each child, in child order.

    A tree emits dictionaries of ``name -> value``. The root's own output is
    only emitted when the tree has no children; otherwise it is consumed by
    the children.
    """

    def __init__(self, root: Metric, children: List[Metric] = ()):
        super().__init__(root.name)
        self.root = root
        self.children = list(children)

    def add_child(self, child: Metric) -> "MetricTree":
        self.children.append(child)
        return self

    def output_names(self) -> List[str]:
        if not self.children:
            return [self.root.name]
        return [c.name for c in self.children]

    def process(self, state) -> Dict[str, float]:
        value = self.root.process(state)
        if not self.children:
            return {} if value is None else {self.root.name: float(value)}
        out = {}
        if value is None:
            return out
        for child in self.children:
            result = child.process(value)
            if result is not None:
                out[child.name] = float(result)
        return out

    def process_final(self, state) -> Dict[str, float]:
        out = {}
        value = self.root.process_final(state)
        if value is not None and not self.children:
            out[self.root.name] = float(value)
        for child in self.children:
            result = child.process_final(state)
            if result is not None:
                out[child.name] = float(result)
        return out

    def reset(self, state):
        self.root.reset(state)
        for child in self.children:
            child.reset(state)

    def __repr__(self):
        return f"MetricTree({self.root!r}, {self.children!r})"


def _as_tree(metric: Metric) -> MetricTree:
    return metric if isinstance(metric, MetricTree) else MetricTree(metric)


def _wrapper(attach: Callable[[MetricTree], None]):
    def wrap(metric):
        if isinstance(metric, Metric):
            tree = _as_tree(metric)
            attach(tree)
            return tree

        # decorating a class or factory: wrap each instance it builds
        def build(*args, **kwargs):
            return wrap(metric(*args, **kwargs))

        build.__name__ = getattr(metric, "__name__", "metric")
        build.__doc__ = getattr(metric, "__doc__", None)
        return build

    return wrap


def wrap_mean(metric):
    """Add a child emitting the epoch mean as ``<name>``."""
    return _wrapper(lambda t: t.add_child(Mean(t.root.name)))(metric)


def wrap_std(metric):
    """Add a child emitting the epoch population standard deviation as ``<name>_std``."""
    return _wrapper(lambda t: t.add_child(Std(t.root.name + "_std")))(metric)


def wrap_running_mean(metric=None, window: int = 50):
    """Add a child emitting ``running_<name>`` every step. Usable bare or as ``running_mean(window=10)``."""
    if window < 1:
        raise ConfigurationError(f"running mean window must be >= 1, got {window}")
    if metric is None:
        return lambda m: wrap_running_mean(m, window=window)
    return _wrapper(lambda t: t.add_child(RunningMean("running_" + t.root.name, window)))(metric)


mean = wrap_mean
std = wrap_std
running_mean = wrap_running_mean

_registry: Dict[str, Callable[[], Metric]] = {}


def default_for_key(key: str):
    """Register a metric factory so trials can name it with ``key``."""

    def register(factory):
        _registry[key] = factory
        return factory

    return register


def registered_keys() -> List[str]:
    return sorted(_registry)


def build_default(key: str) -> MetricTree:
    try:
        factory = _registry[key]
    except KeyError:
        raise ConfigurationError(f"unknown metric {key!r}; registered: {', '.join(registered_keys())}") from None
    return _as_tree(factory())


def epoch_cycle(tree: MetricTree, states) -> Dict[str, float]:
    """Reset, feed every per-batch state, finalise; return the merged emissions."""
    if isinstance(tree, (list, tuple)):
        trees = [_as_tree(t) for t in tree]
    else:
        trees = [_as_tree(tree)]
    check_unique(trees)
    for t in trees:
        t.reset(None)
    results: Dict[str, float] = {}
    last = None
    for last in states:
        for t in trees:
            results.update(t.process(last))
    if last is None:
        return {}
    for t in trees:
        results.update(t.process_final(last))
    return results


def check_unique(trees) -> None:
    seen = set()
    for t in trees:
        for name in t.output_names():
            if name in seen:
                raise ConfigurationError(f"metric output {name!r} is produced more than once")
            seen.add(name)


class StateValue(Metric):
    """Reads a number (or single-element tensor) stored in the state under ``key``."""

    def __init__(self, name: str, key):
        super().__init__(name)
        self.key = key

    def process(self, state):
        return float(_as_array(state[self.key]).reshape(()))


@default_for_key("loss")
@running_mean
@std
@mean
class Loss(StateValue):
    def __init__(self):
        super().__init__("loss", S.LOSS)


@default_for_key("acc")
@running_mean
@std
@mean
class CategoricalAccuracy(Metric):
    """Fraction of rows whose argmax prediction equals the integer label."""

    def __init__(self):
        super().__init__("acc")

    def process(self, state):
        y_pred = _as_array(state[S.Y_PRED])
        y_true = _as_array(state[S.Y_TRUE]).reshape(-1)
        return float(np.mean(np.argmax(y_pred, axis=1) == y_true.astype(np.int64)))


@default_for_key("binary_acc")
@running_mean
@std
@mean
class BinaryAccuracy(Metric):
    """Fraction of probabilities on the same side of 0.5 as the 0/1 label."""

    def __init__(self, threshold: float = 0.5):
        super().__init__("binary_acc")
        self.threshold = threshold

    def process(self, state):
        y_pred = _as_array(state[S.Y_PRED]).reshape(-1)
        y_true = _as_array(state[S.Y_TRUE]).reshape(-1)
        return float(np.mean((y_pred > self.threshold) == (y_true > 0.5)))


@default_for_key("sign_acc")
@running_mean
@std
@mean
class SignAccuracy(Metric):
    """Fraction of scores whose sign matches a +/-1 label (margin classifiers)."""

    def __init__(self):
        super().__init__("sign_acc")

    def process(self, state):
        y_pred = _as_array(state[S.Y_PRED]).reshape(-1)
        y_true = _as_array(state[S.Y_TRUE]).reshape(-1)
        return float(np.mean(np.where(y_pred > 0, 1.0, -1.0) == np.sign(y_true)))
