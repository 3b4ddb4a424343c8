"""Collision-free state keys and the mutable state threaded through a trial."""
from __future__ import annotations

import itertools
import threading
from collections.abc import MutableMapping
from typing import Any, Iterator

from .errors import MissingKeyError

_counter = itertools.count()
_lock = threading.Lock()


class StateKey:
    """An identifier compared by its integer id, never by its label."""

    __slots__ = ("id", "label")

    def __init__(self, label: str = ""):
        with _lock:
            self.id = next(_counter)
        self.label = label

    def __eq__(self, other):
        return isinstance(other, StateKey) and other.id == self.id

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        return f"StateKey({self.label!r}#{self.id})"


def state_key(label: str = "") -> StateKey:
    """Return a fresh key; two keys made from the same label never collide."""
    return StateKey(label)


class State(MutableMapping):
    """Map from :class:`StateKey` to arbitrary values.

    Supports the ``state[LOSS] += term`` read-modify-write idiom directly.
    """

    def __init__(self, initial=None):
        self._entries = {}
        if initial:
            for k, v in dict(initial).items():
                self[k] = v

    @staticmethod
    def _check(key):
        if not isinstance(key, StateKey):
            raise TypeError(f"state keys must be StateKey instances, got {type(key).__name__}")

    def __getitem__(self, key: StateKey) -> Any:
        self._check(key)
        try:
            return self._entries[key]
        except KeyError:
            raise MissingKeyError(key) from None

    def __setitem__(self, key: StateKey, value: Any) -> None:
        self._check(key)
        self._entries[key] = value

    def __delitem__(self, key: StateKey) -> None:
        self._check(key)
        try:
            del self._entries[key]
        except KeyError:
            raise MissingKeyError(key) from None

    def __iter__(self) -> Iterator[StateKey]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def require(self, key: StateKey, kind):
        """Get ``key`` and check the value is an instance of ``kind``."""
        value = self[key]
        if not isinstance(value, kind):
            expected = getattr(kind, "__name__", None) or " | ".join(k.__name__ for k in kind)
            raise TypeError(f"state[{key.label!r}]: expected {expected}, found {type(value).__name__}")
        return value

    def __repr__(self):
        return "State({" + ", ".join(f"{k.label!r}: {type(v).__name__}" for k, v in self._entries.items()) + "})"


MODEL = state_key("model")
OPTIMIZER = state_key("optimizer")
CRITERION = state_key("criterion")
LOSS = state_key("loss")
X = state_key("x")
Y_TRUE = state_key("y_true")
Y_PRED = state_key("y_pred")
EPOCH = state_key("epoch")
MAX_EPOCHS = state_key("max_epochs")
BATCH = state_key("batch")
TRAIN_STEPS = state_key("train_steps")
METRICS = state_key("metrics")
STOP_TRAINING = state_key("stop_training")
DATA_PHASE = state_key("data_phase")
TRIAL = state_key("trial")

RESERVED_KEYS = (MODEL, OPTIMIZER, CRITERION, LOSS, X, Y_TRUE, Y_PRED, EPOCH, MAX_EPOCHS, BATCH,
                 TRAIN_STEPS, METRICS, STOP_TRAINING, DATA_PHASE, TRIAL)

TRAIN = "train"
VALIDATION = "validation"
INFERENCE = "inference"
