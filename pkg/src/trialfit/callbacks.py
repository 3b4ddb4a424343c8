"""Lifecycle hooks, the decorator API, and the built-in callbacks."""
from __future__ import annotations

import csv
import enum
import json
import math
from typing import Callable, List, Optional

from . import persistence
from . import state as S
from .autodiff import Tensor
from .errors import CallbackError, ConfigurationError, ContractError


class Hook(str, enum.Enum):
    on_start = "on_start"
    on_start_epoch = "on_start_epoch"
    on_start_training = "on_start_training"
    on_sample = "on_sample"
    on_forward = "on_forward"
    on_criterion = "on_criterion"
    on_backward = "on_backward"
    on_step_training = "on_step_training"
    on_end_training = "on_end_training"
    on_start_validation = "on_start_validation"
    on_sample_validation = "on_sample_validation"
    on_forward_validation = "on_forward_validation"
    on_criterion_validation = "on_criterion_validation"
    on_step_validation = "on_step_validation"
    on_end_validation = "on_end_validation"
    on_end_epoch = "on_end_epoch"
    on_end = "on_end"
    on_checkpoint_save = "on_checkpoint_save"
    on_checkpoint_load = "on_checkpoint_load"

    def __str__(self):
        return self.value


class Callback:
    """Override any hook method; the rest do nothing.

    Callbacks that carry state across a checkpoint override
    :meth:`state_payload` and :meth:`load_state_payload`.
    """

    def state_payload(self) -> bytes:
        return b""

    def load_state_payload(self, payload: bytes) -> None:
        pass

    def on_start(self, state): pass
    def on_start_epoch(self, state): pass
    def on_start_training(self, state): pass
    def on_sample(self, state): pass
    def on_forward(self, state): pass
    def on_criterion(self, state): pass
    def on_backward(self, state): pass
    def on_step_training(self, state): pass
    def on_end_training(self, state): pass
    def on_start_validation(self, state): pass
    def on_sample_validation(self, state): pass
    def on_forward_validation(self, state): pass
    def on_criterion_validation(self, state): pass
    def on_step_validation(self, state): pass
    def on_end_validation(self, state): pass
    def on_end_epoch(self, state): pass
    def on_end(self, state): pass
    def on_checkpoint_save(self, state): pass
    def on_checkpoint_load(self, state): pass

    def __repr__(self):
        return type(self).__name__


class CallbackList:
    """Dispatches a hook to each callback in insertion order."""

    def __init__(self, callbacks=()):
        self.callbacks: List[Callback] = list(callbacks)

    def append(self, callback: Callback) -> None:
        self.callbacks.append(callback)

    def __iter__(self):
        return iter(self.callbacks)

    def __len__(self):
        return len(self.callbacks)

    def fire(self, hook, state) -> None:
        hook = Hook(hook)
        for cb in self.callbacks:
            try:
                getattr(cb, hook.value)(state)
            except CallbackError:
                raise
            except Exception as e:
                raise CallbackError(hook.value, cb, e) from e


class FunctionCallback(Callback):
    """Runs one function at one hook."""

    def __init__(self, hook: Hook, fn: Callable):
        self.hook = Hook(hook)
        self.fn = fn
        setattr(self, self.hook.value, fn)

    def __call__(self, state):
        return self.fn(state)

    def __repr__(self):
        return f"{getattr(self.fn, '__name__', 'fn')}@{self.hook.value}"


def bind(hook, fn: Callable) -> Callback:
    return FunctionCallback(hook, fn)


def _decorator(hook: Hook):
    def decorate(fn):
        return bind(hook, fn)

    decorate.__name__ = hook.value
    decorate.__doc__ = f"Turn ``fn(state)`` into a callback run at ``{hook.value}``."
    return decorate


on_start = _decorator(Hook.on_start)
on_start_epoch = _decorator(Hook.on_start_epoch)
on_start_training = _decorator(Hook.on_start_training)
on_sample = _decorator(Hook.on_sample)
on_forward = _decorator(Hook.on_forward)
on_criterion = _decorator(Hook.on_criterion)
on_backward = _decorator(Hook.on_backward)
on_step_training = _decorator(Hook.on_step_training)
on_end_training = _decorator(Hook.on_end_training)
on_start_validation = _decorator(Hook.on_start_validation)
on_sample_validation = _decorator(Hook.on_sample_validation)
on_forward_validation = _decorator(Hook.on_forward_validation)
on_criterion_validation = _decorator(Hook.on_criterion_validation)
on_step_validation = _decorator(Hook.on_step_validation)
on_end_validation = _decorator(Hook.on_end_validation)
on_end_epoch = _decorator(Hook.on_end_epoch)
on_end = _decorator(Hook.on_end)
on_checkpoint_save = _decorator(Hook.on_checkpoint_save)
on_checkpoint_load = _decorator(Hook.on_checkpoint_load)


def add_to_loss(fn: Callable) -> Callback:
    """At ``on_criterion``, add the scalar tensor returned by ``fn(state)`` to the loss."""

    def add(state):
        term = fn(state)
        if not isinstance(term, Tensor):
            term = Tensor(term)
        if term.size != 1:
            raise ContractError(f"add_to_loss: {getattr(fn, '__name__', fn)} returned shape {term.shape}, expected a scalar")
        state[S.LOSS] = state[S.LOSS] + term.reshape(())

    add.__name__ = getattr(fn, "__name__", "add_to_loss")
    return bind(Hook.on_criterion, add)


@on_criterion
def l2_weight_decay(state):
    for W in state[S.MODEL].parameters():
        state[S.LOSS] += W.norm(2)


def _better(mode: str, value: float, best: Optional[float]) -> bool:
    if best is None:
        return True
    return value < best if mode == "min" else value > best


def _check_mode(mode: str) -> None:
    if mode not in ("min", "max"):
        raise ConfigurationError(f"mode must be 'min' or 'max', got {mode!r}")


def _monitored(state, key: str, owner: str) -> float:
    metrics = state[S.METRICS]
    if key not in metrics:
        raise ConfigurationError(f"{owner}: monitored metric {key!r} not found; available: {', '.join(metrics)}")
    return float(metrics[key])


class Checkpointer(Callback):
    """Save the trial's state at each epoch end, or only on strict improvement.

    ``path_template`` is formatted with ``epoch`` (completed epoch count,
    1-based) and the current metric values.
    """

    def __init__(self, path_template: str, save_mode: str = "every_epoch", monitor: str = None, mode: str = "min"):
        if save_mode not in ("every_epoch", "best"):
            raise ConfigurationError(f"save_mode must be 'every_epoch' or 'best', got {save_mode!r}")
        if save_mode == "best":
            if monitor is None:
                raise ConfigurationError("best-mode checkpointer needs a monitor key")
            _check_mode(mode)
        self.path_template = path_template
        self.save_mode = save_mode
        self.monitor = monitor
        self.mode = mode
        self.best: Optional[float] = None
        self.saved: List[str] = []

    def _path(self, state) -> str:
        trial = state[S.TRIAL]
        return self.path_template.format(epoch=trial.epochs_completed, **state.get(S.METRICS, {}))

    def _save(self, state) -> None:
        path = self._path(state)
        persistence.save(state[S.TRIAL].state_dict(), path)
        self.saved.append(path)

    def on_end_epoch(self, state):
        if self.save_mode == "every_epoch":
            self._save(state)
            return
        value = _monitored(state, self.monitor, "checkpointer")
        if _better(self.mode, value, self.best):
            self.best = value
            self._save(state)

    def on_checkpoint_save(self, state):
        self._save(state)

    def state_payload(self) -> bytes:
        return json.dumps({"best": self.best}).encode()

    def load_state_payload(self, payload: bytes) -> None:
        if payload:
            self.best = json.loads(payload)["best"]


def checkpointer(path_template: str, save_mode: str = "every_epoch", monitor: str = None, mode: str = "min") -> Checkpointer:
    return Checkpointer(path_template, save_mode, monitor, mode)


class EarlyStopping(Callback):
    """Request a stop after ``patience`` consecutive epochs without strict improvement."""

    def __init__(self, monitor: str = "loss", patience: int = 0, mode: str = "min"):
        if patience < 0:
            raise ConfigurationError(f"patience must be >= 0, got {patience}")
        _check_mode(mode)
        self.monitor = monitor
        self.patience = patience
        self.mode = mode
        self.best: Optional[float] = None
        self.wait = 0

    def on_end_epoch(self, state):
        value = _monitored(state, self.monitor, "early_stopping")
        if _better(self.mode, value, self.best):
            self.best = value
            self.wait = 0
            return
        self.wait += 1
        if self.wait >= self.patience:
            state[S.STOP_TRAINING] = True

    def state_payload(self) -> bytes:
        return json.dumps({"best": self.best, "wait": self.wait}).encode()

    def load_state_payload(self, payload: bytes) -> None:
        if payload:
            data = json.loads(payload)
            self.best, self.wait = data["best"], data["wait"]


def early_stopping(monitor_key: str = "loss", patience: int = 0, mode: str = "min") -> EarlyStopping:
    return EarlyStopping(monitor_key, patience, mode)


class LRDecay(Callback):
    """Multiply the optimizer's learning rate by ``factor`` every ``every`` epochs."""

    def __init__(self, factor: float, every: int = 1):
        if not factor > 0:
            raise ContractError(f"decay factor must be positive, got {factor}")
        if every < 1:
            raise ContractError(f"decay interval must be >= 1, got {every}")
        self.factor = factor
        self.every = every

    def on_end_epoch(self, state):
        if (state[S.EPOCH] + 1) % self.every == 0:
            opt = state[S.OPTIMIZER]
            opt.lr = opt.lr * self.factor


def lr_decay(factor: float, every: int = 1) -> LRDecay:
    return LRDecay(factor, every)


def format_float(value) -> str:
    """Shortest string that parses back to the same double (at most 17 significant digits)."""
    if isinstance(value, (bool, int)):
        return str(value)
    return repr(float(value))


class CSVLogger(Callback):
    """Write metrics to CSV: header ``epoch,batch,<metrics>``, one row per epoch or per batch.

    Columns are fixed by the first row written; later rows leave absent
    metrics empty.
    """

    def __init__(self, path: str, per_batch: bool = False):
        self.path = path
        self.per_batch = per_batch
        self._file = None
        self._writer = None
        self._columns: Optional[List[str]] = None
        self._batch = 0

    def on_start(self, state):
        self._file = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._columns = None

    def _row(self, state):
        metrics = state[S.METRICS]
        if self._columns is None:
            self._columns = list(metrics)
            self._writer.writerow(["epoch", "batch"] + self._columns)
        row = [str(state[S.EPOCH] + 1), str(self._batch)]
        row += [format_float(metrics[c]) if c in metrics else "" for c in self._columns]
        self._writer.writerow(row)

    def on_step_training(self, state):
        self._batch = state[S.BATCH]
        if self.per_batch:
            self._row(state)

    def on_end_epoch(self, state):
        if not self.per_batch:
            self._row(state)
        self._file.flush()

    def on_end(self, state):
        if self._file is not None:
            self._file.close()
            self._file = None


def csv_logger(path: str, per_batch: bool = False) -> CSVLogger:
    return CSVLogger(path, per_batch)


class ConsoleLogger(Callback):
    """Print ``epoch e/E name:value ...`` once per epoch, values at 4 significant digits."""

    def __init__(self, stream=None):
        self.stream = stream

    def on_end_epoch(self, state):
        parts = [f"epoch {state[S.EPOCH] + 1}/{state[S.MAX_EPOCHS]}"]
        parts += [f"{k}:{_fmt4(v)}" for k, v in state[S.METRICS].items()]
        print(" ".join(parts), file=self.stream, flush=True)


def _fmt4(value) -> str:
    value = float(value)
    if math.isnan(value) or math.isinf(value):
        return str(value)
    return f"{value:.4g}"


def console_logger(stream=None) -> ConsoleLogger:
    return ConsoleLogger(stream)
