"""The fitting engine.

Hook order for one epoch of :meth:`Trial.run`::

    on_start_epoch, on_start_training,
      per batch: on_sample, on_forward, on_criterion, on_backward, on_step_training
    on_end_training,
    [on_start_validation,
      per batch: on_sample_validation, on_forward_validation,
                 on_criterion_validation, on_step_validation
     on_end_validation]
    on_end_epoch

wrapped in a single ``on_start`` / ``on_end`` pair.
"""
from __future__ import annotations

import math
from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from . import losses
from . import metrics as M
from . import state as S
from .autodiff import Tensor
from .callbacks import CallbackList, Hook
from .errors import CheckpointError, ConfigurationError, ContractError, NonFiniteLossError
from .persistence import TrialStateRecord

CRITERIA = {
    "mse": losses.mse,
    "binary_cross_entropy": losses.binary_cross_entropy,
    "bce": losses.binary_cross_entropy,
    "hinge": losses.hinge,
}


def _criterion(criterion):
    if criterion is None or callable(criterion):
        return criterion
    try:
        return CRITERIA[criterion]
    except KeyError:
        raise ConfigurationError(f"unknown criterion {criterion!r}; known: {', '.join(sorted(CRITERIA))}") from None


def _metric_tree(metric):
    if isinstance(metric, str):
        return M.build_default(metric)
    if isinstance(metric, M.MetricTree):
        return metric
    if isinstance(metric, M.Metric):
        return M.MetricTree(metric)
    raise ConfigurationError(f"metrics must be registry keys or Metric instances, got {metric!r}")


class Trial:
    """Binds a model, optimizer, criterion, metrics and callbacks, and fits the model.

    Without a criterion every batch starts from a zero loss that callbacks
    (e.g. :func:`~trialfit.callbacks.add_to_loss`) add to. With
    ``pass_state=True`` the model is called as ``forward(x, state)``.
    ``run(epochs)`` trains until ``epochs`` epochs have been completed in
    total, so a trial restored with :meth:`load_state_dict` resumes where it
    stopped.
    """

    def __init__(self, model, optimizer=None, criterion=None, metrics=(), callbacks=(), pass_state: bool = False):
        self.model = model
        self.optimizer = optimizer
        self.criterion = _criterion(criterion)
        self.metric_trees = [_metric_tree(m) for m in metrics]
        M.check_unique(self.metric_trees)
        self.callbacks = callbacks if isinstance(callbacks, CallbackList) else CallbackList(callbacks)
        self.pass_state = pass_state
        self.train_generator = None
        self.val_generator = None
        self.test_generator = None
        self.epochs_completed = 0
        self.history: List[Dict[str, float]] = []
        self.state: Optional[S.State] = None

    def with_train_generator(self, generator) -> "Trial":
        self.train_generator = generator
        return self

    def with_val_generator(self, generator) -> "Trial":
        self.val_generator = generator
        return self

    def with_test_generator(self, generator) -> "Trial":
        self.test_generator = generator
        return self

    def with_generators(self, train=None, val=None, test=None) -> "Trial":
        if train is not None:
            self.train_generator = train
        if val is not None:
            self.val_generator = val
        if test is not None:
            self.test_generator = test
        return self

    def _new_state(self, max_epochs: int = 0) -> S.State:
        state = S.State({
            S.MODEL: self.model,
            S.OPTIMIZER: self.optimizer,
            S.CRITERION: self.criterion,
            S.EPOCH: self.epochs_completed,
            S.MAX_EPOCHS: max_epochs,
            S.BATCH: 0,
            S.TRAIN_STEPS: 0,
            S.METRICS: {},
            S.STOP_TRAINING: False,
            S.DATA_PHASE: S.TRAIN,
            S.TRIAL: self,
        })
        self.state = state
        return state

    def _fire(self, hook: Hook, state) -> None:
        self.callbacks.fire(hook, state)

    def _parameters(self):
        params = list(self.model.parameters())
        if self.optimizer is not None:
            seen = {id(p) for p in params}
            params += [p for p in self.optimizer.params if id(p) not in seen]
        return params

    def _sample(self, state, x, y) -> None:
        state[S.X] = ad.tensor(x)
        if y is None:
            state.pop(S.Y_TRUE, None)
        else:
            state[S.Y_TRUE] = ad.tensor(y)
        state.pop(S.Y_PRED, None)

    def _forward(self, state) -> None:
        if self.pass_state:
            y_pred = self.model.forward(state[S.X], state)
        else:
            y_pred = self.model.forward(state[S.X])
        if y_pred is not None:
            state[S.Y_PRED] = y_pred

    def _base_loss(self, state) -> Tensor:
        if self.criterion is None:
            return Tensor(0.0)
        return self.criterion(state[S.Y_PRED], state[S.Y_TRUE])

    def _process(self, state, prefix: str = "") -> None:
        out = state[S.METRICS]
        for tree in self.metric_trees:
            for name, value in tree.process(state).items():
                out[prefix + name] = value

    def _process_final(self, state, prefix: str = "") -> None:
        out = state[S.METRICS]
        for tree in self.metric_trees:
            for name, value in tree.process_final(state).items():
                out[prefix + name] = value

    def _reset_metrics(self, state) -> None:
        for tree in self.metric_trees:
            tree.reset(state)

    def _train_epoch(self, state) -> None:
        epoch = state[S.EPOCH]
        state[S.DATA_PHASE] = S.TRAIN
        if hasattr(self.train_generator, "set_epoch"):
            self.train_generator.set_epoch(epoch)
        if hasattr(self.train_generator, "__len__"):
            state[S.TRAIN_STEPS] = len(self.train_generator)
        self._fire(Hook.on_start_training, state)
        self._reset_metrics(state)
        params = self._parameters()
        steps = 0
        for batch, (x, y) in enumerate(self.train_generator):
            state[S.BATCH] = batch
            self._sample(state, x, y)
            self._fire(Hook.on_sample, state)
            self._forward(state)
            self._fire(Hook.on_forward, state)
            state[S.LOSS] = self._base_loss(state)
            self._fire(Hook.on_criterion, state)
            loss = ad.tensor(state[S.LOSS])
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteLossError(epoch, batch, value)
            self._process(state)
            ad.zero_grad(params)
            ad.backward(loss)
            self._fire(Hook.on_backward, state)
            if self.optimizer is not None:
                for p in self.optimizer.params:
                    if p.grad is None:
                        # not reached from the loss: zero gradient
                        p.grad = np.zeros_like(p.value)
                self.optimizer.step()
            self._fire(Hook.on_step_training, state)
            steps += 1
        state[S.TRAIN_STEPS] = steps
        self._fire(Hook.on_end_training, state)
        self._process_final(state)

    def _validate(self, state, generator, prefix: str = "val_") -> None:
        state[S.DATA_PHASE] = S.VALIDATION
        self._fire(Hook.on_start_validation, state)
        self._reset_metrics(state)
        with ad.no_grad():
            for batch, (x, y) in enumerate(generator):
                state[S.BATCH] = batch
                self._sample(state, x, y)
                self._fire(Hook.on_sample_validation, state)
                self._forward(state)
                self._fire(Hook.on_forward_validation, state)
                state[S.LOSS] = self._base_loss(state)
                self._fire(Hook.on_criterion_validation, state)
                self._process(state, prefix)
                self._fire(Hook.on_step_validation, state)
        self._fire(Hook.on_end_validation, state)
        self._process_final(state, prefix)

    def run(self, epochs: int = 1) -> List[Dict[str, float]]:
        """Train until ``epochs`` epochs are complete; return the per-epoch metric history."""
        if self.train_generator is None:
            raise ConfigurationError("no training generator attached; call with_train_generator first")
        if epochs < 0:
            raise ContractError(f"epochs must be >= 0, got {epochs}")
        if self.optimizer is None:
            raise ConfigurationError("training needs an optimizer")
        state = self._new_state(epochs)
        self._fire(Hook.on_start, state)
        for epoch in range(self.epochs_completed, epochs):
            state[S.EPOCH] = epoch
            state[S.METRICS] = {}
            self._fire(Hook.on_start_epoch, state)
            self._train_epoch(state)
            if self.val_generator is not None:
                self._validate(state, self.val_generator)
            self.epochs_completed = epoch + 1
            self._fire(Hook.on_end_epoch, state)
            self.history.append(dict(state[S.METRICS]))
            if state[S.STOP_TRAINING]:
                break
        self._fire(Hook.on_end, state)
        return self.history

    def evaluate(self) -> Dict[str, float]:
        """One validation pass; returns ``val_``-prefixed metrics. Fires validation hooks only."""
        if self.val_generator is None:
            raise ConfigurationError("no validation generator attached; call with_val_generator first")
        state = self._new_state()
        self._validate(state, self.val_generator)
        return dict(state[S.METRICS])

    def predict(self) -> List[np.ndarray]:
        """Forward passes over the test (else validation) generator, in batch order."""
        generator = self.test_generator if self.test_generator is not None else self.val_generator
        if generator is None:
            raise ConfigurationError("no test or validation generator attached")
        state = self._new_state()
        state[S.DATA_PHASE] = S.INFERENCE
        predictions = []
        self._fire(Hook.on_start_validation, state)
        with ad.no_grad():
            for batch, item in enumerate(generator):
                x, y = item if isinstance(item, tuple) else (item, None)
                state[S.BATCH] = batch
                self._sample(state, x, y)
                self._fire(Hook.on_sample_validation, state)
                self._forward(state)
                self._fire(Hook.on_forward_validation, state)
                predictions.append(ad.tensor(state[S.Y_PRED]).numpy())
                self._fire(Hook.on_step_validation, state)
        self._fire(Hook.on_end_validation, state)
        return predictions

    def _callback_names(self) -> List[str]:
        return [f"{i:04d}:{type(cb).__name__}" for i, cb in enumerate(self.callbacks)]

    def state_dict(self) -> TrialStateRecord:
        record = TrialStateRecord(epoch=self.epochs_completed)
        record.parameters = {name: p.value.copy() for name, p in self.model.named_parameters()}
        if self.optimizer is not None:
            opt = self.optimizer.state_dict()
            record.optimizer_scalars = {"lr": opt["lr"], "momentum": opt["momentum"]}
            record.optimizer_buffers = dict(opt["velocity"])
        record.callback_payloads = {n: cb.state_payload() for n, cb in zip(self._callback_names(), self.callbacks)}
        return record

    def load_state_dict(self, record: TrialStateRecord) -> None:
        named = dict(self.model.named_parameters())
        for name in sorted(set(named) | set(record.parameters)):
            if name not in named:
                raise CheckpointError(f"checkpoint parameter {name!r} does not exist in the model")
            if name not in record.parameters:
                raise CheckpointError(f"model parameter {name!r} missing from checkpoint")
            if np.shape(record.parameters[name]) != named[name].shape:
                raise CheckpointError(f"parameter {name!r}: checkpoint shape {np.shape(record.parameters[name])}, "
                                      f"model shape {named[name].shape}")
        names = self._callback_names()
        if sorted(record.callback_payloads) != names:
            raise CheckpointError(f"callback mismatch: checkpoint has {sorted(record.callback_payloads)}, trial has {names}")
        if self.optimizer is not None:
            self.optimizer.load_state_dict({
                "lr": record.optimizer_scalars["lr"],
                "momentum": record.optimizer_scalars["momentum"],
                "velocity": record.optimizer_buffers,
            })
        for name, p in named.items():
            p.value = np.array(record.parameters[name], dtype=np.float64)
            p.grad = None
        for name, cb in zip(names, self.callbacks):
            cb.load_state_payload(record.callback_payloads[name])
        self.epochs_completed = int(record.epoch)
        self._fire(Hook.on_checkpoint_load, self._new_state())

    def checkpoint(self) -> None:
        """Ask callbacks (e.g. a checkpointer) to persist the trial now."""
        state = self.state if self.state is not None else self._new_state()
        self._fire(Hook.on_checkpoint_save, state)
