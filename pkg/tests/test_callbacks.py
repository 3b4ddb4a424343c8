import csv
import io

import numpy as np
import pytest

from trialfit import autodiff as ad
from trialfit import callbacks as C
from trialfit import state as S
from trialfit.autodiff import Parameter, Tensor
from trialfit.callbacks import CallbackList, Hook
from trialfit.errors import CallbackError, ConfigurationError, ContractError, MissingKeyError
from trialfit.nn import Module
from trialfit.optim import SGD
from trialfit.state import State

from oracles import loop_norm_sum, numeric_grads, relative_error


class Bag(Module):
    def __init__(self, arrays):
        self.ps = [Parameter(np.array(a, dtype=float), f"p{i}") for i, a in enumerate(arrays)]


def test_hook_catalogue_has_nineteen_names():
    assert len(Hook) == 19
    assert Hook.on_criterion.value == "on_criterion"


def test_bind_runs_only_at_its_hook():
    def bump(state):
        state[S.LOSS] = state[S.LOSS] + 1

    cb = C.bind(Hook.on_criterion, bump)
    state = State({S.LOSS: Tensor(0.0)})
    CallbackList([cb]).fire(Hook.on_forward, state)
    assert state[S.LOSS].item() == 0.0
    CallbackList([cb]).fire(Hook.on_criterion, state)
    assert state[S.LOSS].item() == 1.0


def test_dispatch_in_insertion_order():
    trace = []
    cbs = CallbackList([C.on_start(lambda s, n=n: trace.append(n)) for n in "abc"])
    cbs.fire(Hook.on_start, State())
    assert trace == ["a", "b", "c"]


def test_callback_error_identifies_hook_and_callback():
    def boom(state):
        raise ValueError("bad")

    with pytest.raises(CallbackError, match="boom@on_end.*on_end.*bad"):
        CallbackList([C.on_end(boom)]).fire(Hook.on_end, State())


def test_l2_weight_decay_examples():
    state = State({S.MODEL: Bag([[3.0, 4.0]]), S.LOSS: Tensor(0.0)})
    C.l2_weight_decay.on_criterion(state)
    assert state[S.LOSS].item() == 5.0
    state = State({S.MODEL: Bag([[3.0, 4.0], [0.0, 0.0]]), S.LOSS: Tensor(1.0)})
    C.l2_weight_decay.on_criterion(state)
    assert state[S.LOSS].item() == 6.0


def test_l2_weight_decay_is_bound_to_on_criterion():
    assert C.l2_weight_decay.hook is Hook.on_criterion


def test_l2_weight_decay_random_models_and_gradient():
    rng = np.random.default_rng(3)
    arrays = [rng.standard_normal(rng.integers(1, 4, size=2)) for _ in range(3)]
    model = Bag(arrays)
    state = State({S.MODEL: model, S.LOSS: Tensor(0.0)})
    C.l2_weight_decay.on_criterion(state)
    assert abs(state[S.LOSS].item() - loop_norm_sum(arrays)) < 1e-12
    ad.backward(state[S.LOSS])
    fd = numeric_grads(lambda *ws: sum((ad.norm2(w) for w in ws), Tensor(0.0)), arrays, np.ones(()))
    assert relative_error([p.grad for p in model.ps], fd) < 1e-6


def test_l2_weight_decay_missing_keys():
    with pytest.raises(MissingKeyError):
        C.l2_weight_decay.on_criterion(State({S.LOSS: Tensor(0.0)}))


def test_add_to_loss_constant_and_zero():
    cb = C.add_to_loss(lambda s: Tensor(2.0))
    state = State({S.LOSS: Tensor(0.0)})
    cb.on_criterion(state)
    assert state[S.LOSS].item() == 2.0
    C.add_to_loss(lambda s: Tensor(0.0)).on_criterion(state)
    assert state[S.LOSS].item() == 2.0


def test_add_to_loss_gradient_flows():
    w = Parameter(np.array(3.0))
    state = State({S.LOSS: Tensor(0.0)})
    C.add_to_loss(lambda s: w * w).on_criterion(state)
    ad.backward(state[S.LOSS])
    assert w.grad == 6.0


def test_add_to_loss_rejects_non_scalar():
    with pytest.raises(ContractError):
        C.add_to_loss(lambda s: Tensor([1.0, 2.0])).on_criterion(State({S.LOSS: Tensor(0.0)}))


def _epoch_end_state(epoch, metrics, opt=None):
    return State({S.EPOCH: epoch, S.METRICS: metrics, S.STOP_TRAINING: False, S.OPTIMIZER: opt})


def _scripted_stop(cb, values, key="loss"):
    for e, v in enumerate(values):
        state = _epoch_end_state(e, {key: v})
        cb.on_end_epoch(state)
        if state[S.STOP_TRAINING]:
            return e + 1
    return None


def test_early_stopping_patience_zero():
    assert _scripted_stop(C.early_stopping("loss", 0), [1, 2]) == 2


def test_early_stopping_patience_two():
    assert _scripted_stop(C.early_stopping("loss", 2), [5, 4, 4, 4]) == 4


def test_early_stopping_improving_never_stops():
    assert _scripted_stop(C.early_stopping("loss", 0), [5, 4, 3, 2, 1]) is None


def test_early_stopping_max_mode():
    assert _scripted_stop(C.early_stopping("acc", 0, "max"), [0.5, 0.6, 0.6], key="acc") == 3


def test_early_stopping_missing_metric():
    with pytest.raises(ConfigurationError, match="val_loss"):
        _scripted_stop(C.early_stopping("val_loss", 0), [1.0])


def test_early_stopping_negative_patience():
    with pytest.raises(ConfigurationError):
        C.early_stopping("loss", -1)


def _decay(factor, every, epochs, lr):
    opt = SGD([Parameter(np.zeros(1))], lr=lr)
    cb = C.lr_decay(factor, every)
    for e in range(epochs):
        cb.on_end_epoch(_epoch_end_state(e, {}, opt))
    return opt.lr


def test_lr_decay_examples():
    assert _decay(0.5, 1, 2, 0.1) == pytest.approx(0.025, rel=1e-15)
    assert _decay(1.0, 1, 7, 0.3) == 0.3
    assert _decay(0.1, 2, 5, 1.0) == pytest.approx(0.01, rel=1e-14)


def test_lr_decay_preconditions():
    with pytest.raises(ContractError):
        C.lr_decay(0.0)
    with pytest.raises(ContractError):
        C.lr_decay(0.5, every=0)


class _FakeTrial:
    def __init__(self):
        self.epochs_completed = 0


def _run_logger(logger, epochs, batches, metrics_per_epoch):
    state = State({S.METRICS: {}, S.EPOCH: 0, S.BATCH: 0})
    logger.on_start(state)
    for e in range(epochs):
        state[S.EPOCH] = e
        for b in range(batches):
            state[S.BATCH] = b
            state[S.METRICS] = {"running_loss": metrics_per_epoch[e]}
            logger.on_step_training(state)
        state[S.METRICS] = {"running_loss": metrics_per_epoch[e], "loss": metrics_per_epoch[e]}
        logger.on_end_epoch(state)
    logger.on_end(state)


def test_csv_logger_epoch_rows(tmp_path):
    path = tmp_path / "m.csv"
    values = [1 / 3, 2 / 7]
    _run_logger(C.csv_logger(str(path)), 2, 3, values)
    text = path.read_bytes().decode("utf-8")
    assert "\r" not in text
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["epoch", "batch", "running_loss", "loss"]
    assert len(rows) == 3
    assert rows[1][:2] == ["1", "2"]
    assert [float(r[3]) for r in rows[1:]] == values


def test_csv_logger_per_batch_rows(tmp_path):
    path = tmp_path / "m.csv"
    _run_logger(C.csv_logger(str(path), per_batch=True), 2, 3, [1.0, 2.0])
    rows = list(csv.reader(path.open()))
    assert len(rows) == 1 + 6
    assert [r[1] for r in rows[1:]] == ["0", "1", "2"] * 2


def test_csv_logger_unwritable_path(tmp_path):
    logger = C.csv_logger(str(tmp_path / "missing" / "m.csv"))
    with pytest.raises(CallbackError, match="on_start"):
        CallbackList([logger]).fire(Hook.on_start, State())


def test_float_format_round_trips():
    for v in [0.1, 1 / 3, 1e-300, 123456789.123456789, -2.5e17, float("inf")]:
        text = C.format_float(v)
        assert float(text) == v
        digits = text.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
        assert len(digits) <= 17


def test_console_logger_format():
    out = io.StringIO()
    state = State({S.EPOCH: 0, S.MAX_EPOCHS: 3, S.METRICS: {"loss": 1.23456789, "acc": 0.5}})
    C.console_logger(out).on_end_epoch(state)
    assert out.getvalue() == "epoch 1/3 loss:1.235 acc:0.5\n"


def test_checkpointer_requires_monitor_for_best():
    with pytest.raises(ConfigurationError):
        C.checkpointer("x.ckpt", "best")
