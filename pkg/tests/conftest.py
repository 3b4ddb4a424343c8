import numpy as np
import pytest

from trialfit import callbacks as C
from trialfit.data import ArrayBatches
from trialfit.nn import Linear
from trialfit.optim import SGD
from trialfit.trial import Trial


class Tracer(C.Callback):
    """Records every hook it sees, in order."""

    def __init__(self):
        self.trace = []

    def __getattribute__(self, name):
        if name in C.Hook.__members__:
            return lambda state: object.__getattribute__(self, "trace").append(name)
        return object.__getattribute__(self, name)


class ScriptedMetric(C.Callback):
    """Overwrites METRICS[key] at each epoch end with the next scripted value."""

    def __init__(self, key, values):
        self.key = key
        self.values = list(values)

    def on_end_epoch(self, state):
        from trialfit import state as S
        state[S.METRICS][self.key] = self.values[state[S.EPOCH]]


def regression_data(seed=0, n=24):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, 1))
    return x, 2 * x + 1


def make_trial(seed=0, callbacks=(), metrics=("loss",), lr=0.1, momentum=0.5, batch_size=8, shuffle=True, val=True):
    x, y = regression_data(seed)
    model = Linear(1, 1, np.random.default_rng(seed))
    names, params = zip(*model.named_parameters())
    opt = SGD(params, lr=lr, momentum=momentum, names=names)
    trial = Trial(model, opt, criterion="mse", metrics=list(metrics), callbacks=list(callbacks))
    trial.with_train_generator(ArrayBatches(x, y, batch_size, shuffle=shuffle, seed=seed))
    if val:
        trial.with_val_generator(ArrayBatches(x[:10], y[:10], 4))
    return trial


@pytest.fixture
def tracer():
    return Tracer()


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
