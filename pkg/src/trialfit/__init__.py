"""Model fitting for differentiable programs: trials, callbacks and metric trees
over a small reverse-mode autodiff core."""
from . import autodiff, callbacks, metrics, persistence
from .autodiff import Parameter, Tensor, backward, detach, make_tensor, no_grad, zero_grad
from .callbacks import Callback, Hook, add_to_loss, bind, l2_weight_decay
from .optim import SGD
from .persistence import TrialStateRecord
from .state import State, StateKey, state_key
from .state import (BATCH, CRITERION, DATA_PHASE, EPOCH, LOSS, MAX_EPOCHS, METRICS, MODEL, OPTIMIZER,
                    STOP_TRAINING, TRAIN_STEPS, TRIAL, X, Y_PRED, Y_TRUE)
from .trial import Trial

__version__ = "0.1.0"
