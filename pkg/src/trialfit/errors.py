"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand shapes do not conform for an operation."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class ConfigurationError(ValueError):
    """A trial, metric or callback was configured inconsistently."""


class MissingKeyError(KeyError):
    """A state key was read before anything was stored under it."""

    def __init__(self, key):
        self.key = key
        super().__init__(f"state has no entry for key {key!r}")

    def __str__(self):
        return self.args[0]


class CallbackError(RuntimeError):
    """A callback raised while handling a hook."""

    def __init__(self, hook, callback, cause):
        self.hook = hook
        self.callback = callback
        self.cause = cause
        super().__init__(f"callback {callback!r} failed in {hook}: {type(cause).__name__}: {cause}")


class NonFiniteLossError(RuntimeError):
    """The training loss became NaN or infinite."""

    def __init__(self, epoch, batch, value):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")


class CheckpointError(ValueError):
    """A checkpoint file or record could not be read or applied."""
