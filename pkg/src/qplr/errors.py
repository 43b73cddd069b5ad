"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so keep the ``exit_code``
attributes stable.
"""


class QPLRError(Exception):
    exit_code = 1


class ConfigurationError(QPLRError, ValueError):
    """Invalid configuration: bad qubit counts, missing artifacts, bad ranges."""

    exit_code = 2


class ContractViolation(QPLRError, ValueError):
    """A caller broke an operation's precondition (shapes, indices)."""

    exit_code = 2


class DegenerateInputError(QPLRError, ValueError):
    """Input for which the operation is undefined (e.g. zero-norm amplitudes)."""

    exit_code = 2


class TrainingError(QPLRError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch

    exit_code = 3


class IngestionError(QPLRError, IOError):
    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field

    exit_code = 4
