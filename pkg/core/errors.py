"""
File that describes the exceptions raised across the library.
"""


class ContractViolation(ValueError):
    """
    Raised when an argument breaks an operation's precondition:
    a shape mismatch, a non-finite value or an out-of-range scalar.
    """


class MissingTraceError(RuntimeError):
    """
    Raised when a gradient is requested for an input that was not passed through ``forward`` first.
    """


class DivergedChainError(RuntimeError):
    """
    Raised when a Langevin chain leaves the finite reals.

    :param step: (:class:`int`) Index of the Langevin step that produced the non-finite state.
    :param message: (:class:`str`) Human-readable detail.
    """

    def __init__(self, step: int, message: str = "non-finite Langevin state"):
        super().__init__(f"{message} at step {step}")
        self.step = step


class NonNormalizableError(ValueError):
    """
    Raised when a closed-form density does not exist, e.g. θ2 ≤ 0 on the Gaussian testbed.
    """


class ConfigError(ValueError):
    """
    Raised when a run configuration fails to parse or validate.

    :param message: (:class:`str`) What went wrong.
    :param key: (:class:`str`) Dotted key that caused the failure, if known.
    :param line: (:class:`int`) 1-based line number in the config file, if known.
    """

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        location = ""
        if line is not None:
            location += f"line {line}: "
        if key is not None:
            location += f"{key}: "
        super().__init__(location + message)
        self.message = message
        self.key = key
        self.line = line


class CheckpointError(ValueError):
    """
    Raised when a checkpoint file is of another format version, truncated or corrupted.
    """
