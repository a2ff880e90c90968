"""Exception hierarchy shared by all qqm modules."""


class QQMError(Exception):
    """Base class for qqm errors."""


class ConfigurationError(QQMError, ValueError):
    """Invalid circuit, model or experiment configuration."""


class DomainError(QQMError, ValueError):
    """An input variable lies outside the domain of an encoding or oracle."""


class NumericalError(QQMError, RuntimeError):
    """A loss or derivative became non-finite during training."""

    def __init__(self, message, epoch=None, where=None):
        super().__init__(message)
        self.epoch = epoch
        self.where = where
