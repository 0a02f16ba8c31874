"""Exception hierarchy.

The CLI maps :class:`InputError` subclasses to exit status 2 and
:class:`EstimationError` subclasses to exit status 3.
"""


class AdaptIndexError(Exception):
    """Base class for all package errors."""


class InputError(AdaptIndexError, ValueError):
    """Bad user input: files, configs, out-of-domain arguments."""


class IngestionError(InputError):
    """A CSV file could not be read into a :class:`~adaptindex.data.Dataset`."""


class ConfigError(InputError):
    """An experiment or CLI configuration failed validation.

    ``problems`` lists every invalid field, not just the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DomainError(InputError):
    """Argument outside the domain of a geometric map."""


class DegenerateInputError(InputError):
    """A vector or sample too close to zero / constant to normalize."""


class EstimationError(AdaptIndexError, ArithmeticError):
    """Numerical failure inside an estimator."""


class RankDeficiencyError(EstimationError):
    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class DegenerateInformationError(EstimationError):
    """The estimated score vanishes on every observation."""


class SingularInformationError(EstimationError):
    """Restricted information matrix not invertible."""


class ConvergenceError(EstimationError):
    def __init__(self, message, last_iterate=None, grad_norm=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm
