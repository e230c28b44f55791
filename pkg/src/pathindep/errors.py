"""Exception hierarchy shared by every module."""


class PathIndepError(Exception):
    pass


class ConfigurationError(PathIndepError):
    """Inconsistent dimensions, bad step sizes, malformed configs."""


class ValidationError(PathIndepError):
    pass


class NotFoundError(PathIndepError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NumericError(PathIndepError, ArithmeticError):
    """A computation produced a non-finite value or overflowed."""


class DomainError(PathIndepError, ValueError):
    """An argument fell outside the admissible domain of a map."""


class DegenerateTransformError(DomainError):
    pass
