"""Exception and warning types shared across the package."""


class BlockInferError(Exception):
    """Base class for all errors raised by blockinfer."""


class InputError(BlockInferError):
    """Invalid user input (bad file, inconsistent shapes, wrong value domain)."""


class ParseError(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class DomainViolation(InputError):
    pass


class SymmetryViolation(InputError):
    pass


class InvalidK(BlockInferError):
    pass


class DegenerateClass(BlockInferError):
    """A class pair carries (numerically) zero responsibility weight."""


class FitInfeasible(BlockInferError):
    pass


class DegenerateClassWarning(UserWarning):
    pass


class OutOfRangeWarning(UserWarning):
    """Linear predictor left the interval where the polynomial surrogate is valid."""


class CovariateSymmetryWarning(UserWarning):
    pass
