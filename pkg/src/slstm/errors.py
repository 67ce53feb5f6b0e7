"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes do not line up."""


class NumericOverflowError(ArithmeticError):
    """A forward pass or loss produced a non-finite value (training diverged)."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class MnistDataError(ValueError):
    """Base class for malformed IDX input."""


class IdxFormatError(MnistDataError):
    pass


class IdxLengthError(MnistDataError):
    pass


class LabelValueError(MnistDataError):
    def __init__(self, message, index):
        super().__init__(message)
        self.index = index
