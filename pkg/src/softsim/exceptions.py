"""Exception and warning types shared across the package."""


class SoftsimError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatchError(SoftsimError, ValueError):
    """Two arrays that must agree in shape do not."""


class DimensionMismatchError(ShapeMismatchError):
    """Feature dimensions of two embedding matrices differ."""


class ZeroRowError(SoftsimError, ValueError):
    """A row that must be normalizable has (near-)zero Euclidean norm."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has zero norm and cannot be normalized")


class RelevancyRangeError(SoftsimError, ValueError):
    """A relevancy entry lies outside the closed interval [0, 1]."""

    def __init__(self, row: int, col: int, value: float):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(
            f"relevancy entry ({row}, {col}) = {value!r} is outside [0, 1]"
        )


class RelevancyParseError(SoftsimError, ValueError):
    """A relevancy or matrix file could not be parsed."""


class IndexOutOfRangeError(SoftsimError, IndexError):
    """An anchor/candidate index exceeds the matrix bounds."""


class EmptyLabelSetError(SoftsimError, ValueError):
    """An item carries no class labels, so overlap is undefined."""

    def __init__(self, index: int, kind: str = "label"):
        self.index = index
        super().__init__(f"item {index} has an empty {kind} set")


class InvalidThresholdError(SoftsimError, ValueError):
    """Mining or relevance threshold outside its valid range."""


class MissingSimilarityError(SoftsimError, ValueError):
    """A mining strategy that needs similarities was called without them."""


class NumericalOverflowError(SoftsimError, FloatingPointError):
    """A loss evaluation produced a non-finite value despite stabilization."""


class InvalidScheduleError(SoftsimError, ValueError):
    """Learning-rate schedule arguments are inconsistent."""


class DivergenceError(SoftsimError, RuntimeError):
    """Training loss became non-finite."""


class EmptyEnsembleError(SoftsimError, ValueError):
    """An ensemble was requested over zero similarity matrices."""


class ConfigError(SoftsimError, ValueError):
    """An experiment configuration file is malformed or inconsistent."""


class TauRelaxationWarning(UserWarning):
    """Relaxation factor is at or above the smallest positive relevancy.

    Equal-relevancy pairs whose labels differ by less than the relaxation
    width are then indistinguishable from genuinely tied pairs; this is
    permitted (larger relaxation can help in practice) but worth flagging.
    """
