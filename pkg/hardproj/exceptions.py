"""
Exception hierarchy of hardproj.

Every error raised on purpose by the package derives from
:class:`HardProjError`. The command-line interface maps the three families
below to exit codes: usage errors (:class:`ConfigError`, :class:`ShapeError`)
exit with 1, numerical failures (:class:`NumericalError`) with 2 and file
problems (:class:`DatasetFormatError`) with 3.
"""

__all__ = [
    "HardProjError",
    "ShapeError",
    "ConfigError",
    "NumericalError",
    "RankDeficiencyError",
    "ProjectionInfeasibleError",
    "ConstraintEvaluationError",
    "ConvergenceError",
    "UndefinedMetricError",
    "TapeError",
    "DatasetFormatError",
]


class HardProjError(Exception):
    """Base hardproj error exception."""

    pass


class ShapeError(HardProjError, ValueError):
    """Array shapes do not chain, or user input is not finite."""

    pass


class ConfigError(HardProjError, ValueError):
    """Invalid configuration value or parameter combination."""

    pass


class NumericalError(HardProjError):
    """Base class of numerical failures."""

    pass


class RankDeficiencyError(NumericalError):
    """
    Symmetric positive-definite factorization hit a non-positive pivot.

    :param pivot: Index of the offending pivot.
    :param batch_index: Batch instance of the offending matrix, or ``None``
        for an unbatched solve.
    """

    def __init__(self, pivot, batch_index=None, value=None):
        self.pivot = pivot
        self.batch_index = batch_index
        self.value = value
        message = "Matrix is rank deficient at pivot {}".format(pivot)
        if batch_index is not None:
            message += " of batch instance {}".format(batch_index)
        if value is not None:
            message += " (pivot value {:.3e})".format(value)
        super(RankDeficiencyError, self).__init__(message)


class ProjectionInfeasibleError(NumericalError):
    """The linearized constraint system of one instance has dependent rows."""

    def __init__(self, batch_index, reason=""):
        self.batch_index = batch_index
        message = "Projection infeasible for batch instance {}".format(batch_index)
        if reason:
            message += ": {}".format(reason)
        super(ProjectionInfeasibleError, self).__init__(message)


class ConstraintEvaluationError(NumericalError):
    """A constraint callback returned non-finite values."""

    def __init__(self, labels, what="constraint"):
        self.labels = list(labels)
        super(ConstraintEvaluationError, self).__init__(
            "Non-finite {} value for: {}".format(what, ", ".join(self.labels))
        )


class ConvergenceError(NumericalError):
    """Scalar root finder failed inside its bracket."""

    def __init__(self, message, bracket=None):
        self.bracket = bracket
        if bracket is not None:
            message = "{} (bracket [{:.6g}, {:.6g}])".format(message, *bracket)
        super(ConvergenceError, self).__init__(message)


class UndefinedMetricError(NumericalError):
    """A metric is undefined for the given data, e.g. zero variance."""

    def __init__(self, metric, name):
        self.metric = metric
        self.name = name
        super(UndefinedMetricError, self).__init__(
            "{} is undefined for {}".format(metric, name)
        )


class TapeError(HardProjError, RuntimeError):
    """Backward pass requested from a consumed tape or stale tensors."""

    pass


class DatasetFormatError(HardProjError, IOError):
    """Malformed dataset, statistics sidecar or checkpoint file."""

    pass
