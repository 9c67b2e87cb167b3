"""
Evaluation statistics: coefficient of determination, mean absolute
percentage error and relative conservation error (RCE).

RCE divides the absolute residual of every constraint by an inlet-side
magnitude supplied by the constraint system (total inlet atom flow for an
atomic balance, sum of inlet enthalpy flow magnitudes for the enthalpy
balance) and reports it in percent. Weighted totals declared by the
constraints, such as total mass, are reported the same way against the
weighted sum of their reference magnitudes.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .constraints import (
    LinearSpec,
    evaluate_reference,
    get_constraints,
    residual_linear,
    residual_separable,
)
from .exceptions import ShapeError, UndefinedMetricError
from .utils import FLOAT_FORMAT

__all__ = [
    "MAPE_EPSILON",
    "RCE_REFERENCE",
    "EvalReport",
    "r_squared",
    "mape",
    "rce",
    "total_rce",
    "evaluate",
    "comparison_rows",
    "format_comparison",
    "write_comparison_csv",
]

logger = logging.getLogger(__name__)

MAPE_EPSILON = 1e-12

RCE_REFERENCE = "inlet-side magnitude"


def _pair(y_true, y_pred):
    y_true = np.atleast_2d(np.asarray(y_true, dtype=np.float64))
    y_pred = np.atleast_2d(np.asarray(y_pred, dtype=np.float64))
    if y_true.shape != y_pred.shape:
        raise ShapeError(
            "Truth {} and prediction {} shapes differ".format(y_true.shape, y_pred.shape)
        )
    return y_true, y_pred


def r_squared(y_true, y_pred, per_column=True, columns=None):
    """
    Coefficient of determination ``1 - SS_res / SS_tot`` per column.

    :param y_true: Targets (n_samples, n_columns).
    :param y_pred: Predictions with the same shape.
    :param per_column: Return one value per column; otherwise their mean.
    :param columns: Column names used in error messages.
    :raises UndefinedMetricError: naming a column without variance.
    """
    y_true, y_pred = _pair(y_true, y_pred)
    if y_true.shape[0] < 2:
        raise UndefinedMetricError("R2", "fewer than two samples")
    residual = np.sum((y_true - y_pred) ** 2, axis=0)
    total = np.sum((y_true - y_true.mean(axis=0)) ** 2, axis=0)
    flat = ~(total > 0.0)
    if flat.any():
        k = int(np.flatnonzero(flat)[0])
        name = columns[k] if columns is not None else "column {}".format(k)
        raise UndefinedMetricError("R2", name)
    scores = 1.0 - residual / total
    return scores if per_column else float(scores.mean())


def mape(y_true, y_pred, eps=MAPE_EPSILON):
    """
    Mean absolute percentage error over samples and columns.

    Entries with ``|y_true| <= eps`` are left out with a warning.

    :return: MAPE in percent.
    """
    y_true, y_pred = _pair(y_true, y_pred)
    keep = np.abs(y_true) > eps
    excluded = int(keep.size - keep.sum())
    if excluded:
        logger.warning("MAPE excludes %d near-zero truth values", excluded)
    if not keep.any():
        raise UndefinedMetricError("MAPE", "all-zero truth values")
    errors = np.abs(y_pred[keep] - y_true[keep]) / np.abs(y_true[keep])
    return float(errors.mean() * 100.0)


def rce(spec, x, y_pred):
    """
    Relative conservation error of every constraint, in percent.

    :param spec: Constraints with a ``reference_fn``.
    :type spec: :class:`hardproj.constraints.LinearSpec` or
        :class:`hardproj.constraints.SeparableSpec`
    :param x: Inputs, vector or batch.
    :param y_pred: Outputs, vector or batch.
    :return: Array (n_samples, n_constraints), or (n_constraints,) for one
        sample.
    :raises UndefinedMetricError: if a reference magnitude is zero or the
        spec has none.

    Example:

    .. code-block:: python

        from hardproj import get_constraints, rce

        spec = get_constraints("reactor")
        errors = rce(spec, test.inputs, model.predict(test.inputs))
        print(errors.max(axis=0))

    """
    spec = _spec(spec)
    single = np.ndim(y_pred) == 1
    residual, reference = _balance(spec, x, y_pred)
    zero = ~(reference > 0.0).all(axis=0)
    if zero.any():
        raise UndefinedMetricError("RCE", spec.labels[int(np.flatnonzero(zero)[0])])
    errors = np.abs(residual) / reference * 100.0
    return errors[0] if single else errors


def total_rce(spec, x, y_pred):
    """
    Relative conservation error of the weighted totals of the constraints.

    A total with weights ``w`` has residual ``sum_k w_k r_k`` and reference
    ``sum_k |w_k| ref_k``.

    :return: Array (n_samples, n_totals), or (n_totals,) for one sample.
    :raises UndefinedMetricError: if a total has a zero reference.
    """
    spec = _spec(spec)
    single = np.ndim(y_pred) == 1
    if not spec.totals:
        errors = np.zeros((np.atleast_2d(y_pred).shape[0], 0))
        return errors[0] if single else errors
    residual, reference = _balance(spec, x, y_pred)
    weights = np.array([w for _, w in spec.totals])
    total = residual @ weights.T
    scale = reference @ np.abs(weights).T
    zero = ~(scale > 0.0).all(axis=0)
    if zero.any():
        raise UndefinedMetricError("RCE", spec.totals[int(np.flatnonzero(zero)[0])][0])
    errors = np.abs(total) / scale * 100.0
    return errors[0] if single else errors


def _spec(spec):
    return get_constraints(spec) if isinstance(spec, str) else spec


def _balance(spec, x, y_pred):
    if isinstance(spec, LinearSpec):
        value = residual_linear(spec, x, y_pred)
    else:
        value = residual_separable(spec, x, y_pred)
    reference = evaluate_reference(spec, x)
    if reference is None:
        raise UndefinedMetricError("RCE", "constraints {} without reference".format(spec.name))
    return np.atleast_2d(value.residual), np.abs(reference)


@dataclass
class EvalReport:
    """
    Accuracy and feasibility of one model on one dataset.

    :ivar r2: R2 per output column.
    :ivar mape: MAPE over all outputs [%].
    :ivar rce_mean: Mean RCE per constraint [%].
    :ivar rce_max: Max RCE per constraint [%].
    :ivar predict_seconds: Wall time of the prediction over the dataset [s].
    """

    model_tag: str
    dataset_tag: str
    columns: Tuple[str, ...]
    r2: np.ndarray
    mape: float
    constraint_labels: Tuple[str, ...]
    rce_mean: np.ndarray
    rce_max: np.ndarray
    predict_seconds: float = float("nan")
    metadata: dict = field(default_factory=dict)

    @property
    def mean_r2(self):
        return float(np.mean(self.r2))

    def rows(self):
        """``(metric, value)`` pairs in report order."""
        rows = [("mean R2", self.mean_r2)]
        rows.extend(("R2 {}".format(c), float(v)) for c, v in zip(self.columns, self.r2))
        rows.append(("MAPE [%]", self.mape))
        rows.append(("predict time [s]", self.predict_seconds))
        for label, mean, peak in zip(self.constraint_labels, self.rce_mean, self.rce_max):
            rows.append(("mean RCE {} [%]".format(label), float(mean)))
            rows.append(("max RCE {} [%]".format(label), float(peak)))
        return rows

    def to_table(self):
        """Aligned text table."""
        rows = self.rows()
        width = max(len(name) for name, _ in rows)
        lines = ["{} on {}".format(self.model_tag, self.dataset_tag)]
        lines.extend("{:<{}}  {:.6g}".format(name, width, value) for name, value in rows)
        for key in sorted(self.metadata):
            lines.append("{:<{}}  {}".format(key, width, self.metadata[key]))
        return "\n".join(lines)

    def to_csv(self, path):
        """Write ``metric,value`` rows."""
        with open(path, "w", newline="") as buf:
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["metric", "value"])
            for name, value in self.rows():
                writer.writerow([name, FLOAT_FORMAT % value])
        logger.info("Wrote %s", path)
        return path


def evaluate(model, dataset, model_tag=None, dataset_tag=None, spec=None):
    """
    Evaluate a model on a dataset.

    :param model: Trained model.
    :type model: :class:`hardproj.model.SurrogateModel`
    :param dataset: Samples with physical units.
    :type dataset: :class:`hardproj.dataset.Dataset`
    :param spec: Constraints to report RCE for; defaults to the model's
        separable constraints so every variant is judged on the same
        balances. Totals of the constraints follow the constraint rows.
    :rtype: :class:`EvalReport`
    """
    spec = spec or model.spec or model.linear_spec
    x, y = dataset.inputs, dataset.outputs
    start = time.perf_counter()
    y_pred = model.predict(x)
    elapsed = time.perf_counter() - start
    errors = np.hstack([rce(spec, x, y_pred), total_rce(spec, x, y_pred)])
    logger.debug("Predicted %d samples in %.3g s", len(x), elapsed)
    return EvalReport(
        model_tag=model_tag or model.variant,
        dataset_tag=dataset_tag or dataset.split,
        columns=dataset.output_columns,
        r2=r_squared(y, y_pred, columns=dataset.output_columns),
        mape=mape(y, y_pred),
        constraint_labels=spec.labels + tuple(label for label, _ in spec.totals),
        rce_mean=errors.mean(axis=0),
        rce_max=errors.max(axis=0),
        predict_seconds=elapsed,
        metadata={"rce_reference": RCE_REFERENCE, "constraints": spec.name},
    )


def comparison_rows(reports):
    """
    Rows of a side-by-side comparison, one column per report: mean R2, MAPE,
    prediction time and the max RCE of every constraint.
    """
    labels = reports[0].constraint_labels
    if any(r.constraint_labels != labels for r in reports):
        raise ShapeError("Reports were computed for different constraints")
    rows = [
        ("mean R2", [r.mean_r2 for r in reports]),
        ("MAPE [%]", [r.mape for r in reports]),
        ("predict time [s]", [r.predict_seconds for r in reports]),
    ]
    for k, label in enumerate(labels):
        rows.append(("max RCE {} [%]".format(label), [float(r.rce_max[k]) for r in reports]))
    return rows


def format_comparison(reports):
    """Aligned text table with one column per model."""
    rows = comparison_rows(reports)
    width = max(len(name) for name, _ in rows)
    tags = [r.model_tag for r in reports]
    col = max(12, max(len(t) for t in tags))
    lines = ["{:<{}}".format("", width) + "".join("  {:>{}}".format(t, col) for t in tags)]
    for name, values in rows:
        lines.append(
            "{:<{}}".format(name, width)
            + "".join("  {:>{}.4g}".format(v, col) for v in values)
        )
    return "\n".join(lines)


def write_comparison_csv(reports, path):
    """Write the comparison as CSV, one column per model."""
    with open(path, "w", newline="") as buf:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric"] + [r.model_tag for r in reports])
        for name, values in comparison_rows(reports):
            writer.writerow([name] + [FLOAT_FORMAT % v for v in values])
    logger.info("Wrote %s", path)
    return path
