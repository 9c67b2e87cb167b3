"""
Declarative equality-constraint systems.

Two classes of constraints are supported:

* :class:`LinearSpec`, global linear constraints ``A x + B y = b``;
* :class:`SeparableSpec`, multiplicatively separable constraints

  .. math::

      c(x, y) = B y + F(y^{(F)}) \\, y^{(U)} - v(x) = 0

  where the output vector is partitioned into frozen components
  :math:`y^{(F)}` and unfrozen components :math:`y^{(U)}`. Holding the frozen
  components fixed turns the system into a linear one in the unfrozen
  components (see :func:`linearize`).

Callbacks are batch-native: ``v_fn`` maps inputs (batch, n_inputs) to
(batch, n_constraints), ``F_fn`` maps frozen outputs (batch, n_frozen) to
(batch, n_constraints, n_unfrozen). The optional ``F_jacobian`` returns
(batch, n_constraints, n_unfrozen, n_frozen); providing it declares ``F_fn``
differentiable. The optional ``reference_fn`` maps inputs to the inlet-side
magnitude of every constraint, used to report relative errors. ``totals``
names weighted sums of the constraint rows that are reported as balances of
their own, such as a total mass balance assembled from atomic balances.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .exceptions import (
    ConfigError,
    ConstraintEvaluationError,
    ProjectionInfeasibleError,
    RankDeficiencyError,
    ShapeError,
)
from .linalg import as_mat, batch_cholesky, check_full_row_rank, equilibrate_rows

__all__ = [
    "LinearSpec",
    "SeparableSpec",
    "ConstraintValue",
    "residual_linear",
    "residual_separable",
    "linearize",
    "linearize_batch",
    "as_separable",
    "evaluate_v",
    "evaluate_F",
    "evaluate_reference",
    "register_constraints",
    "get_constraints",
    "registered_constraints",
]

logger = logging.getLogger(__name__)

_REGISTRY = {}


def _default_labels(n):
    return tuple("c{}".format(k + 1) for k in range(n))


def _check_totals(totals, n_constraints):
    checked = []
    for label, weights in totals:
        weights = _frozen_array(np.ravel(weights), "weights of {}".format(label))
        if weights.shape != (n_constraints,):
            raise ShapeError(
                "Total {} needs {} weights, got {}".format(label, n_constraints, weights.size)
            )
        checked.append((str(label), weights))
    return tuple(checked)


def _frozen_array(values, name):
    arr = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ShapeError("{} contains NaN or Inf".format(name))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearSpec:
    """
    Global linear constraints ``A x + B y = b``.

    :param A: Input matrix (n_constraints, n_inputs).
    :param B: Output matrix (n_constraints, n_outputs) with full row rank.
    :param b: Right-hand side (n_constraints,).
    :param labels: Constraint names.
    :param name: Identifier stored in checkpoints.
    :param reference_fn: Optional inlet-side magnitude callback.
    :param totals: Pairs ``(label, weights)`` of weighted constraint sums.
    """

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    labels: Tuple[str, ...] = ()
    name: str = "linear"
    reference_fn: Optional[Callable] = None
    totals: Tuple = ()

    def __post_init__(self):
        A = _frozen_array(as_mat(self.A, "A"), "A")
        B = _frozen_array(as_mat(self.B, "B"), "B")
        b = _frozen_array(np.ravel(self.b), "b")
        if A.shape[0] != B.shape[0] or b.shape != (B.shape[0],):
            raise ShapeError(
                "A {}, B {} and b {} disagree on the number of "
                "constraints".format(A.shape, B.shape, b.shape)
            )
        if B.shape[0] >= B.shape[1]:
            raise ConfigError(
                "Need fewer constraints than outputs, got {} >= {}".format(
                    B.shape[0], B.shape[1]
                )
            )
        check_full_row_rank(B, "B")
        labels = tuple(self.labels) or _default_labels(B.shape[0])
        if len(labels) != B.shape[0]:
            raise ConfigError("Expected {} labels".format(B.shape[0]))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "totals", _check_totals(self.totals, B.shape[0]))

    @property
    def n_constraints(self):
        return self.B.shape[0]

    @property
    def n_inputs(self):
        return self.A.shape[1]

    @property
    def n_outputs(self):
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class SeparableSpec:
    """
    Multiplicatively separable constraints
    ``B y + F(y[freeze_idx]) @ y[unfrozen_idx] - v(x) = 0``.

    :param B: Linear part (n_constraints, n_outputs).
    :param v_fn: Input-dependent right-hand side callback.
    :param F_fn: Frozen-output-dependent matrix callback.
    :param freeze_idx: Indices of frozen outputs.
    :param unfrozen_idx: Indices of projected outputs; defaults to the
        complement of ``freeze_idx``.
    :param n_inputs: Number of inputs ``v_fn`` expects.
    :param F_jacobian: Optional analytic Jacobian of ``F_fn``.
    :param reference_fn: Optional inlet-side magnitude callback.
    :param totals: Pairs ``(label, weights)`` of weighted constraint sums.
    """

    B: np.ndarray
    v_fn: Callable
    F_fn: Callable
    freeze_idx: Tuple[int, ...]
    n_inputs: int
    unfrozen_idx: Optional[Tuple[int, ...]] = None
    labels: Tuple[str, ...] = ()
    name: str = "separable"
    F_jacobian: Optional[Callable] = None
    reference_fn: Optional[Callable] = None
    totals: Tuple = ()

    def __post_init__(self):
        B = _frozen_array(as_mat(self.B, "B"), "B")
        n_outputs = B.shape[1]
        frozen = tuple(int(i) for i in self.freeze_idx)
        if self.unfrozen_idx is None:
            unfrozen = tuple(i for i in range(n_outputs) if i not in frozen)
        else:
            unfrozen = tuple(int(i) for i in self.unfrozen_idx)
        if sorted(frozen + unfrozen) != list(range(n_outputs)):
            raise ConfigError(
                "Frozen {} and unfrozen {} indices must partition 0..{}".format(
                    frozen, unfrozen, n_outputs - 1
                )
            )
        if B.shape[0] > len(unfrozen):
            raise ConfigError(
                "{} constraints cannot be enforced through {} unfrozen "
                "outputs".format(B.shape[0], len(unfrozen))
            )
        if B.shape[0] == len(unfrozen):
            logger.debug(
                "Spec %s fully determines its unfrozen outputs", self.name
            )
        labels = tuple(self.labels) or _default_labels(B.shape[0])
        if len(labels) != B.shape[0]:
            raise ConfigError("Expected {} labels".format(B.shape[0]))
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "freeze_idx", frozen)
        object.__setattr__(self, "unfrozen_idx", unfrozen)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "totals", _check_totals(self.totals, B.shape[0]))
        object.__setattr__(self, "n_inputs", int(self.n_inputs))

    @property
    def n_constraints(self):
        return self.B.shape[0]

    @property
    def n_outputs(self):
        return self.B.shape[1]

    @property
    def n_frozen(self):
        return len(self.freeze_idx)

    @property
    def n_unfrozen(self):
        return len(self.unfrozen_idx)

    @property
    def frozen_index(self):
        """Frozen output indices as an integer array."""
        return np.array(self.freeze_idx, dtype=np.intp)

    @property
    def unfrozen_index(self):
        """Unfrozen output indices as an integer array."""
        return np.array(self.unfrozen_idx, dtype=np.intp)

    @property
    def differentiable(self):
        """Whether ``F_fn`` declares an analytic Jacobian."""
        return self.F_jacobian is not None


@dataclass
class ConstraintValue:
    """
    Constraint residuals in physical units.

    ``residual`` has shape (n_constraints,) for one instance or
    (batch, n_constraints) for a batch.
    """

    residual: np.ndarray
    labels: Tuple[str, ...]

    def __post_init__(self):
        bad = ~np.isfinite(np.atleast_2d(self.residual)).all(axis=0)
        if bad.any():
            raise ConstraintEvaluationError(
                [self.labels[k] for k in np.flatnonzero(bad)], "residual"
            )


def _promote(values, width, name):
    arr = np.asarray(values, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ShapeError(
            "{} must have {} columns, got shape {}".format(name, width, arr.shape)
        )
    return arr, single


def _check_finite(values, labels, what):
    bad = ~np.isfinite(values.reshape(values.shape[0], values.shape[1], -1)).all(
        axis=(0, 2)
    )
    if bad.any():
        raise ConstraintEvaluationError(
            [labels[k] for k in np.flatnonzero(bad)], what
        )


def evaluate_v(spec, x):
    """Evaluate ``v_fn`` on a batch and check its shape and finiteness."""
    v = np.asarray(spec.v_fn(x), dtype=np.float64)
    if v.shape != (x.shape[0], spec.n_constraints):
        raise ShapeError("v_fn returned shape {}".format(v.shape))
    _check_finite(v, spec.labels, "v_fn")
    return v


def evaluate_F(spec, y_frozen):
    """Evaluate ``F_fn`` on frozen outputs and check shape and finiteness."""
    F = np.asarray(spec.F_fn(y_frozen), dtype=np.float64)
    expected = (y_frozen.shape[0], spec.n_constraints, spec.n_unfrozen)
    if F.shape != expected:
        raise ShapeError("F_fn returned shape {}, expected {}".format(F.shape, expected))
    _check_finite(F, spec.labels, "F_fn")
    return F


def evaluate_reference(spec, x):
    """
    Evaluate the inlet-side reference magnitude of every constraint.

    :return: Array (batch, n_constraints), or ``None`` if the spec has no
        reference callback.
    """
    if spec.reference_fn is None:
        return None
    x, _ = _promote(x, spec.n_inputs, "x")
    ref = np.asarray(spec.reference_fn(x), dtype=np.float64)
    if ref.shape != (x.shape[0], spec.n_constraints):
        raise ShapeError("reference_fn returned shape {}".format(ref.shape))
    return ref


def residual_linear(spec, x, y):
    """
    Evaluate ``A x + B y - b``.

    :param spec: Linear constraints.
    :type spec: :class:`LinearSpec`
    :param x: Input vector or batch.
    :param y: Output vector or batch.
    :rtype: :class:`ConstraintValue`
    """
    x2, single = _promote(x, spec.n_inputs, "x")
    y2, _ = _promote(y, spec.n_outputs, "y")
    if x2.shape[0] != y2.shape[0]:
        raise ShapeError("x and y batch sizes differ")
    residual = x2 @ spec.A.T + y2 @ spec.B.T - spec.b
    return ConstraintValue(residual[0] if single else residual, spec.labels)


def residual_separable(spec, x, y):
    """
    Evaluate ``B y + F(y_frozen) @ y_unfrozen - v(x)``.

    :param spec: Separable constraints.
    :type spec: :class:`SeparableSpec`
    :param x: Input vector or batch.
    :param y: Output vector or batch.
    :rtype: :class:`ConstraintValue`
    :raises ConstraintEvaluationError: if a callback is not finite.
    """
    x2, single = _promote(x, spec.n_inputs, "x")
    y2, _ = _promote(y, spec.n_outputs, "y")
    if x2.shape[0] != y2.shape[0]:
        raise ShapeError("x and y batch sizes differ")
    F = evaluate_F(spec, y2[:, spec.frozen_index])
    nonlinear = np.einsum("bcu,bu->bc", F, y2[:, spec.unfrozen_index])
    residual = y2 @ spec.B.T + nonlinear - evaluate_v(spec, x2)
    return ConstraintValue(residual[0] if single else residual, spec.labels)


def linearize_batch(spec, x, y_hat):
    """
    Batch form of :func:`linearize` without the rank check.

    :return: Tuple ``(b_reduced, rhs, F)`` with shapes
        (batch, n_constraints, n_unfrozen), (batch, n_constraints) and the
        evaluated ``F_fn``.
    """
    y_frozen = y_hat[:, spec.frozen_index]
    F = evaluate_F(spec, y_frozen)
    b_reduced = spec.B[:, spec.unfrozen_index] + F
    rhs = evaluate_v(spec, x) - np.einsum(
        "bf,cf->bc", y_frozen, spec.B[:, spec.frozen_index]
    )
    return b_reduced, rhs, F


def linearize(spec, x, y_hat, check_rank=True):
    """
    Linearize separable constraints around the frozen part of a prediction.

    With ``y_hat[freeze_idx]`` held constant the constraints read
    ``b_reduced @ y[unfrozen_idx] = rhs`` with

    * ``b_reduced = B[:, unfrozen] + F(y_hat[freeze_idx])``
    * ``rhs = v(x) - B[:, frozen] @ y_hat[freeze_idx]``

    :param spec: Separable constraints.
    :param x: Input vector or batch.
    :param y_hat: Full-length prediction vector or batch.
    :param check_rank: Verify that every ``b_reduced`` has full row rank.
    :return: Tuple ``(b_reduced, rhs)``.
    :raises ProjectionInfeasibleError: carrying the instance index of a rank
        deficient system.
    """
    x2, single = _promote(x, spec.n_inputs, "x")
    y2, _ = _promote(y_hat, spec.n_outputs, "y_hat")
    if x2.shape[0] != y2.shape[0]:
        raise ShapeError("x and y_hat batch sizes differ")
    b_reduced, rhs, _ = linearize_batch(spec, x2, y2)
    if check_rank:
        try:
            scaled, _ = equilibrate_rows(b_reduced)
            batch_cholesky(scaled @ np.swapaxes(scaled, 1, 2))
        except RankDeficiencyError as exc:
            raise ProjectionInfeasibleError(exc.batch_index, str(exc)) from None
    if single:
        return b_reduced[0], rhs[0]
    return b_reduced, rhs


def as_separable(spec):
    """
    Express global linear constraints in separable form.

    The result has ``F = 0``, no frozen outputs and ``v(x) = b - A x``.

    :type spec: :class:`LinearSpec`
    :rtype: :class:`SeparableSpec`
    """
    n_c, n_o = spec.B.shape
    A, b = spec.A, spec.b

    def v_fn(x):
        return b - x @ A.T

    def F_fn(y_frozen):
        return np.zeros((y_frozen.shape[0], n_c, n_o))

    def F_jacobian(y_frozen):
        return np.zeros((y_frozen.shape[0], n_c, n_o, 0))

    return SeparableSpec(
        B=spec.B,
        v_fn=v_fn,
        F_fn=F_fn,
        freeze_idx=(),
        n_inputs=spec.n_inputs,
        labels=spec.labels,
        name=spec.name,
        F_jacobian=F_jacobian,
        reference_fn=spec.reference_fn,
        totals=spec.totals,
    )


def register_constraints(name, factory):
    """
    Register a constraint factory under a name stored in checkpoints.

    :param name: Identifier, e.g. ``"reactor"``.
    :param factory: Callable without arguments returning a
        :class:`LinearSpec` or :class:`SeparableSpec`.
    """
    _REGISTRY[name] = factory


def get_constraints(name):
    """Build the constraint spec registered under ``name``."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            "Unknown constraints {}; registered: {}".format(
                name, ", ".join(sorted(_REGISTRY))
            )
        ) from None
    return factory()


def registered_constraints():
    """Names of all registered constraint factories."""
    return sorted(_REGISTRY)
