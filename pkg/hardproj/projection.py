"""
Differentiable KKT projection layers.

A prediction ``y_hat`` is corrected to the nearest point (in the Euclidean
norm) of an affine feasible set. For linear constraints ``B y = r`` the KKT
conditions of

.. math::

    \\min_y \\tfrac{1}{2} \\| y - \\hat{y} \\|^2 \\quad \\text{s.t.} \\quad B y = r

give ``y = B* y_hat + B^T (B B^T)^{-1} r`` with the orthogonal projector
``B* = I - B^T (B B^T)^{-1} B``.

Three layers are provided:

* :func:`build_global` / :func:`apply_global`, one projection for global
  constraints ``A x + B y = b``, computed once;
* :func:`project_local`, a batch of instance-local projections with their own
  ``B_i`` and ``r_i``;
* :func:`picard_project`, the projection of separable constraints with the
  frozen outputs held at their predicted values, which makes the constraint
  exact after projection.

Constraint rows are scaled to unit norm before factoring ``B B^T``; the
projection does not depend on the scaling.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .constraints import linearize_batch
from .exceptions import (
    ConfigError,
    ProjectionInfeasibleError,
    RankDeficiencyError,
    ShapeError,
    TapeError,
)
from .linalg import batch_spd_solve, equilibrate_rows, spd_solve

__all__ = [
    "GRADIENT_MODES",
    "GlobalProjection",
    "ProjectionTensors",
    "build_global",
    "apply_global",
    "global_backward",
    "project_local",
    "picard_project",
    "picard_backward",
]

logger = logging.getLogger(__name__)

GRADIENT_MODES = ("frozen", "exact")


@dataclass(frozen=True, eq=False)
class GlobalProjection:
    """
    Projection matrices of global linear constraints.

    ``y_tilde = A_star @ x + B_star @ y_hat + b_star``.
    """

    A_star: np.ndarray
    B_star: np.ndarray
    b_star: np.ndarray
    spec: object = None


@dataclass(eq=False)
class ProjectionTensors:
    """
    Per-batch projection tensors and the forward values backward needs.

    :ivar B_star: Projectors (batch, n_unfrozen, n_unfrozen).
    :ivar V_star: Particular solutions (batch, n_unfrozen).
    """

    B_star: np.ndarray
    V_star: np.ndarray
    b_scaled: np.ndarray
    row_scale: np.ndarray
    gain: np.ndarray
    multipliers: np.ndarray
    y_hat_u: np.ndarray
    y_tilde_u: np.ndarray
    y_frozen: np.ndarray = None
    consumed: bool = False


def build_global(spec):
    """
    Compute the projection matrices of global linear constraints.

    * ``A_star = -B^T (B B^T)^{-1} A``
    * ``B_star = I - B^T (B B^T)^{-1} B``
    * ``b_star = B^T (B B^T)^{-1} b``

    :param spec: Linear constraints with full row rank ``B``.
    :type spec: :class:`hardproj.constraints.LinearSpec`
    :rtype: :class:`GlobalProjection`

    Example:

    .. code-block:: python

        from hardproj import LinearSpec, build_global, apply_global

        spec = LinearSpec(A=[[0.0]], B=[[1.0, 1.0]], b=[1.0])
        proj = build_global(spec)
        apply_global(proj, [0.0], [0.0, 0.0])  # [0.5, 0.5]

    """
    n_outputs = spec.n_outputs
    n_inputs = spec.n_inputs
    b_scaled, scale = equilibrate_rows(spec.B)
    a_scaled = spec.A * scale[:, None]
    r_scaled = spec.b * scale
    gram = b_scaled @ b_scaled.T
    solution = spd_solve(gram, np.column_stack([b_scaled, a_scaled, r_scaled]))
    gain = solution[:, :n_outputs]
    B_star = np.eye(n_outputs) - b_scaled.T @ gain
    B_star = 0.5 * (B_star + B_star.T)
    A_star = -b_scaled.T @ solution[:, n_outputs : n_outputs + n_inputs]
    b_star = b_scaled.T @ solution[:, -1]
    for arr in (A_star, B_star, b_star):
        arr.setflags(write=False)
    return GlobalProjection(A_star=A_star, B_star=B_star, b_star=b_star, spec=spec)


def apply_global(p, x, y_hat):
    """
    Project predictions onto ``A x + B y = b``.

    :param p: Projection from :func:`build_global`.
    :param x: Input vector or batch.
    :param y_hat: Prediction vector or batch.
    :return: Projected prediction with the shape of ``y_hat``.
    """
    x = np.asarray(x, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if x.shape[-1] != p.A_star.shape[1] or y_hat.shape[-1] != p.B_star.shape[0]:
        raise ShapeError(
            "Global projection expects {} inputs and {} outputs, got {} and "
            "{}".format(p.A_star.shape[1], p.B_star.shape[0], x.shape, y_hat.shape)
        )
    return x @ p.A_star.T + y_hat @ p.B_star.T + p.b_star


def global_backward(p, dL_dy_tilde):
    """Gradient w.r.t. the prediction, ``B_star^T`` applied to upstream."""
    return np.asarray(dL_dy_tilde, dtype=np.float64) @ p.B_star


def project_local(b_batch, rhs_batch, y_hat):
    """
    Project every instance onto its own affine set ``b_i @ y = rhs_i``.

    :param b_batch: Constraint matrices (batch, n_constraints, n_vars).
    :param rhs_batch: Right-hand sides (batch, n_constraints).
    :param y_hat: Predictions (batch, n_vars).
    :return: Tuple ``(y_tilde, tensors)``.
    :raises ProjectionInfeasibleError: carrying the batch index of an
        instance with linearly dependent rows.
    """
    b_batch = np.asarray(b_batch, dtype=np.float64)
    rhs_batch = np.asarray(rhs_batch, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    n_batch, n_constraints, n_vars = b_batch.shape
    if rhs_batch.shape != (n_batch, n_constraints) or y_hat.shape != (n_batch, n_vars):
        raise ShapeError(
            "Local projection got B {}, rhs {} and y_hat {}".format(
                b_batch.shape, rhs_batch.shape, y_hat.shape
            )
        )
    try:
        b_scaled, scale = equilibrate_rows(b_batch)
        rhs_scaled = rhs_batch * scale
        b_t = np.swapaxes(b_scaled, 1, 2)
        residual = (b_scaled @ y_hat[:, :, None])[:, :, 0] - rhs_scaled
        gram = b_scaled @ b_t
        columns = np.concatenate(
            [b_scaled, rhs_scaled[:, :, None], residual[:, :, None]], axis=2
        )
        solution = batch_spd_solve(gram, columns)
    except RankDeficiencyError as exc:
        raise ProjectionInfeasibleError(exc.batch_index, str(exc)) from None
    gain = solution[:, :, :n_vars]
    particular = solution[:, :, n_vars]
    multipliers = solution[:, :, n_vars + 1]
    # Stacked matmul runs the same kernel per instance whatever the batch size.
    B_star = np.eye(n_vars)[None] - b_t @ gain
    V_star = (b_t @ particular[:, :, None])[:, :, 0]
    y_tilde = y_hat - (b_t @ multipliers[:, :, None])[:, :, 0]
    tensors = ProjectionTensors(
        B_star=B_star,
        V_star=V_star,
        b_scaled=b_scaled,
        row_scale=scale,
        gain=gain,
        multipliers=multipliers,
        y_hat_u=y_hat,
        y_tilde_u=y_tilde,
    )
    return y_tilde, tensors


def picard_project(spec, x, y_hat):
    """
    Project predictions onto separable constraints with frozen outputs fixed.

    The frozen outputs are copied bit for bit; the unfrozen outputs are the
    nearest point of the linearized system

    ``(B[:, U] + F(y_hat[F])) @ y[U] = v(x) - B[:, F] @ y_hat[F]``

    which makes the original separable constraints hold exactly.

    :param spec: Separable constraints.
    :type spec: :class:`hardproj.constraints.SeparableSpec`
    :param x: Inputs (batch, n_inputs) in physical units.
    :param y_hat: Predictions (batch, n_outputs) in physical units.
    :return: Tuple ``(y_tilde, tensors)``.
    :raises ProjectionInfeasibleError: naming the batch index of an instance
        whose linearized system is rank deficient.
    """
    x = np.asarray(x, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    single = y_hat.ndim == 1
    x2 = np.atleast_2d(x)
    y2 = np.atleast_2d(y_hat)
    if x2.shape != (y2.shape[0], spec.n_inputs) or y2.shape[1] != spec.n_outputs:
        raise ShapeError(
            "Projection expects x (batch, {}) and y_hat (batch, {}), got {} and "
            "{}".format(spec.n_inputs, spec.n_outputs, x.shape, y_hat.shape)
        )
    b_reduced, rhs, _ = linearize_batch(spec, x2, y2)
    y_tilde_u, tensors = project_local(b_reduced, rhs, y2[:, spec.unfrozen_index])
    tensors.y_frozen = y2[:, spec.frozen_index]
    y_tilde = y2.copy()
    y_tilde[:, spec.unfrozen_index] = y_tilde_u
    return (y_tilde[0] if single else y_tilde), tensors


def picard_backward(tensors, spec, dL_dy_tilde, mode="frozen"):
    """
    Back-propagate through :func:`picard_project`.

    In ``frozen`` mode ``F(y_hat[F])`` is treated as a constant: unfrozen
    outputs receive ``B*^T g``, frozen outputs their own upstream gradient
    plus the term coming from the right-hand side of the linearized system.
    In ``exact`` mode the dependence of ``F`` on the frozen outputs is added
    through the spec's ``F_jacobian``.

    :param tensors: Tensors of the matching forward call; consumed.
    :param spec: Spec used in the forward call.
    :param dL_dy_tilde: Upstream gradient (batch, n_outputs).
    :param mode: ``"frozen"`` or ``"exact"``.
    :return: Gradient w.r.t. ``y_hat``.
    :raises TapeError: if the tensors were already consumed.
    """
    if mode not in GRADIENT_MODES:
        raise ConfigError("Unknown gradient mode {}".format(mode))
    if mode == "exact" and not spec.differentiable:
        raise ConfigError(
            "Exact gradients need an analytic Jacobian of F for {}".format(spec.name)
        )
    if tensors.consumed:
        raise TapeError("Projection tensors are stale; run a new forward pass")
    g = np.asarray(dL_dy_tilde, dtype=np.float64)
    single = g.ndim == 1
    g = np.atleast_2d(g)
    if g.shape != (tensors.y_hat_u.shape[0], spec.n_outputs):
        raise ShapeError(
            "Upstream gradient shape {} does not match the forward "
            "batch".format(g.shape)
        )
    tensors.consumed = True
    unfrozen = spec.unfrozen_index
    frozen = spec.frozen_index
    g_u = g[:, unfrozen]
    mu_scaled = np.einsum("bcu,bu->bc", tensors.gain, g_u)
    grad = g.copy()
    projected = g_u - np.einsum("bcu,bc->bu", tensors.b_scaled, mu_scaled)
    grad[:, unfrozen] = projected
    if frozen.size:
        mu = mu_scaled * tensors.row_scale
        grad[:, frozen] -= np.einsum("bc,cf->bf", mu, spec.B[:, frozen])
        if mode == "exact":
            lam = tensors.multipliers * tensors.row_scale
            d_b_reduced = -(
                lam[:, :, None] * projected[:, None, :]
                + mu[:, :, None] * tensors.y_tilde_u[:, None, :]
            )
            jacobian = np.asarray(spec.F_jacobian(tensors.y_frozen), dtype=np.float64)
            grad[:, frozen] += np.einsum("bcu,bcuf->bf", d_b_reduced, jacobian)
    return grad[0] if single else grad
