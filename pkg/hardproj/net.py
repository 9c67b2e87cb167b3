"""
Fully connected backbone with hand-written reverse-mode differentiation.

The network is a stack of affine layers with ReLU on every hidden layer and
identity on the output layer. Batches are 2-D arrays with one sample per row.
"""

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .exceptions import ConfigError, ShapeError, TapeError
from .utils import make_rng

__all__ = [
    "ACTIVATIONS",
    "MlpParams",
    "AdamState",
    "Tape",
    "glorot_init",
    "forward",
    "backward",
    "adam_step",
    "mse_loss",
]

ACTIVATIONS = ("relu",)


@dataclass
class MlpParams:
    """
    Weights and biases of the fully connected backbone.

    :param layers: Ordered list of ``(weight, bias)`` pairs, weight with
        shape (out, in) and bias with shape (out,).
    :param activation: Hidden layer activation tag.
    """

    layers: List[Tuple[np.ndarray, np.ndarray]]
    activation: str = "relu"

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("Network needs at least one layer")
        if self.activation not in ACTIVATIONS:
            raise ConfigError("Unsupported activation {}".format(self.activation))
        layers = []
        for k, (weight, bias) in enumerate(self.layers):
            weight = np.ascontiguousarray(weight, dtype=np.float64)
            bias = np.ascontiguousarray(bias, dtype=np.float64)
            if weight.ndim != 2 or bias.shape != (weight.shape[0],):
                raise ShapeError(
                    "Layer {} has weight {} and bias {}".format(
                        k, weight.shape, bias.shape
                    )
                )
            if layers and layers[-1][0].shape[0] != weight.shape[1]:
                raise ShapeError(
                    "Layer {} expects {} inputs but previous layer has {} "
                    "outputs".format(k, weight.shape[1], layers[-1][0].shape[0])
                )
            layers.append((weight, bias))
        self.layers = layers

    @property
    def layer_dims(self):
        """Dimension chain, e.g. ``[10, 64, 10]``."""
        return [self.layers[0][0].shape[1]] + [w.shape[0] for w, _ in self.layers]

    @property
    def n_inputs(self):
        return self.layers[0][0].shape[1]

    @property
    def n_outputs(self):
        return self.layers[-1][0].shape[0]

    @property
    def size(self):
        """Total number of trainable scalars."""
        return sum(w.size + b.size for w, b in self.layers)

    def copy(self):
        return MlpParams(
            [(w.copy(), b.copy()) for w, b in self.layers], self.activation
        )

    def zeros_like(self):
        return MlpParams(
            [(np.zeros_like(w), np.zeros_like(b)) for w, b in self.layers],
            self.activation,
        )

    def flatten(self):
        """Concatenate all weights (row-major) and biases, layer by layer."""
        parts = []
        for weight, bias in self.layers:
            parts.append(weight.ravel())
            parts.append(bias)
        return np.concatenate(parts)

    def with_flat(self, vector):
        """Build params of the same shapes from a flat vector."""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.size,):
            raise ShapeError(
                "Expected {} parameters, got {}".format(self.size, vector.shape)
            )
        layers = []
        offset = 0
        for weight, bias in self.layers:
            w = vector[offset : offset + weight.size].reshape(weight.shape)
            offset += weight.size
            b = vector[offset : offset + bias.size]
            offset += bias.size
            layers.append((w.copy(), b.copy()))
        return MlpParams(layers, self.activation)


@dataclass
class AdamState:
    """
    Adam optimizer state.

    First and second moment accumulators mirror the parameter shapes.
    """

    lr: float
    m: MlpParams
    v: MlpParams
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def initial(cls, params, lr, **kwargs):
        """Zero accumulators for ``params``."""
        return cls(lr=lr, m=params.zeros_like(), v=params.zeros_like(), **kwargs)


@dataclass
class Tape:
    """Activations recorded by :func:`forward` for one backward pass."""

    params: MlpParams
    inputs: list = field(default_factory=list)
    preactivations: list = field(default_factory=list)
    consumed: bool = False


def glorot_init(shape_list, seed, activation="relu"):
    """
    Initialize a network with Glorot uniform weights and zero biases.

    Weights of a layer with ``fan_in`` inputs and ``fan_out`` outputs are
    drawn uniformly from ``[-limit, limit]`` with
    ``limit = sqrt(6 / (fan_in + fan_out))``.

    :param shape_list: Dimension chain, e.g. ``[10, 64, 10]``.
    :type shape_list: list
    :param seed: Seed; the same seed gives bit-identical parameters.
    :type seed: int
    :return: Initialized parameters.
    :rtype: :class:`MlpParams`

    Example:

    .. code-block:: python

        from hardproj import glorot_init

        params = glorot_init([10, 64, 10], seed=42)
        print(params.layer_dims)

    """
    dims = [int(d) for d in shape_list] if shape_list is not None else []
    if len(dims) < 2:
        raise ConfigError(
            "Shape list needs input and output dimensions, got {}".format(dims)
        )
    if any(d <= 0 for d in dims):
        raise ConfigError("Layer dimensions must be positive, got {}".format(dims))
    rng = make_rng(seed, 0)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append((weight, np.zeros(fan_out)))
    return MlpParams(layers, activation)


def forward(params, x):
    """
    Evaluate the network on a batch.

    :param params: Network parameters.
    :type params: :class:`MlpParams`
    :param x: Inputs with shape (batch, n_inputs).
    :return: Tuple ``(y_hat, tape)``; ``tape`` feeds :func:`backward`.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_inputs:
        raise ShapeError(
            "Network expects (batch, {}) inputs, got {}".format(
                params.n_inputs, x.shape
            )
        )
    tape = Tape(params)
    a = x
    last = len(params.layers) - 1
    for k, (weight, bias) in enumerate(params.layers):
        tape.inputs.append(a)
        z = a @ weight.T + bias
        tape.preactivations.append(z)
        a = z if k == last else np.maximum(z, 0.0)
    return a, tape


def backward(tape, dL_dy):
    """
    Back-propagate an upstream gradient through a recorded forward pass.

    :param tape: Tape returned by :func:`forward`; consumed by this call.
    :param dL_dy: Gradient of the loss w.r.t. the network output.
    :return: Gradients with the shapes of the parameters.
    :rtype: :class:`MlpParams`
    :raises TapeError: if the tape was already used.
    """
    if tape.consumed:
        raise TapeError("Tape was already consumed by a backward pass")
    grad = np.ascontiguousarray(dL_dy, dtype=np.float64)
    expected = tape.preactivations[-1].shape
    if grad.shape != expected:
        raise ShapeError(
            "Upstream gradient shape {} does not match output {}".format(
                grad.shape, expected
            )
        )
    tape.consumed = True
    grads = [None] * len(tape.params.layers)
    last = len(tape.params.layers) - 1
    for k in range(last, -1, -1):
        weight, _ = tape.params.layers[k]
        if k != last:
            grad = grad * (tape.preactivations[k] > 0.0)
        grads[k] = (grad.T @ tape.inputs[k], grad.sum(axis=0))
        if k > 0:
            grad = grad @ weight
    return MlpParams(grads, tape.params.activation)


def adam_step(params, grads, state):
    """
    Apply one bias-corrected Adam update.

    Inputs are left untouched; new parameters and a new state are returned.

    :return: Tuple ``(params, state)``.
    """
    if params.layer_dims != grads.layer_dims or params.layer_dims != state.m.layer_dims:
        raise ShapeError(
            "Parameter {}, gradient {} and optimizer {} shapes differ".format(
                params.layer_dims, grads.layer_dims, state.m.layer_dims
            )
        )
    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    new_params, new_m, new_v = [], [], []
    for (p_layer, g_layer, m_layer, v_layer) in zip(
        params.layers, grads.layers, state.m.layers, state.v.layers
    ):
        updated, ms, vs = [], [], []
        for p, g, m, v in zip(p_layer, g_layer, m_layer, v_layer):
            m = state.beta1 * m + (1.0 - state.beta1) * g
            v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
            m_hat = m / correction1
            v_hat = v / correction2
            updated.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
            ms.append(m)
            vs.append(v)
        new_params.append(tuple(updated))
        new_m.append(tuple(ms))
        new_v.append(tuple(vs))
    activation = params.activation
    new_state = AdamState(
        lr=state.lr,
        m=MlpParams(new_m, activation),
        v=MlpParams(new_v, activation),
        step=step,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
    )
    return MlpParams(new_params, activation), new_state


def mse_loss(y_hat, y):
    """
    Mean squared error over batch and outputs.

    :return: Tuple ``(loss, dL_dy_hat)`` with gradient
        ``2 (y_hat - y) / (batch * n_outputs)``.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ShapeError(
            "Prediction shape {} does not match target {}".format(y_hat.shape, y.shape)
        )
    diff = y_hat - y
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
