"""
Surrogate models: MLP backbone, z-score normalization and projection head.

Three variants share the backbone:

* ``mlp``, the plain network;
* ``kkt``, the network followed by the global projection onto linear
  constraints;
* ``picard``, the network followed by the projection onto separable
  constraints with frozen outputs.

The network works on normalized values while constraints hold in physical
units, so the projected variants denormalize the prediction, project it and
normalize the result again.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import net
from .constraints import LinearSpec, SeparableSpec, get_constraints
from .dataset import NormalizationStats
from .exceptions import ConfigError, DatasetFormatError, NumericalError, ShapeError
from .projection import (
    GRADIENT_MODES,
    apply_global,
    build_global,
    global_backward,
    picard_backward,
    picard_project,
)
from .version import get_version, is_compatible

__all__ = [
    "VARIANTS",
    "CHECKPOINT_FORMAT",
    "CHECKPOINT_VERSION",
    "ForwardPass",
    "SurrogateModel",
]

logger = logging.getLogger(__name__)

VARIANTS = ("mlp", "kkt", "picard")

CHECKPOINT_FORMAT = "hardproj-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ForwardPass:
    """
    Values of one forward pass.

    :ivar outputs: Normalized predictions, the values the loss sees.
    :ivar physical: Predictions in physical units; for projected variants the
        projection output itself, never a normalize/denormalize round trip.
    """

    outputs: np.ndarray
    physical: np.ndarray
    tape: net.Tape
    tensors: object = None


def _resolve(spec, expected, what):
    if spec is None:
        return None, None
    if isinstance(spec, str):
        name, spec = spec, get_constraints(spec)
    else:
        name = spec.name
    if not isinstance(spec, expected):
        raise ConfigError(
            "{} constraints must be a {}, got {}".format(
                what, expected.__name__, type(spec).__name__
            )
        )
    return name, spec


class SurrogateModel(object):
    """
    MLP surrogate with an optional projection head.

    :param variant: ``"mlp"``, ``"kkt"`` or ``"picard"``.
    :param params: Backbone parameters.
    :type params: :class:`hardproj.net.MlpParams`
    :param input_stats: Input normalization statistics.
    :param output_stats: Output normalization statistics.
    :param constraints: Separable constraints (registered name or spec) used
        by the ``picard`` head and by evaluation.
    :param linear_constraints: Linear constraints (name or spec) used by the
        ``kkt`` head.
    :param gradient_mode: ``"frozen"`` or ``"exact"``, see
        :func:`hardproj.projection.picard_backward`.
    :param seed: Seed the parameters were initialized with.
    """

    def __init__(
        self,
        variant,
        params,
        input_stats,
        output_stats,
        constraints="reactor",
        linear_constraints="reactor-atomic",
        gradient_mode="frozen",
        seed=0,
    ):
        if variant not in VARIANTS:
            raise ConfigError(
                "Unknown variant {}; choose one of {}".format(variant, ", ".join(VARIANTS))
            )
        if gradient_mode not in GRADIENT_MODES:
            raise ConfigError("Unknown gradient mode {}".format(gradient_mode))
        if len(input_stats.columns) != params.n_inputs:
            raise ShapeError("Input statistics do not match the network inputs")
        if len(output_stats.columns) != params.n_outputs:
            raise ShapeError("Output statistics do not match the network outputs")
        self.variant = variant
        self.params = params
        self.input_stats = input_stats
        self.output_stats = output_stats
        self.gradient_mode = gradient_mode
        self.seed = int(seed)
        self.constraints, self.spec = _resolve(constraints, SeparableSpec, "Separable")
        self.linear_constraints, self.linear_spec = _resolve(
            linear_constraints, LinearSpec, "Linear"
        )
        self.projection = None
        if variant == "picard":
            if self.spec is None:
                raise ConfigError("Variant picard needs separable constraints")
            self._check_spec(self.spec)
            if gradient_mode == "exact" and not self.spec.differentiable:
                raise ConfigError(
                    "Exact gradients need an analytic Jacobian of {}".format(
                        self.constraints
                    )
                )
        elif variant == "kkt":
            if self.linear_spec is None:
                raise ConfigError("Variant kkt needs linear constraints")
            self._check_spec(self.linear_spec)
            self.projection = build_global(self.linear_spec)

    def _check_spec(self, spec):
        if spec.n_inputs != self.params.n_inputs or spec.n_outputs != self.params.n_outputs:
            raise ShapeError(
                "Constraints {} expect {} inputs and {} outputs, network has {} "
                "and {}".format(
                    spec.name,
                    spec.n_inputs,
                    spec.n_outputs,
                    self.params.n_inputs,
                    self.params.n_outputs,
                )
            )

    @classmethod
    def initialize(cls, variant, layer_dims, input_stats, output_stats, seed=0, **kwargs):
        """Create a model with Glorot initialized parameters."""
        params = net.glorot_init(layer_dims, seed)
        return cls(variant, params, input_stats, output_stats, seed=seed, **kwargs)

    @property
    def head_spec(self):
        """Constraints the projection head enforces, None for ``mlp``."""
        if self.variant == "picard":
            return self.spec
        if self.variant == "kkt":
            return self.linear_spec
        return None

    def forward(self, x):
        """
        Evaluate the model on physical inputs.

        :param x: Inputs (batch, n_inputs) in physical units.
        :rtype: :class:`ForwardPass`
        """
        x = np.asarray(x, dtype=np.float64)
        y_hat_n, tape = net.forward(self.params, self.input_stats.normalize(x))
        if self.variant == "mlp":
            return ForwardPass(y_hat_n, self.output_stats.denormalize(y_hat_n), tape)
        y_hat = self.output_stats.denormalize(y_hat_n)
        tensors = None
        if self.variant == "kkt":
            y_tilde = apply_global(self.projection, x, y_hat)
        else:
            y_tilde, tensors = picard_project(self.spec, x, y_hat)
        return ForwardPass(self.output_stats.normalize(y_tilde), y_tilde, tape, tensors)

    def backward(self, result, dL_dy):
        """
        Back-propagate the gradient w.r.t. the normalized outputs.

        :param result: Forward pass to differentiate; consumed.
        :param dL_dy: Gradient w.r.t. ``result.outputs``.
        :return: Parameter gradients.
        :rtype: :class:`hardproj.net.MlpParams`
        """
        if self.variant == "mlp":
            return net.backward(result.tape, dL_dy)
        std = self.output_stats.std
        g = np.asarray(dL_dy, dtype=np.float64) / std
        if self.variant == "kkt":
            g_hat = global_backward(self.projection, g)
        else:
            g_hat = picard_backward(result.tensors, self.spec, g, mode=self.gradient_mode)
        return net.backward(result.tape, g_hat * std)

    def predict(self, x):
        """Predictions in physical units."""
        return self.forward(x).physical

    def loss_and_gradients(self, x, y):
        """
        MSE on normalized outputs and its parameter gradients.

        :param x: Inputs in physical units.
        :param y: Targets in physical units.
        :return: Tuple ``(loss, grads, forward_pass)``.
        """
        result = self.forward(x)
        loss, dL_dy = net.mse_loss(result.outputs, self.output_stats.normalize(y))
        return loss, self.backward(result, dL_dy), result

    def to_dict(self):
        """Checkpoint content, see :meth:`save_checkpoint`."""
        if not np.all(np.isfinite(self.params.flatten())):
            raise NumericalError("Model parameters are not finite")
        return {
            "format": CHECKPOINT_FORMAT,
            "format_version": CHECKPOINT_VERSION,
            "package_version": get_version(),
            "variant": self.variant,
            "activation": self.params.activation,
            "layer_dims": self.params.layer_dims,
            "weights": [w.ravel().tolist() for w, _ in self.params.layers],
            "biases": [b.tolist() for _, b in self.params.layers],
            "input_stats": self.input_stats.to_dict(),
            "output_stats": self.output_stats.to_dict(),
            "constraints": self.constraints,
            "linear_constraints": self.linear_constraints,
            "gradient_mode": self.gradient_mode,
            "seed": self.seed,
        }

    def save_checkpoint(self, path):
        """
        Write the model as JSON text with sorted keys.

        Floats are written in their shortest round-trip form, so loading gives
        bit-identical parameters and the same model always gives the same
        bytes.
        """
        text = json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False)
        with open(path, "w") as buf:
            buf.write(text + "\n")
        logger.info("Wrote checkpoint %s", path)
        return path

    @classmethod
    def from_dict(cls, item):
        if item.get("format") != CHECKPOINT_FORMAT:
            raise DatasetFormatError("Not a hardproj checkpoint")
        if item.get("format_version") != CHECKPOINT_VERSION:
            raise DatasetFormatError(
                "Unsupported checkpoint format version {}".format(
                    item.get("format_version")
                )
            )
        try:
            if not is_compatible(item["package_version"]):
                raise DatasetFormatError(
                    "Checkpoint written by newer hardproj {}".format(
                        item["package_version"]
                    )
                )
            dims = [int(d) for d in item["layer_dims"]]
            layers = []
            for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
                weight = np.array(item["weights"][k], dtype=np.float64)
                layers.append(
                    (
                        weight.reshape(fan_out, fan_in),
                        np.array(item["biases"][k], dtype=np.float64),
                    )
                )
            params = net.MlpParams(layers, item["activation"])
            return cls(
                item["variant"],
                params,
                NormalizationStats.from_dict(item["input_stats"]),
                NormalizationStats.from_dict(item["output_stats"]),
                constraints=item["constraints"],
                linear_constraints=item["linear_constraints"],
                gradient_mode=item["gradient_mode"],
                seed=item["seed"],
            )
        except (KeyError, IndexError, TypeError, ValueError, AttributeError) as exc:
            raise DatasetFormatError("Malformed checkpoint: {}".format(exc)) from None

    @classmethod
    def load_checkpoint(cls, path):
        """
        Read a checkpoint written by :meth:`save_checkpoint`.

        :raises DatasetFormatError: if the file is not a compatible
            checkpoint.
        """
        with open(path) as buf:
            try:
                item = json.load(buf)
            except ValueError as exc:
                raise DatasetFormatError("{}: {}".format(path, exc)) from None
        return cls.from_dict(item)
