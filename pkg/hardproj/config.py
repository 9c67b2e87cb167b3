"""
Experiment configuration.
"""

import configparser
import logging

from .exceptions import ConfigError
from .model import VARIANTS
from .projection import GRADIENT_MODES
from .utils import format_float, parse_list, stringify_parameters

__all__ = ["TrainConfig"]

logger = logging.getLogger(__name__)

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def _to_bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ValueError("not a boolean: {!r}".format(value))


class TrainConfig(object):
    """
    Hyperparameters, seeds, paths and model variant of one experiment.

    Values missing from the keyword arguments fall back to
    :attr:`default_parameters`; strings (e.g. read from a config file) are
    converted to the type of the default.

    Example:

    .. code-block:: python

        from hardproj import TrainConfig

        config = TrainConfig(variant="picard", epochs=2000)
        print(config.as_text())

    """

    section = "hardproj"
    default_parameters = {
        "variant": "picard",
        "hidden": "64",
        "epochs": 5000,
        "lr": 1e-3,
        "batch_size": 256,
        "seed": 0,
        "data_dir": "data",
        "output_dir": "runs",
        "n_train": 4000,
        "n_test": 500,
        "train_fraction": 1.0,
        "normalize": True,
        "gradient_mode": "frozen",
        "constraints": "reactor",
        "linear_constraints": "reactor-atomic",
        "log_every": 100,
        "monitor_feasibility": True,
    }
    # Dataset sizes and optimizer settings of the full-size experiments.
    full_scale_parameters = {
        "n_train": 20000,
        "n_test": 500,
        "epochs": 50000,
        "lr": 1e-5,
        "batch_size": 2000,
        "hidden": "64",
    }

    def __init__(self, **kwargs):
        unknown = sorted(set(kwargs) - set(self.default_parameters))
        if unknown:
            raise ConfigError("Unknown configuration keys: {}".format(", ".join(unknown)))
        for key, value in self.default_parameters.items():
            if key in kwargs and kwargs[key] is not None:
                new_value = self._coerce(key, kwargs[key])
            else:
                new_value = value
            setattr(self, key, new_value)
        self.validate()

    def _coerce(self, key, value):
        default = self.default_parameters[key]
        try:
            if isinstance(default, bool):
                return _to_bool(value)
            if isinstance(default, int):
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError("not an integer: {!r}".format(value))
                return int(value)
            if isinstance(default, float):
                return float(value)
            if key == "hidden" and isinstance(value, (list, tuple)):
                return stringify_parameters(int(v) for v in value)
            return str(value).strip()
        except ValueError as exc:
            raise ConfigError("Invalid value for {}: {}".format(key, exc)) from None

    @classmethod
    def read_file(cls, path):
        """
        Read the raw values of a flat ``key = value`` file; a ``[hardproj]``
        section header is optional.
        """
        with open(path) as buf:
            text = buf.read()
        parser = configparser.ConfigParser(
            inline_comment_prefixes=("#", ";"), interpolation=None
        )
        try:
            if not text.lstrip().startswith("["):
                text = "[{}]\n{}".format(cls.section, text)
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError("Malformed config file {}: {}".format(path, exc)) from None
        if parser.sections() != [cls.section]:
            raise ConfigError(
                "Config file {} must hold a single [{}] section".format(path, cls.section)
            )
        return dict(parser.items(cls.section))

    @classmethod
    def from_file(cls, path, **overrides):
        """Read a config file; keyword arguments that are not None win."""
        values = cls.read_file(path)
        values.update((k, v) for k, v in overrides.items() if v is not None)
        return cls(**values)

    @classmethod
    def full_scale(cls, **kwargs):
        """Configuration with the full-size profile applied under ``kwargs``."""
        values = dict(cls.full_scale_parameters)
        values.update((k, v) for k, v in kwargs.items() if v is not None)
        return cls(**values)

    def update(self, **kwargs):
        """Copy with some values replaced."""
        values = self.as_dict()
        values.update((k, v) for k, v in kwargs.items() if v is not None)
        return TrainConfig(**values)

    @property
    def hidden_sizes(self):
        """Hidden layer widths, e.g. ``[64]``."""
        return parse_list(self.hidden, cast=int)

    def layer_dims(self, n_inputs, n_outputs):
        return [int(n_inputs)] + self.hidden_sizes + [int(n_outputs)]

    def validate(self):
        """
        Check every value.

        :raises ConfigError: naming the first invalid key.
        """
        if self.variant not in VARIANTS:
            raise ConfigError(
                "variant must be one of {}, got {}".format(", ".join(VARIANTS), self.variant)
            )
        if self.gradient_mode not in GRADIENT_MODES:
            raise ConfigError(
                "gradient_mode must be one of {}, got {}".format(
                    ", ".join(GRADIENT_MODES), self.gradient_mode
                )
            )
        try:
            hidden = self.hidden_sizes
        except ValueError:
            raise ConfigError("hidden must be a comma list of integers") from None
        if any(h <= 0 for h in hidden):
            raise ConfigError("hidden layer widths must be positive")
        for key in ("epochs", "batch_size", "n_train", "n_test", "log_every"):
            if getattr(self, key) <= 0:
                raise ConfigError("{} must be positive".format(key))
        if not self.lr > 0.0:
            raise ConfigError("lr must be positive")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError("train_fraction must be in (0, 1]")

    def check_batch_size(self, n_samples):
        """
        :raises ConfigError: if the batch is larger than the training set.
        """
        if self.batch_size > n_samples:
            raise ConfigError(
                "batch_size {} exceeds the {} training samples".format(
                    self.batch_size, n_samples
                )
            )

    def as_dict(self):
        return {key: getattr(self, key) for key in self.default_parameters}

    def as_text(self):
        """Configuration in the syntax :meth:`from_file` reads."""
        lines = ["[{}]".format(self.section)]
        for key in sorted(self.default_parameters):
            value = getattr(self, key)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = format_float(value)
            lines.append("{} = {}".format(key, value))
        return "\n".join(lines) + "\n"
