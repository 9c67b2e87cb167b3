"""
Package utility module.
"""

import os

import numpy as np

__all__ = [
    "FLOAT_FORMAT",
    "make_rng",
    "format_float",
    "parse_list",
    "stringify_parameters",
    "ensure_directory",
]

# 17 significant digits round-trip any float64 exactly.
FLOAT_FORMAT = "%.17g"


def make_rng(seed, *streams):
    """
    Create a numpy generator for an independent stream of a seed.

    Streams let one experiment seed drive initialization, shuffling and
    subsampling without the draws of one consumer shifting the others.

    :param seed: Experiment seed.
    :type seed: int
    :param streams: Extra non-negative integers naming the stream.
    :return: Random generator.
    :rtype: :class:`numpy.random.Generator`
    """
    return np.random.default_rng([int(seed)] + [int(s) for s in streams])


def format_float(value):
    """Shortest text that reads back as the same float64."""
    return repr(float(value))


def parse_list(text, cast=float):
    """
    Parse comma separated list, e.g. ``"0.2, 0.35,1.0"``.

    Lists and tuples are passed through after casting each item.
    """
    if isinstance(text, (list, tuple)):
        return [cast(item) for item in text]
    items = [item.strip() for item in str(text).split(",")]
    return [cast(item) for item in items if item]


def stringify_parameters(items):
    """
    Convert list items to strings accepted back by :func:`parse_list`.
    """
    return ",".join(
        format_float(item) if isinstance(item, float) else str(item) for item in items
    )


def ensure_directory(path):
    """Create directory (and parents) if it does not exist yet."""
    if path and not os.path.isdir(path):
        os.makedirs(path)
    return path
