"""
Column-labeled sample tables, normalization statistics and their files.

A dataset directory holds three files:

* ``train.csv`` and ``test.csv``, a ``# key=value ...`` comment line, a header
  line with the column names and one row per sample written with 17
  significant digits;
* ``stats.csv``, the per-column mean and standard deviation of the training
  split.
"""

import csv
import logging
import os
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .exceptions import ConfigError, DatasetFormatError, ShapeError
from .utils import FLOAT_FORMAT, ensure_directory, make_rng

__all__ = [
    "TRAIN_FILE",
    "TEST_FILE",
    "STATS_FILE",
    "NormalizationStats",
    "Dataset",
    "save_dataset",
    "load_dataset",
]

logger = logging.getLogger(__name__)

TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"
STATS_FILE = "stats.csv"

# Random stream of the seed reserved for train-fraction subsampling.
SUBSAMPLE_STREAM = 3


@dataclass
class NormalizationStats:
    """
    Per-column z-score statistics.

    :param columns: Column names.
    :param mean: Column means.
    :param std: Column standard deviations, strictly positive.
    """

    columns: Tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.mean = np.array(self.mean, dtype=np.float64)
        self.std = np.array(self.std, dtype=np.float64)
        n = len(self.columns)
        if self.mean.shape != (n,) or self.std.shape != (n,):
            raise ShapeError(
                "Statistics of {} columns got mean {} and std {}".format(
                    n, self.mean.shape, self.std.shape
                )
            )
        if not (np.all(np.isfinite(self.mean)) and np.all(self.std > 0.0)):
            raise ConfigError("Statistics must be finite with positive std")

    @classmethod
    def from_data(cls, columns, data):
        """
        Compute statistics of a data table. A constant column gets std 1 so
        that it normalizes to zero instead of dividing by zero.
        """
        data = np.asarray(data, dtype=np.float64)
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        constant = ~(std > 0.0)
        if constant.any():
            logger.warning(
                "Constant columns normalized with unit std: %s",
                ", ".join(c for c, flag in zip(columns, constant) if flag),
            )
            std = np.where(constant, 1.0, std)
        return cls(columns, mean, std)

    @classmethod
    def identity(cls, columns):
        """Statistics leaving values unchanged."""
        n = len(columns)
        return cls(columns, np.zeros(n), np.ones(n))

    def select(self, indices):
        """Statistics of a subset of the columns."""
        indices = list(indices)
        return NormalizationStats(
            [self.columns[i] for i in indices], self.mean[indices], self.std[indices]
        )

    def normalize(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, values):
        return self.mean + self.std * np.asarray(values, dtype=np.float64)

    def to_dict(self):
        return {
            "columns": list(self.columns),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, item):
        try:
            return cls(item["columns"], item["mean"], item["std"])
        except (KeyError, TypeError) as exc:
            raise DatasetFormatError(
                "Malformed normalization statistics: {}".format(exc)
            ) from None

    def write(self, path):
        """Write statistics as ``column,mean,std`` rows."""
        with open(path, "w", newline="") as buf:
            buf.write("column,mean,std\n")
            for name, mean, std in zip(self.columns, self.mean, self.std):
                buf.write(
                    "{},{},{}\n".format(name, FLOAT_FORMAT % mean, FLOAT_FORMAT % std)
                )
        logger.info("Wrote %s", path)
        return path

    @classmethod
    def read(cls, path):
        with open(path, newline="") as buf:
            rows = list(csv.reader(buf))
        if not rows or rows[0] != ["column", "mean", "std"]:
            raise DatasetFormatError("{} is not a statistics file".format(path))
        try:
            columns = [row[0] for row in rows[1:]]
            mean = [float(row[1]) for row in rows[1:]]
            std = [float(row[2]) for row in rows[1:]]
        except (IndexError, ValueError) as exc:
            raise DatasetFormatError("{}: {}".format(path, exc)) from None
        return cls(columns, mean, std)


def _parse_comment(line, path):
    if not line.startswith("#"):
        raise DatasetFormatError("{} has no metadata comment line".format(path))
    meta = {}
    for item in line[1:].split():
        key, sep, value = item.partition("=")
        if not sep:
            raise DatasetFormatError(
                "{}: malformed metadata item {!r}".format(path, item)
            )
        meta[key] = value
    return meta


@dataclass
class Dataset:
    """
    Table of samples, inputs first then outputs.

    :param columns: Column names, ``n_inputs`` input columns first.
    :param data: Samples, shape (n_samples, n_columns).
    :param n_inputs: Number of input columns.
    :param stats: Normalization statistics of the training split.
    """

    columns: Tuple[str, ...]
    data: np.ndarray
    n_inputs: int
    stats: NormalizationStats = None
    seed: int = 0
    generator_version: str = ""
    generator: str = "hardproj-reactor"
    split: str = "train"

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.data = np.array(self.data, dtype=np.float64, ndmin=2)
        if self.data.shape[1] != len(self.columns):
            raise ShapeError(
                "Dataset has {} columns but {} names".format(
                    self.data.shape[1], len(self.columns)
                )
            )
        if not 0 < self.n_inputs < len(self.columns):
            raise ConfigError("Invalid number of inputs {}".format(self.n_inputs))

    @property
    def n_samples(self):
        return self.data.shape[0]

    @property
    def n_outputs(self):
        return len(self.columns) - self.n_inputs

    @property
    def inputs(self):
        return self.data[:, : self.n_inputs]

    @property
    def outputs(self):
        return self.data[:, self.n_inputs :]

    @property
    def input_columns(self):
        return self.columns[: self.n_inputs]

    @property
    def output_columns(self):
        return self.columns[self.n_inputs :]

    def subsample(self, fraction, seed):
        """
        Uniformly sample a fraction of the rows without replacement.

        Row order is kept. ``fraction=1`` returns the dataset unchanged.
        """
        fraction = float(fraction)
        if not 0.0 < fraction <= 1.0:
            raise ConfigError("Train fraction must be in (0, 1], got {}".format(fraction))
        if fraction == 1.0:
            return self
        size = max(1, int(round(fraction * self.n_samples)))
        rng = make_rng(seed, SUBSAMPLE_STREAM)
        rows = np.sort(rng.choice(self.n_samples, size=size, replace=False))
        return Dataset(
            self.columns,
            self.data[rows],
            self.n_inputs,
            stats=self.stats,
            seed=self.seed,
            generator_version=self.generator_version,
            generator=self.generator,
            split=self.split,
        )

    def comment_line(self):
        return "# generator={} version={} seed={} split={} n_inputs={}".format(
            self.generator, self.generator_version, self.seed, self.split, self.n_inputs
        )

    def to_csv(self, path):
        """Write the table; the same dataset always gives the same bytes."""
        header = "{}\n{}".format(self.comment_line(), ",".join(self.columns))
        np.savetxt(
            path, self.data, fmt=FLOAT_FORMAT, delimiter=",", header=header, comments=""
        )
        logger.info("Wrote %s (%d samples)", path, self.n_samples)
        return path

    @classmethod
    def from_csv(cls, path, stats=None):
        """
        Read a table written by :meth:`to_csv`.

        :raises DatasetFormatError: if the comment line, the header or the
            rows are malformed.
        """
        with open(path) as buf:
            meta = _parse_comment(buf.readline().strip(), path)
            columns = buf.readline().strip().split(",")
        try:
            n_inputs = int(meta["n_inputs"])
            seed = int(meta.get("seed", 0))
        except (KeyError, ValueError):
            raise DatasetFormatError("{}: missing n_inputs or seed".format(path)) from None
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        except ValueError as exc:
            raise DatasetFormatError("{}: {}".format(path, exc)) from None
        if data.size == 0:
            raise DatasetFormatError("{} contains no samples".format(path))
        if data.shape[1] != len(columns):
            raise DatasetFormatError(
                "{} has {} values per row but {} column names".format(
                    path, data.shape[1], len(columns)
                )
            )
        return cls(
            columns,
            data,
            n_inputs,
            stats=stats,
            seed=seed,
            generator_version=meta.get("version", ""),
            generator=meta.get("generator", ""),
            split=meta.get("split", ""),
        )


def save_dataset(directory, train, test):
    """
    Write ``train.csv``, ``test.csv`` and ``stats.csv`` to a directory.

    :return: Paths of the three files.
    """
    ensure_directory(directory)
    stats = train.stats or NormalizationStats.from_data(train.columns, train.data)
    return [
        train.to_csv(os.path.join(directory, TRAIN_FILE)),
        test.to_csv(os.path.join(directory, TEST_FILE)),
        stats.write(os.path.join(directory, STATS_FILE)),
    ]


def load_dataset(directory):
    """
    Read the train and test splits of a dataset directory.

    :return: Tuple ``(train, test)`` sharing the training statistics.
    :raises DatasetFormatError: if the splits disagree on their columns.
    """
    stats = NormalizationStats.read(os.path.join(directory, STATS_FILE))
    train = Dataset.from_csv(os.path.join(directory, TRAIN_FILE), stats=stats)
    test = Dataset.from_csv(os.path.join(directory, TEST_FILE), stats=stats)
    if train.columns != test.columns or train.columns != stats.columns:
        raise DatasetFormatError(
            "Columns of {} differ between splits and statistics".format(directory)
        )
    return train, test
