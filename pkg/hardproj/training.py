"""
Minibatch Adam training of surrogate models.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import net
from .dataset import NormalizationStats
from .exceptions import ConfigError
from .metrics import rce
from .model import SurrogateModel
from .utils import FLOAT_FORMAT, make_rng

__all__ = [
    "LOG_COLUMNS",
    "EpochRecord",
    "TrainResult",
    "train",
    "build_model",
    "train_from_config",
    "write_training_log",
]

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "loss", "max_rce", "seconds")

# Random stream of the seed reserved for minibatch shuffling.
SHUFFLE_STREAM = 2


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    max_rce: float
    seconds: float


@dataclass
class TrainResult:
    """Trained model and its per-epoch history."""

    model: SurrogateModel
    history: List[EpochRecord] = field(default_factory=list)

    @property
    def initial_loss(self):
        return self.history[0].loss if self.history else float("nan")

    @property
    def final_loss(self):
        return self.history[-1].loss if self.history else float("nan")

    @property
    def max_rce(self):
        """Largest post-projection RCE seen over all epochs [%]."""
        values = [r.max_rce for r in self.history if not np.isnan(r.max_rce)]
        return max(values) if values else float("nan")


def train(
    model,
    dataset,
    epochs,
    lr,
    batch_size,
    seed=0,
    log_every=100,
    monitor_feasibility=True,
):
    """
    Train a model in place with minibatch Adam.

    Every epoch visits the training rows in a fresh seeded permutation; the
    last batch of an epoch may be smaller. The epoch loss is the
    sample-weighted mean of the batch losses before each update. For
    projected variants the largest post-projection RCE of the epoch is
    recorded when ``monitor_feasibility`` is set.

    :param model: Model to train; its parameters are replaced.
    :type model: :class:`hardproj.model.SurrogateModel`
    :param dataset: Training samples.
    :type dataset: :class:`hardproj.dataset.Dataset`
    :return: Training result holding the model and its history.
    :rtype: :class:`TrainResult`
    :raises ConfigError: if ``batch_size`` exceeds the number of samples.
    """
    n = dataset.n_samples
    if batch_size > n:
        raise ConfigError(
            "batch_size {} exceeds the {} training samples".format(batch_size, n)
        )
    x_all, y_all = dataset.inputs, dataset.outputs
    spec = model.head_spec if monitor_feasibility else None
    rng = make_rng(seed, SHUFFLE_STREAM)
    state = net.AdamState.initial(model.params, lr)
    result = TrainResult(model)
    for epoch in range(1, int(epochs) + 1):
        start = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        worst = 0.0 if spec is not None else float("nan")
        for offset in range(0, n, batch_size):
            rows = order[offset : offset + batch_size]
            x, y = x_all[rows], y_all[rows]
            loss, grads, forward = model.loss_and_gradients(x, y)
            total += loss * len(rows)
            if spec is not None:
                worst = max(worst, float(np.max(rce(spec, x, forward.physical))))
            model.params, state = net.adam_step(model.params, grads, state)
        record = EpochRecord(epoch, total / n, worst, time.perf_counter() - start)
        result.history.append(record)
        if epoch == 1 or epoch % log_every == 0 or epoch == epochs:
            logger.info("Epoch %d loss %.6e", epoch, record.loss)
        if spec is not None:
            logger.debug("Epoch %d max RCE %.3e %%", epoch, worst)
    return result


def build_model(config, dataset):
    """
    Glorot initialized model for a configuration and a training set.

    Normalization statistics come from the dataset (the training split) or
    are the identity when ``config.normalize`` is off.
    """
    if config.normalize:
        stats = dataset.stats or NormalizationStats.from_data(dataset.columns, dataset.data)
    else:
        stats = NormalizationStats.identity(dataset.columns)
    n_inputs = dataset.n_inputs
    return SurrogateModel.initialize(
        config.variant,
        config.layer_dims(n_inputs, dataset.n_outputs),
        stats.select(range(n_inputs)),
        stats.select(range(n_inputs, len(dataset.columns))),
        seed=config.seed,
        constraints=config.constraints,
        linear_constraints=config.linear_constraints,
        gradient_mode=config.gradient_mode,
    )


def train_from_config(config, dataset):
    """
    Subsample the training set by ``config.train_fraction``, build a model
    and train it.

    :type config: :class:`hardproj.config.TrainConfig`
    :rtype: :class:`TrainResult`
    """
    subset = dataset.subsample(config.train_fraction, config.seed)
    config.check_batch_size(subset.n_samples)
    model = build_model(config, dataset)
    logger.info(
        "Training %s on %d samples for %d epochs",
        config.variant,
        subset.n_samples,
        config.epochs,
    )
    return train(
        model,
        subset,
        epochs=config.epochs,
        lr=config.lr,
        batch_size=config.batch_size,
        seed=config.seed,
        log_every=config.log_every,
        monitor_feasibility=config.monitor_feasibility,
    )


def write_training_log(history, path):
    """Write the per-epoch history as CSV with :data:`LOG_COLUMNS`."""
    with open(path, "w", newline="") as buf:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for record in history:
            writer.writerow(
                [
                    record.epoch,
                    FLOAT_FORMAT % record.loss,
                    FLOAT_FORMAT % record.max_rce,
                    "%.6f" % record.seconds,
                ]
            )
    logger.info("Wrote %s", path)
    return path
