"""
Command-line interface: ``hardproj generate|train|eval|sweep``.

Logs go to standard error and data products to files. The evaluation table
and ``--show-config`` output are the only things written to standard output.

Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
numerical failures and 3 for file errors.
"""

import argparse
import csv
import logging
import os
import sys

import numpy as np

from .config import TrainConfig
from .dataset import load_dataset
from .exceptions import ConfigError, DatasetFormatError, NumericalError, ShapeError
from .metrics import evaluate, format_comparison, write_comparison_csv
from .model import VARIANTS, SurrogateModel
from .reactor import generate_dataset
from .training import train_from_config, write_training_log
from .utils import FLOAT_FORMAT, ensure_directory, parse_list, stringify_parameters
from .version import get_version

__all__ = [
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_NUMERICAL",
    "EXIT_IO",
    "SWEEP_FRACTIONS",
    "cmd_generate",
    "cmd_train",
    "cmd_eval",
    "cmd_sweep",
    "build_parser",
    "main",
]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

SWEEP_FRACTIONS = (0.2, 0.35, 0.5, 1.0)
SWEEP_SEED_COUNT = 3
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def cmd_generate(config):
    """
    Generate the reactor dataset into ``config.data_dir``.

    :return: Paths of ``train.csv``, ``test.csv`` and ``stats.csv``.
    """
    generate_dataset(
        n_train=config.n_train,
        n_test=config.n_test,
        seed=config.seed,
        directory=config.data_dir,
    )
    return [
        os.path.join(config.data_dir, name)
        for name in ("train.csv", "test.csv", "stats.csv")
    ]


def cmd_train(config, name=None):
    """
    Train one model on ``config.data_dir`` and write its checkpoint
    ``<name>.json`` and training log ``<name>.log.csv`` to
    ``config.output_dir``. ``name`` defaults to the variant.

    :return: Tuple ``(result, checkpoint_path, log_path)``.
    """
    train_set, _ = load_dataset(config.data_dir)
    result = train_from_config(config, train_set)
    name = name or config.variant
    ensure_directory(config.output_dir)
    checkpoint = result.model.save_checkpoint(
        os.path.join(config.output_dir, "{}.json".format(name))
    )
    log_path = write_training_log(
        result.history, os.path.join(config.output_dir, "{}.log.csv".format(name))
    )
    if result.model.head_spec is not None and config.monitor_feasibility:
        logger.info("Max post-projection RCE during training %.3e %%", result.max_rce)
    return result, checkpoint, log_path


def _tag(path):
    return os.path.splitext(os.path.basename(path))[0]


def cmd_eval(checkpoints, data_dir, split="test", output=None):
    """
    Evaluate checkpoints on a dataset split.

    :param checkpoints: Checkpoint paths; each becomes a table column named
        after its file.
    :param output: CSV path of the comparison, skipped if None. Each report is
        also written next to it as ``<tag>.<split>.csv`` with ``metric,value``
        rows.
    :return: List of :class:`hardproj.metrics.EvalReport`.
    """
    if split not in ("train", "test"):
        raise ConfigError("split must be train or test, got {}".format(split))
    train_set, test_set = load_dataset(data_dir)
    dataset = test_set if split == "test" else train_set
    reports = []
    for path in checkpoints:
        model = SurrogateModel.load_checkpoint(path)
        reports.append(evaluate(model, dataset, model_tag=_tag(path), dataset_tag=split))
    if output:
        directory = os.path.dirname(output)
        ensure_directory(directory)
        write_comparison_csv(reports, output)
        for report in reports:
            report.to_csv(
                os.path.join(directory, "{}.{}.csv".format(report.model_tag, split))
            )
    return reports


SWEEP_COLUMNS = ("variant", "fraction", "seed", "n_train", "r2", "mape", "max_rce", "final_loss")
SUMMARY_COLUMNS = ("variant", "fraction", "n_seeds", "median_r2", "median_mape", "max_rce")


def cmd_sweep(config, fractions=SWEEP_FRACTIONS, variants=VARIANTS, seeds=(0,)):
    """
    Train every variant on uniformly sampled fractions of the training set.

    Every ``(variant, fraction, seed)`` run is evaluated on the test split.
    Writes ``sweep.csv`` with one row per run and ``sweep_summary.csv`` with
    medians over seeds to ``config.output_dir``.

    :return: List of per-run rows as dicts.
    """
    fractions = [float(f) for f in fractions]
    if not fractions or any(not 0.0 < f <= 1.0 for f in fractions):
        raise ConfigError("Sweep fractions must lie in (0, 1]")
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ConfigError("Unknown variants {}".format(", ".join(unknown)))
    train_set, test_set = load_dataset(config.data_dir)
    rows = []
    for variant in variants:
        for fraction in fractions:
            for seed in seeds:
                run = config.update(variant=variant, train_fraction=fraction, seed=seed)
                result = train_from_config(run, train_set)
                report = evaluate(result.model, test_set, dataset_tag="test")
                rows.append(
                    {
                        "variant": variant,
                        "fraction": fraction,
                        "seed": int(seed),
                        "n_train": int(round(fraction * train_set.n_samples)),
                        "r2": report.mean_r2,
                        "mape": report.mape,
                        "max_rce": float(np.max(report.rce_max)),
                        "final_loss": result.final_loss,
                    }
                )
                logger.info(
                    "Sweep %s fraction %s seed %d: R2 %.4f",
                    variant,
                    fraction,
                    seed,
                    report.mean_r2,
                )
    ensure_directory(config.output_dir)
    _write_rows(os.path.join(config.output_dir, "sweep.csv"), SWEEP_COLUMNS, rows)
    _write_rows(
        os.path.join(config.output_dir, "sweep_summary.csv"),
        SUMMARY_COLUMNS,
        _summarize(rows, variants, fractions),
    )
    return rows


def _summarize(rows, variants, fractions):
    summary = []
    for variant in variants:
        for fraction in fractions:
            runs = [r for r in rows if r["variant"] == variant and r["fraction"] == fraction]
            summary.append(
                {
                    "variant": variant,
                    "fraction": fraction,
                    "n_seeds": len(runs),
                    "median_r2": float(np.median([r["r2"] for r in runs])),
                    "median_mape": float(np.median([r["mape"] for r in runs])),
                    "max_rce": float(np.max([r["max_rce"] for r in runs])),
                }
            )
    return summary


def _write_rows(path, columns, rows):
    with open(path, "w", newline="") as buf:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [
                    FLOAT_FORMAT % row[c] if isinstance(row[c], float) else row[c]
                    for c in columns
                ]
            )
    logger.info("Wrote %s", path)
    return path


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "{}: error: {}\n".format(self.prog, message))


def _common_parser():
    parser = _ArgumentParser(add_help=False)
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument(
        "--paper-scale",
        "--full-scale",
        dest="full_scale",
        action="store_true",
        help="20000/500 samples, 50000 epochs, lr 1e-5, batch 2000",
    )
    parser.add_argument(
        "--show-config", action="store_true", help="print the effective config and exit"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--data-dir", dest="data_dir")
    parser.add_argument("--output-dir", dest="output_dir")
    return parser


def _training_parser():
    parser = _ArgumentParser(add_help=False)
    parser.add_argument("--variant", choices=VARIANTS)
    parser.add_argument("--hidden", help="hidden layer widths, e.g. 64 or 64,64")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--train-fraction", dest="train_fraction", type=float)
    parser.add_argument("--gradient-mode", dest="gradient_mode", choices=("frozen", "exact"))
    parser.add_argument(
        "--no-normalize", dest="normalize", action="store_const", const=False
    )
    parser.add_argument("--constraints")
    parser.add_argument("--linear-constraints", dest="linear_constraints")
    parser.add_argument("--log-every", dest="log_every", type=int)
    return parser


def build_parser():
    """Argument parser of the ``hardproj`` command."""
    parser = _ArgumentParser(
        prog="hardproj",
        description="Hard-constrained neural network surrogates with KKT projection layers.",
    )
    parser.add_argument("--version", action="version", version=get_version())
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    common = _common_parser()
    training = _training_parser()

    generate = commands.add_parser(
        "generate", parents=[common], help="generate the reactor dataset"
    )
    generate.add_argument("--train", dest="n_train", type=int)
    generate.add_argument("--test", dest="n_test", type=int)

    train = commands.add_parser(
        "train", parents=[common, training], help="train one model variant"
    )
    train.add_argument("--name", help="checkpoint file stem, default the variant")

    evaluate_ = commands.add_parser("eval", parents=[common], help="evaluate checkpoints")
    evaluate_.add_argument("checkpoints", nargs="+")
    evaluate_.add_argument("--split", choices=("train", "test"), default="test")
    evaluate_.add_argument("--output", help="comparison CSV, default <output-dir>/eval.csv")

    sweep = commands.add_parser(
        "sweep", parents=[common, training], help="train on fractions of the data"
    )
    sweep.add_argument("--fractions", default=stringify_parameters(SWEEP_FRACTIONS))
    sweep.add_argument("--variants", default=stringify_parameters(VARIANTS))
    sweep.add_argument(
        "--seeds", help="comma list, default {} seeds from --seed".format(SWEEP_SEED_COUNT)
    )
    return parser


_CONFIG_KEYS = tuple(TrainConfig.default_parameters)


def _build_config(args):
    values = {}
    if args.full_scale:
        values.update(TrainConfig.full_scale_parameters)
    if args.config:
        values.update(TrainConfig.read_file(args.config))
    values.update(
        (key, getattr(args, key))
        for key in _CONFIG_KEYS
        if getattr(args, key, None) is not None
    )
    return TrainConfig(**values)


def _configure_logging(args):
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(stream=sys.stderr, level=level, format=LOG_FORMAT)


def _dispatch(args):
    config = _build_config(args)
    if args.show_config:
        sys.stdout.write(config.as_text())
        return EXIT_OK
    if args.command == "generate":
        cmd_generate(config)
    elif args.command == "train":
        cmd_train(config, name=args.name)
    elif args.command == "eval":
        output = args.output or os.path.join(config.output_dir, "eval.csv")
        reports = cmd_eval(args.checkpoints, config.data_dir, args.split, output)
        sys.stdout.write(format_comparison(reports) + "\n")
    elif args.command == "sweep":
        try:
            fractions = parse_list(args.fractions, cast=float)
            if args.seeds is None:
                seeds = list(range(config.seed, config.seed + SWEEP_SEED_COUNT))
            else:
                seeds = parse_list(args.seeds, cast=int)
        except ValueError as exc:
            raise ConfigError("Invalid sweep list: {}".format(exc)) from None
        cmd_sweep(config, fractions, parse_list(args.variants, cast=str), seeds)
    return EXIT_OK


def main(argv=None):
    """
    Run the command line.

    :return: Exit code.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)
    try:
        return _dispatch(args)
    except (ConfigError, ShapeError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except NumericalError as exc:
        logger.error("%s", exc)
        return EXIT_NUMERICAL
    except (OSError, DatasetFormatError) as exc:
        logger.error("%s", exc)
        return EXIT_IO
