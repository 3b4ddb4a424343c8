"""Command-line example library: linear regression, linear SVM and a 2-D GAN.

Every run writes ``metrics.csv`` and ``final.ckpt`` into ``--out-dir``;
``fit-gan`` also writes ``samples.csv``. Exit status is 0 on success, 1 when
fitting aborts, 2 on bad arguments.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import callbacks as cb
from . import persistence
from .callbacks import format_float
from .data import ArrayBatches
from .errors import CallbackError, NonFiniteLossError
from .gan import GAN, ModeDistance, gan_loss, mixture_samples
from .metrics import StateValue, mean
from .nn import Linear
from .optim import SGD
from .trial import Trial
from . import gan as G


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _nonnegative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0 or not np.isfinite(value):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _momentum(text):
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return value


def linreg_data(seed: int, n: int = 256):
    """``y = 2x + 1 + noise`` with noise variance 0.01 and x uniform on [-1, 1]."""
    rng = np.random.default_rng([seed, 0])
    x = rng.uniform(-1.0, 1.0, size=(n, 1))
    y = 2.0 * x + 1.0 + rng.normal(0.0, 0.1, size=(n, 1))
    return x, y


def svm_data(seed: int, n: int = 256, separation: float = 6.0):
    """Two unit-variance blobs ``separation`` apart; labels +/-1.

    Draws that would land within half a standard deviation of the midline are
    redrawn, so the classes are linearly separable by construction.
    """
    rng = np.random.default_rng([seed, 0])
    direction = np.array([1.0, 1.0]) / np.sqrt(2.0)
    half = separation / 2.0
    labels = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    x = np.empty((n, 2))
    for i, label in enumerate(labels):
        while True:
            point = label * half * direction + rng.standard_normal(2)
            if label * point @ direction > 0.5:
                break
        x[i] = point
    return x, labels.reshape(-1, 1)


def _loggers(out_dir):
    return [
        cb.csv_logger(os.path.join(out_dir, "metrics.csv")),
        cb.console_logger(),
        cb.checkpointer(os.path.join(out_dir, "final.ckpt"), "every_epoch"),
    ]


def build_linreg(args) -> Trial:
    x, y = linreg_data(args.seed)
    model = Linear(1, 1, np.random.default_rng([args.seed, 1]))
    names, params = zip(*model.named_parameters())
    opt = SGD(params, lr=args.lr, momentum=args.momentum, names=names)
    trial = Trial(model, opt, criterion="mse", metrics=["loss"], callbacks=_loggers(args.out_dir))
    return trial.with_train_generator(ArrayBatches(x, y, args.batch_size, shuffle=True, seed=args.seed))


def build_svm(args) -> Trial:
    x, y = svm_data(args.seed)
    model = Linear(2, 1, np.random.default_rng([args.seed, 1]))
    names, params = zip(*model.named_parameters())
    opt = SGD(params, lr=args.lr, momentum=args.momentum, names=names)
    trial = Trial(model, opt, criterion="hinge", metrics=["loss", "sign_acc"], callbacks=_loggers(args.out_dir))
    return trial.with_train_generator(ArrayBatches(x, y, args.batch_size, shuffle=True, seed=args.seed))


def build_gan(args):
    real = mixture_samples(1024, args.modes, np.random.default_rng([args.seed, 0]))
    model = GAN(latent_dim=args.latent_dim, seed=args.seed, rng=np.random.default_rng([args.seed, 1]))
    names, params = zip(*model.named_parameters())
    opt = SGD(params, lr=args.lr, momentum=args.momentum, names=names)
    probe = np.random.default_rng([args.seed, 2]).standard_normal((1024, args.latent_dim))
    callbacks = [gan_loss, ModeDistance(model, args.modes, probe)] + _loggers(args.out_dir)
    metrics = ["loss", mean(StateValue("g_loss", G.G_LOSS)), mean(StateValue("d_loss", G.D_LOSS))]
    trial = Trial(model, opt, metrics=metrics, callbacks=callbacks, pass_state=True)
    trial.with_train_generator(ArrayBatches(real, None, args.batch_size, shuffle=True, seed=args.seed))
    return trial, model, probe


def write_samples(path, points) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["x", "y"])
        for px, py in points:
            writer.writerow([format_float(px), format_float(py)])


def _common(sub, epochs, lr, batch_size, momentum):
    sub.add_argument("--epochs", type=_nonnegative_int, default=epochs)
    sub.add_argument("--lr", type=_positive_float, default=lr)
    sub.add_argument("--momentum", type=_momentum, default=momentum)
    sub.add_argument("--seed", type=_nonnegative_int, default=1)
    sub.add_argument("--batch-size", type=_positive_int, default=batch_size)
    sub.add_argument("--out-dir", default=".")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trialfit", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)
    _common(subs.add_parser("fit-linreg", help="linear regression on y = 2x + 1 + noise"), 200, 0.1, 32, 0.0)
    _common(subs.add_parser("fit-svm", help="linear SVM (hinge loss) on separable blobs"), 100, 0.1, 32, 0.0)
    gan = subs.add_parser("fit-gan", help="GAN on a ring of 2-D Gaussians")
    _common(gan, 50, 0.05, 64, 0.5)
    gan.add_argument("--latent-dim", type=_positive_int, default=8)
    gan.add_argument("--modes", type=_positive_int, default=8)
    return parser


def run(args) -> Trial:
    os.makedirs(args.out_dir, exist_ok=True)
    if args.command == "fit-linreg":
        trial = build_linreg(args)
        trial.run(args.epochs)
    elif args.command == "fit-svm":
        trial = build_svm(args)
        trial.run(args.epochs)
    else:
        trial, model, probe = build_gan(args)
        trial.run(args.epochs)
        write_samples(os.path.join(args.out_dir, "samples.csv"), model.sample(probe))
    persistence.save(trial.state_dict(), os.path.join(args.out_dir, "final.ckpt"))
    return trial


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run(args)
    except NonFiniteLossError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (CallbackError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
