"""The `deep-tsbn` command-line interface.

Every subcommand reads an optional `--config` file of `key = value` lines; flags given on the
command line override it. Randomized commands print the seed they ran with, and with
`--threads 1` (the default) a fixed seed reproduces the outputs byte for byte.
"""

from __future__ import annotations
import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from dataclasses import fields
from pathlib import Path

import numpy as np
import pandas as pd

from .checkpoint import load_checkpoint, save_checkpoint
from .config import LOG_LEVELS, RunConfig
from .data import SequenceBatch, gen_bouncing_balls, load_sequences, save_sequences, split_batch
from .deep import deep_sample
from .evaluation import PredictionMode, elbo_report, precision_report, prediction_report
from .numeric import RngStream
from .params import GenerativeParams
from .shallow import sample_sequence
from .trainer import SignalMode, check_dataset, train, write_metrics

logger = logging.getLogger(__name__)

PROG = "deep-tsbn"
DEFAULTS = {f.name: f.default for f in fields(RunConfig)}
DEFAULT_CHECKPOINT = Path("model.ckpt")
DEFAULT_SAMPLES = Path("samples.seq")


def _option(
    parser: argparse.ArgumentParser,
    flag: str,
    dest: str,
    help: str,
    shown: object = None,
    **kwargs,
) -> None:
    """Add a flag whose value is only recorded when given, so config files are not overridden.

    `shown` replaces the RunConfig default in the help text when a command falls back to its own.
    """
    if shown is None:
        shown = "none" if DEFAULTS[dest] is None else DEFAULTS[dest]
    parser.add_argument(
        flag, dest=dest, default=argparse.SUPPRESS, help=f"{help} (default: {shown})", **kwargs
    )


def _switch(parser: argparse.ArgumentParser, flag: str, dest: str, help: str) -> None:
    _option(parser, flag, dest, help, action=argparse.BooleanOptionalAction)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", type=Path, default=None, help="File of `key = value` settings."
    )
    _option(common, "--seed", "seed", "Root seed of every random stream.")
    _option(common, "--threads", "threads", "Worker threads for per-sequence work.")
    _option(common, "--log-level", "log_level", "Logging verbosity.", choices=LOG_LEVELS)
    _switch(common, "--progress", "progress", "Show progress bars.")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Train and evaluate (deep) temporal sigmoid belief networks.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_options()

    def subcommand(name: str, handler: Callable[[RunConfig], None], help: str):
        sub = subparsers.add_parser(name, parents=[common], help=help, description=help)
        sub.set_defaults(handler=handler)
        return sub

    sub = subcommand("gen-balls", cmd_gen_balls, "Generate a bouncing-balls video corpus.")
    _option(sub, "--balls", "balls", "Balls per video.")
    _option(sub, "--res", "res", "Frame side length in pixels.")
    _option(sub, "--length", "length", "Frames per video.")
    _option(sub, "--train", "num_train", "Videos in the training split.")
    _option(sub, "--test", "num_test", "Videos in the test split.")
    _option(sub, "--ball-radius", "ball_radius", "Ball radius in pixels (scaled with --res).")
    _option(sub, "--speed-scale", "speed_scale", "Typical speed in pixels per frame.")
    _option(sub, "--out-dir", "out_dir", "Directory receiving train.seq and test.seq.")

    sub = subcommand("train", cmd_train, "Train a model with NVIL.")
    _option(sub, "--spec", "spec", "Model, e.g. J=20,order=2,binary or J=25-25,count.")
    _option(sub, "--data", "data", "Training sequence file.")
    _option(sub, "--ckpt", "ckpt", "Checkpoint to resume from.")
    _option(sub, "--out", "out", "Checkpoint to write.", shown=DEFAULT_CHECKPOINT)
    _option(sub, "--metrics", "metrics", "Metrics log (defaults to the checkpoint path + .jsonl).")
    _option(sub, "--iters", "max_iterations", "Parameter updates.")
    _option(sub, "--learning-rate", "learning_rate", "RMSprop step size.")
    _option(sub, "--ms-decay", "ms_decay", "Decay of the mean squared gradient.")
    _option(sub, "--momentum", "momentum", "Momentum.")
    _option(sub, "--weight-decay", "weight_decay", "L2 penalty on weights.")
    _option(sub, "--epsilon", "epsilon", "RMSprop epsilon.")
    _option(sub, "--alpha", "alpha", "Decay of the running signal mean and variance.")
    _option(sub, "--baseline-hidden", "baseline_hidden", "Hidden units of the baseline.")
    _option(sub, "--batch-size", "batch_size", "Sequences per update.")
    _option(
        sub,
        "--signal-mode",
        "signal_mode",
        "Learning signal per time step.",
        choices=[mode.value for mode in SignalMode],
    )
    _switch(sub, "--baseline", "use_baseline", "Subtract the data-dependent baseline.")
    _switch(sub, "--centering", "use_centering", "Subtract the running signal mean.")
    _switch(sub, "--normalization", "use_normalization", "Divide by the running signal std.")
    _switch(sub, "--hmsbn", "hmsbn", "Keep the visible-history weights at zero.")
    _option(sub, "--log-every", "log_every", "Iterations between log lines.")
    _option(sub, "--checkpoint-every", "checkpoint_every", "Iterations between checkpoints.")

    sub = subcommand("sample", cmd_sample, "Draw sequences from a trained model.")
    _option(sub, "--ckpt", "ckpt", "Checkpoint.")
    _option(sub, "--T", "length", "Frames per sequence.")
    _option(sub, "--n", "num_sequences", "Number of sequences.")
    _option(sub, "--counts-per-frame", "counts_per_frame", "Words per frame (count models).")
    _option(sub, "--out", "out", "Sequence file to write.", shown=DEFAULT_SAMPLES)

    modes = [mode.value for mode in PredictionMode]
    sub = subcommand("predict", cmd_predict, "One-step-ahead prediction error.")
    _option(sub, "--ckpt", "ckpt", "Checkpoint.")
    _option(sub, "--data", "data", "Sequence file to predict.")
    _option(sub, "--S", "samples", "Posterior samples per sequence.")
    _option(sub, "--mode", "mode", "Mean or draw of the current hidden state.", choices=modes)
    _option(sub, "--out", "out", "Per-sequence report (JSON lines).")

    sub = subcommand("elbo", cmd_elbo, "Monte-Carlo lower bound on the log-likelihood.")
    _option(sub, "--ckpt", "ckpt", "Checkpoint.")
    _option(sub, "--data", "data", "Sequence file to score.")
    _option(sub, "--S", "samples", "Posterior samples per sequence.")
    _option(sub, "--out", "out", "Per-sequence report (JSON lines).")

    sub = subcommand("eval-precision", cmd_eval_precision, "Precision@top-M of a count model.")
    _option(sub, "--ckpt", "ckpt", "Checkpoint.")
    _option(sub, "--data", "data", "Training words of every frame.")
    _option(sub, "--heldout", "heldout", "Held-out words of the same frames.")
    _option(sub, "--final", "final", "Sequences whose first frame is the held-out next frame.")
    _option(sub, "--S", "samples", "Posterior samples per sequence.")
    _option(sub, "--top-m", "top_m", "Number of top-ranked words compared.")
    _option(sub, "--out", "out", "Per-frame report (JSON lines).")

    sub = subcommand("split-words", cmd_split_words, "Split count data into train/held-out words.")
    _option(sub, "--data", "data", "Count sequence file.")
    _option(sub, "--fraction", "fraction", "Share of word tokens kept for training.")
    _option(sub, "--out-dir", "out_dir", "Directory receiving train.seq and heldout.seq.")
    return parser


def _header(config: RunConfig) -> None:
    print(f"# {PROG} {config.command} seed={config.seed} threads={config.threads}")


def _write_report(frame: pd.DataFrame, path: Path | None) -> None:
    if path is not None:
        frame.to_json(path, orient="records", lines=True)
        logger.info("Wrote report %s", path)


def _batch_summary(name: str, batch: SequenceBatch) -> dict:
    return {
        "split": name,
        "sequences": len(batch),
        "frames": batch.num_frames,
        "visible_dim": batch.visible_dim,
        "mean_value": float(np.mean([V.mean() for V in batch])) if len(batch) else 0.0,
    }


def cmd_gen_balls(config: RunConfig) -> None:
    config.require("out_dir")
    out_dir = Path(config.out_dir)  # type: ignore[arg-type]
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set = gen_bouncing_balls(
        config.balls_config(config.num_train), threads=config.threads, progress=config.progress
    )
    test_set = gen_bouncing_balls(
        config.balls_config(config.num_test),
        start_index=config.num_train,
        threads=config.threads,
        progress=config.progress,
    )
    save_sequences(out_dir / "train.seq", train_set)
    save_sequences(out_dir / "test.seq", test_set)
    _header(config)
    summary = pd.DataFrame([_batch_summary("train", train_set), _batch_summary("test", test_set)])
    print(summary.to_string(index=False))


def cmd_train(config: RunConfig) -> None:
    config.require("data")
    dataset = load_sequences(config.data)  # type: ignore[arg-type]
    trainer_config = config.trainer_config()
    params, state = None, None
    if config.ckpt is not None:
        resumed = load_checkpoint(config.ckpt)
        spec, params, state = resumed.spec, (resumed.theta, resumed.phi), resumed.state
        logger.info("Resuming %s from iteration %d", config.ckpt, state.iteration)
    else:
        spec = config.model_spec(dataset.visible_dim)
    check_dataset(spec, dataset)
    out = Path(config.out or DEFAULT_CHECKPOINT)

    def on_checkpoint(spec, theta, phi, state) -> None:
        save_checkpoint(out, spec, theta, phi, state, trainer_config)

    _header(config)
    result = train(
        spec,
        dataset,
        trainer_config,
        RngStream(config.seed),
        params=params,
        state=state,
        on_checkpoint=on_checkpoint,
        progress=config.progress,
    )
    save_checkpoint(out, spec, result.theta, result.phi, result.state, trainer_config)
    metrics_path = config.metrics or out.with_name(out.name + ".jsonl")
    write_metrics(result.metrics, metrics_path)
    final = result.metrics.tail(1)
    print(final.to_string(index=False))


def cmd_sample(config: RunConfig) -> None:
    config.require("ckpt")
    checkpoint = load_checkpoint(config.ckpt)  # type: ignore[arg-type]
    rng = RngStream(config.seed)
    frames = []
    for i in range(config.num_sequences):
        if isinstance(checkpoint.theta, GenerativeParams):
            V, _ = sample_sequence(
                checkpoint.theta, config.length, rng.child(i), config.counts_per_frame
            )
        else:
            V, _ = deep_sample(
                checkpoint.theta, config.length, rng.child(i), config.counts_per_frame
            )
        frames.append(V)
    batch = SequenceBatch(frames, checkpoint.spec.likelihood, checkpoint.spec.visible_dim)
    save_sequences(config.out or DEFAULT_SAMPLES, batch)
    _header(config)
    print(pd.DataFrame([_batch_summary("sampled", batch)]).to_string(index=False))


def _model_and_data(config: RunConfig):
    config.require("ckpt", "data")
    checkpoint = load_checkpoint(config.ckpt)  # type: ignore[arg-type]
    batch = load_sequences(config.data)  # type: ignore[arg-type]
    check_dataset(checkpoint.spec, batch)
    return checkpoint, batch


def cmd_predict(config: RunConfig) -> None:
    checkpoint, batch = _model_and_data(config)
    report = prediction_report(
        checkpoint.theta,
        checkpoint.phi,
        batch,
        config.samples,
        RngStream(config.seed),
        config.mode,
        threads=config.threads,
    )
    _write_report(report.to_frame(), config.out)
    _header(config)
    print(report.summary().to_string(index=False))


def cmd_elbo(config: RunConfig) -> None:
    checkpoint, batch = _model_and_data(config)
    report = elbo_report(
        checkpoint.theta,
        checkpoint.phi,
        batch,
        config.samples,
        RngStream(config.seed),
        threads=config.threads,
    )
    _write_report(report, config.out)
    _header(config)
    summary = pd.DataFrame(
        [
            {
                "sequences": len(report),
                "elbo": report["elbo"].mean(),
                "elbo_per_frame": report["elbo"].sum() / max(1, report["frames"].sum()),
            }
        ]
    )
    print(summary.to_string(index=False))


def cmd_eval_precision(config: RunConfig) -> None:
    checkpoint, train_words = _model_and_data(config)
    config.require("heldout")
    heldout = load_sequences(config.heldout)  # type: ignore[arg-type]
    final = load_sequences(config.final) if config.final is not None else None
    report = precision_report(
        checkpoint.theta,
        checkpoint.phi,
        train_words,
        heldout,
        config.samples,
        RngStream(config.seed),
        final=final,
        top_m=config.top_m,
    )
    _write_report(report.per_frame, config.out)
    _header(config)
    print(report.summary().to_string(index=False))


def cmd_split_words(config: RunConfig) -> None:
    config.require("data", "out_dir")
    batch = load_sequences(config.data)  # type: ignore[arg-type]
    out_dir = Path(config.out_dir)  # type: ignore[arg-type]
    out_dir.mkdir(parents=True, exist_ok=True)
    kept, heldout = split_batch(batch, config.fraction, RngStream(config.seed))
    save_sequences(out_dir / "train.seq", kept)
    save_sequences(out_dir / "heldout.seq", heldout)
    _header(config)
    summary = pd.DataFrame(
        [
            {"split": "train", "words": int(sum(V.sum() for V in kept))},
            {"split": "heldout", "words": int(sum(V.sum() for V in heldout))},
        ]
    )
    print(summary.to_string(index=False))


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Overlay the flags that were given on the config file (or the defaults)."""
    overrides = {
        key: value for key, value in vars(args).items() if key not in ("config", "handler")
    }
    base = RunConfig.from_file(args.config) if args.config is not None else RunConfig()
    return base.merged(overrides)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(args, "log_level", "INFO"),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
        logging.getLogger().setLevel(config.log_level)
        args.handler(config)
    except (ValueError, FloatingPointError, OSError) as error:
        logger.error("%s failed: %s", args.command, error)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
