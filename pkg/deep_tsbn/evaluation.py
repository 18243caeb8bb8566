"""One-step-ahead prediction, lower-bound estimates and precision@top-M for count data."""

from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from .data import SequenceBatch, stack_windows
from .deep import (
    DeepStates,
    deep_elbo_terms,
    deep_one_step_visible,
    deep_sample_posterior,
    deep_visible_params,
)
from .errors import LikelihoodMismatchError, ShapeMismatchError
from .numeric import RngStream, as_generator
from .params import GenerativeParams, Likelihood
from .shallow import elbo_terms, one_step_visible, sample_posterior, visible_params

logger = logging.getLogger(__name__)

DEFAULT_TOP_M = 50


class PredictionMode(Enum):
    """How the current hidden state enters a one-step prediction."""

    MEAN = "mean"
    SAMPLE = "sample"


def _check_samples(num_samples: int) -> None:
    if num_samples < 1:
        raise ValueError(f"The number of samples must be at least 1, got {num_samples}.")


def _predictive_means(
    theta, phi, V: np.ndarray, num_samples: int, generator: np.random.Generator, mode, extra: bool
) -> np.ndarray:
    """Average predictive frame means over posterior samples of the past.

    With `extra`, one zero frame is appended so the last row forecasts the frame after V.
    Returns an array of shape (T (+1), M).
    """
    mode = PredictionMode(mode)
    padded = np.vstack([V, np.zeros((1, V.shape[1]))]) if extra else V
    draw = generator if mode == PredictionMode.SAMPLE else None
    if isinstance(theta, GenerativeParams):
        H = sample_posterior(phi, V, generator, num_samples=num_samples).h
        if extra:
            H = np.concatenate([H, np.zeros((num_samples, 1, H.shape[-1]))], axis=1)
        return one_step_visible(theta, padded, H, draw).mean.mean(axis=0)

    total = np.zeros(padded.shape)
    for _ in range(num_samples):
        states = deep_sample_posterior(phi, V, generator)
        if extra:
            states.layers = tuple(np.vstack([x, np.zeros((1, x.shape[1]))]) for x in states.layers)
        total += deep_one_step_visible(theta, padded, states, draw).mean
    return total / num_samples


def predict_one_step(
    theta,
    phi,
    V,
    num_samples: int,
    rng: RngStream | np.random.Generator,
    mode: PredictionMode | str = PredictionMode.MEAN,
) -> np.ndarray:
    """Predict frames 2..T, each from the frames before it.

    For every sample, hidden histories are drawn from the recognition model (which only looks
    at frames up to the step it samples). The prior over the current hidden state is summarized
    by its mean (or a draw in sample mode) and pushed through the visible conditional; the
    resulting frame means are averaged over the samples.

    Args:
        theta: Generative parameters (shallow or deep).
        phi: Recognition parameters.
        V: Observed sequence (T × M).
        num_samples: Number of posterior samples S.
        rng: Random stream.
        mode: "mean" (default) or "sample".

    Returns:
        Predicted frames of shape (T - 1, M).
    """
    _check_samples(num_samples)
    V = np.asarray(V, dtype=np.float64)
    means = _predictive_means(theta, phi, V, num_samples, as_generator(rng), mode, extra=False)
    return means[1:]


def forecast_next(
    theta, phi, V, num_samples: int, rng: RngStream | np.random.Generator, mode="mean"
) -> np.ndarray:
    """Predict the frame that follows the last frame of V."""
    _check_samples(num_samples)
    V = np.asarray(V, dtype=np.float64)
    return _predictive_means(theta, phi, V, num_samples, as_generator(rng), mode, extra=True)[-1]


def repeat_last_frame(V) -> np.ndarray:
    """Baseline predictor: frame t is predicted by frame t - 1."""
    return np.asarray(V, dtype=np.float64)[:-1]


def pred_error(predicted, actual) -> float:
    """Mean over frames of the summed squared error per frame."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape:
        raise ShapeMismatchError(
            f"Predictions have shape {predicted.shape} but the frames have shape {actual.shape}."
        )
    if predicted.shape[0] == 0:
        return 0.0
    return float(np.mean(np.sum((predicted - actual) ** 2, axis=-1)))


@dataclass
class PredictionReport:
    """Squared one-step prediction errors of a set of sequences.

    Attributes:
        per_sequence: Mean squared error per frame of every sequence.
        num_samples: Posterior samples S used per prediction.
    """

    per_sequence: np.ndarray
    num_samples: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_sequence))

    @property
    def std(self) -> float:
        return float(np.std(self.per_sequence))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "sequence": np.arange(len(self.per_sequence)),
                "pred_error": self.per_sequence,
                "samples": self.num_samples,
            }
        )

    def summary(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"sequences": len(self.per_sequence), "mean": self.mean, "std": self.std}]
        )


def prediction_report(
    theta,
    phi,
    batch: SequenceBatch,
    num_samples: int,
    rng: RngStream,
    mode: PredictionMode | str = PredictionMode.MEAN,
    threads: int = 1,
) -> PredictionReport:
    """Prediction error of every sequence; sequence i uses the substream i of `rng`."""

    def score(index: int) -> float:
        V = batch[index]
        predicted = predict_one_step(theta, phi, V, num_samples, rng.child(index), mode)
        return pred_error(predicted, V[1:])

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        errors = np.array(list(executor.map(score, range(len(batch)))))
    report = PredictionReport(per_sequence=errors, num_samples=num_samples)
    if len(batch):
        logger.info(
            "Prediction error %.3f ± %.3f over %d sequences", report.mean, report.std, len(batch)
        )
    return report


@dataclass
class ElboEstimate:
    """Monte-Carlo estimate of the lower bound of one sequence.

    Attributes:
        mean: Average of the single-sample bound sum_t l_t.
        stderr: Standard error of that average.
        per_frame: mean divided by the sequence length.
        samples: The single-sample bounds.
    """

    mean: float
    stderr: float
    per_frame: float
    samples: np.ndarray


def estimate_elbo(
    theta, phi, V, num_samples: int, rng: RngStream | np.random.Generator
) -> ElboEstimate:
    """Estimate log p(V) from below by averaging the bound over S recognition samples."""
    _check_samples(num_samples)
    V = np.asarray(V, dtype=np.float64)
    generator = as_generator(rng)
    if isinstance(theta, GenerativeParams):
        H = sample_posterior(phi, V, generator, num_samples=num_samples).h
        values = np.sum(elbo_terms(theta, phi, V, H), axis=-1)
    else:
        values = np.array(
            [
                np.sum(deep_elbo_terms(theta, phi, V, deep_sample_posterior(phi, V, generator)))
                for _ in range(num_samples)
            ]
        )
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / np.sqrt(num_samples)) if num_samples > 1 else 0.0
    return ElboEstimate(mean=mean, stderr=stderr, per_frame=mean / V.shape[0], samples=values)


def elbo_report(
    theta, phi, batch: SequenceBatch, num_samples: int, rng: RngStream, threads: int = 1
) -> pd.DataFrame:
    """Lower-bound estimates of every sequence; sequence i uses the substream i of `rng`."""

    def estimate(index: int) -> dict:
        result = estimate_elbo(theta, phi, batch[index], num_samples, rng.child(index))
        return {
            "sequence": index,
            "elbo": result.mean,
            "stderr": result.stderr,
            "elbo_per_frame": result.per_frame,
            "frames": batch[index].shape[0],
        }

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        records = list(executor.map(estimate, range(len(batch))))
    return pd.DataFrame.from_records(
        records, columns=["sequence", "elbo", "stderr", "elbo_per_frame", "frames"]
    )


def _top_indices(values: np.ndarray, top_m: int) -> np.ndarray:
    # Stable sort on the negated values ranks ties by lower index first
    return np.argsort(-values, kind="stable")[:top_m]


def precision_at_top_m(scores, true_counts, top_m: int = DEFAULT_TOP_M) -> float:
    """Fraction of the model's top-M words that are among the M most frequent true words.

    Examples:
        >>> precision_at_top_m([3, 2, 1, 0, 0, 0], [3, 0, 2, 1, 0, 0], top_m=2)
        0.5
    """
    scores = np.asarray(scores, dtype=np.float64)
    true_counts = np.asarray(true_counts, dtype=np.float64)
    if scores.shape != true_counts.shape or scores.ndim != 1:
        raise ShapeMismatchError("scores and true_counts must be vectors of the same length.")
    if not 1 <= top_m <= scores.shape[0]:
        raise ValueError(f"top_m must lie in 1..{scores.shape[0]}, got {top_m}.")
    overlap = np.intersect1d(_top_indices(scores, top_m), _top_indices(true_counts, top_m))
    return overlap.size / top_m


@dataclass
class CountScores:
    """Word probabilities estimated by a count model.

    Attributes:
        in_sample: Word probabilities of every frame at the posterior mean of its hidden state
            (T × M).
        forecast: Predicted word probabilities of the frame after the sequence (M).
    """

    in_sample: np.ndarray
    forecast: np.ndarray


def _require_counts(theta) -> None:
    likelihood = theta.likelihood
    if likelihood != Likelihood.COUNT:
        raise LikelihoodMismatchError(
            f"Word rankings need a count model, not a {likelihood.value} model."
        )


def count_scores(
    theta, phi, V, num_samples: int, rng: RngStream | np.random.Generator
) -> CountScores:
    """Rank words of every observed frame and of the next frame.

    In-sample scores are the softmax probabilities evaluated at the hidden mean, estimated from
    `num_samples` recognition draws. The forecast averages the one-step predictive means.
    """
    _require_counts(theta)
    _check_samples(num_samples)
    V = np.asarray(V, dtype=np.float64)
    generator = as_generator(rng)
    if isinstance(theta, GenerativeParams):
        H = sample_posterior(phi, V, generator, num_samples=num_samples).h.mean(axis=0)
        in_sample = visible_params(theta, H, stack_windows(V, theta.order)).mean
    else:
        draws = [deep_sample_posterior(phi, V, generator) for _ in range(num_samples)]
        layers = zip(*(draw.layers for draw in draws))
        hidden_mean = DeepStates(layers=tuple(np.mean(layer, axis=0) for layer in layers))
        in_sample = deep_visible_params(theta, V, hidden_mean).mean
    forecast = forecast_next(theta, phi, V, num_samples, generator)
    return CountScores(in_sample=in_sample, forecast=forecast)


@dataclass
class PrecisionReport:
    """Precision@top-M of a count model.

    Attributes:
        per_frame: One record per (sequence, t) with the in-sample precision against the
            held-out words of that frame.
        predictive: One record per sequence with the precision of the forecast against a
            held-out final frame; empty when no final frames were given.
        top_m: Number of top-ranked words compared.
    """

    per_frame: pd.DataFrame
    predictive: pd.DataFrame
    top_m: int

    @property
    def mean_precision(self) -> float:
        return float(self.per_frame["precision"].mean())

    @property
    def predictive_precision(self) -> float | None:
        if self.predictive.empty:
            return None
        return float(self.predictive["precision"].mean())

    def summary(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "top_m": self.top_m,
                    "mean_precision": self.mean_precision,
                    "predictive_precision": self.predictive_precision,
                }
            ]
        )


def precision_report(
    theta,
    phi,
    train: SequenceBatch,
    heldout: SequenceBatch,
    num_samples: int,
    rng: RngStream,
    final: SequenceBatch | None = None,
    top_m: int = DEFAULT_TOP_M,
) -> PrecisionReport:
    """Precision@top-M on held-out words.

    Each frame's held-out words are ranked against the model's posterior word probabilities for
    that frame (mean precision); the first frame of each `final` sequence is ranked against the
    forecast made after the training frames (predictive precision).
    """
    if len(train) != len(heldout) or train.lengths != heldout.lengths:
        raise ShapeMismatchError("Training and held-out words must cover the same frames.")
    if final is not None and len(final) != len(train):
        raise ShapeMismatchError("Expected one final frame sequence per training sequence.")
    frame_records, predictive_records = [], []
    for i, (V, held) in enumerate(zip(train, heldout, strict=True)):
        scores = count_scores(theta, phi, V, num_samples, rng.child(i))
        for t in range(V.shape[0]):
            if held[t].sum() == 0:
                continue
            frame_records.append(
                {
                    "sequence": i,
                    "t": t + 1,
                    "precision": precision_at_top_m(scores.in_sample[t], held[t], top_m),
                }
            )
        if final is not None:
            precision = precision_at_top_m(scores.forecast, final[i][0], top_m)
            predictive_records.append({"sequence": i, "precision": precision})
    report = PrecisionReport(
        per_frame=pd.DataFrame.from_records(frame_records, columns=["sequence", "t", "precision"]),
        predictive=pd.DataFrame.from_records(predictive_records, columns=["sequence", "precision"]),
        top_m=top_m,
    )
    logger.info(
        "Precision@top-%d: mean %.3f, predictive %s",
        top_m,
        report.mean_precision,
        report.predictive_precision,
    )
    return report
