"""Training with neural variational inference and learning (NVIL).

Every iteration draws one recognition sample per sequence, turns the per-timestep lower-bound
terms into a learning signal (optionally minus a data-dependent baseline, centered and scaled by
running statistics), forms score-function gradients for the recognition model and exact
gradients for the generative model, and takes one RMSprop ascent step.
"""

from __future__ import annotations
import logging
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, ClassVar, Generic, TypeVar

import numpy as np
import pandas as pd
from tqdm import tqdm

from .data import SequenceBatch
from .deep import DeepStates, deep_elbo_terms, deep_grads, deep_sample_posterior
from .errors import LikelihoodMismatchError, NonFiniteSignalError, ShapeMismatchError
from .numeric import RngStream, as_generator
from .params import (
    HMSBN_BLOCKS,
    GenerativeParams,
    ModelParams,
    ModelSpec,
    ParameterSet,
    hmsbn_mask,
    init_params,
    random_weights,
)
from .shallow import HiddenStates, elbo_terms, grad_log_joint, grad_log_q, sample_posterior

logger = logging.getLogger(__name__)

_P = TypeVar("_P", bound=ParameterSet)

SMOOTHING_WINDOW = 100

# Substreams of a training run's root stream
INIT_STREAM, BASELINE_STREAM, BATCH_STREAM, POSTERIOR_STREAM = range(4)


class SignalMode(Enum):
    """Which lower-bound terms multiply the recognition score of time step t.

    LOCAL pairs l_t with its own step. SEQUENCE uses the whole-sequence bound for every step,
    and SUFFIX uses sum_{s >= t} l_s, the terms that h_t can influence; both are unbiased.
    """

    LOCAL = "local"
    SEQUENCE = "sequence"
    SUFFIX = "suffix"


@dataclass(frozen=True, eq=False)
class BaselineParams(ParameterSet):
    """Data-dependent baseline C(v_t) = w_out · tanh(A v_t + a) + b_out.

    Attributes:
        A: H × M input weights.
        a: Hidden biases (H).
        w_out: Output weights (H).
        b_out: Output bias, a 0-dimensional array.
    """

    A: np.ndarray
    a: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    BIAS_FIELDS: ClassVar[frozenset[str]] = frozenset({"a", "b_out"})

    def __post_init__(self):
        for name in ("A", "a", "w_out", "b_out"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        hidden = self.a.shape[0]
        if self.A.ndim != 2 or self.A.shape[0] != hidden:
            raise ShapeMismatchError(f"A has shape {self.A.shape}; expected ({hidden}, M).")
        if self.w_out.shape != (hidden,) or self.b_out.shape != ():
            raise ShapeMismatchError("w_out needs one entry per hidden unit and b_out is a scalar.")

    @property
    def visible_dim(self) -> int:
        return self.A.shape[1]


def zero_baseline(visible_dim: int, hidden_units: int = 100) -> BaselineParams:
    return BaselineParams(
        A=np.zeros((hidden_units, visible_dim)),
        a=np.zeros(hidden_units),
        w_out=np.zeros(hidden_units),
        b_out=np.zeros(()),
    )


def init_baseline(
    visible_dim: int, hidden_units: int, rng: RngStream | np.random.Generator
) -> BaselineParams:
    """Baseline weights drawn like the model weights; biases start at zero."""
    return random_weights(zero_baseline(visible_dim, hidden_units), as_generator(rng))


def baseline_forward(baseline: BaselineParams, v) -> float | np.ndarray:
    """Evaluate C(v_t) for one frame (M) or for every frame of a sequence (T × M)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != baseline.visible_dim:
        raise ShapeMismatchError(
            f"Frame has {v.shape[-1]} entries; the baseline expects {baseline.visible_dim}."
        )
    out = np.tanh(v @ baseline.A.T + baseline.a) @ baseline.w_out + baseline.b_out
    return float(out) if np.ndim(out) == 0 else out


def baseline_grad(baseline: BaselineParams, V, weights=None) -> BaselineParams:
    """Gradient of sum_t w_t C(v_t) with respect to the baseline parameters."""
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    weights = np.ones(V.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    hidden = np.tanh(V @ baseline.A.T + baseline.a)
    d_pre = (weights[:, None] * baseline.w_out) * (1.0 - hidden**2)
    return baseline.with_arrays(
        {
            "A": d_pre.T @ V,
            "a": d_pre.sum(axis=0),
            "w_out": weights @ hidden,
            "b_out": np.asarray(weights.sum()),
        }
    )


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters of NVIL training with RMSprop.

    Attributes:
        learning_rate: RMSprop step size.
        ms_decay: Decay of the running mean of squared gradients.
        momentum: Momentum of the update.
        weight_decay: L2 penalty on weight blocks (never on biases).
        epsilon: Added to the mean square inside the square root.
        alpha: Decay of the running signal mean c and variance v.
        max_iterations: Number of parameter updates.
        baseline_hidden: Number of tanh units of the data-dependent baseline.
        use_baseline: Subtract the data-dependent baseline from the signal.
        use_centering: Subtract the running mean c from the signal.
        use_normalization: Divide the signal by max(1, sqrt(v)).
        signal_mode: How lower-bound terms are paired with recognition scores.
        batch_size: Sequences per iteration; their gradients are summed.
        threads: Worker threads for per-sequence work. Results do not depend on this.
        hmsbn: Keep the visible-history blocks W3, W4 (and W4' for real data) at zero.
        log_every: Iterations between progress log lines.
        checkpoint_every: Iterations between checkpoints; 0 writes none during training.
    """

    learning_rate: float = 1e-4
    ms_decay: float = 0.95
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epsilon: float = 1e-8
    alpha: float = 0.8
    max_iterations: int = 100_000
    baseline_hidden: int = 100
    use_baseline: bool = True
    use_centering: bool = True
    use_normalization: bool = True
    signal_mode: SignalMode = SignalMode.LOCAL
    batch_size: int = 1
    threads: int = 1
    hmsbn: bool = False
    log_every: int = 100
    checkpoint_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "signal_mode", SignalMode(self.signal_mode))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}.")
        if not 0.0 <= self.ms_decay < 1.0 or not 0.0 <= self.momentum < 1.0:
            raise ValueError("ms_decay and momentum must lie in [0, 1).")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive.")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative.")
        for name in ("baseline_hidden", "batch_size", "threads", "log_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}.")
        if self.max_iterations < 0 or self.checkpoint_every < 0:
            raise ValueError("max_iterations and checkpoint_every must be nonnegative.")

    def to_dict(self) -> dict[str, Any]:
        values = asdict(self)
        values["signal_mode"] = self.signal_mode.value
        return values

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> TrainerConfig:
        return cls(**values)


@dataclass(frozen=True, eq=False)
class RMSpropSlots(Generic[_P]):
    """Running mean squares and momentum buffers shaped like one parameter container."""

    mean_square: _P
    velocity: _P

    @classmethod
    def zeros_like(cls, params: _P) -> RMSpropSlots[_P]:
        return cls(mean_square=params.zeros_like(), velocity=params.zeros_like())


@dataclass(frozen=True, eq=False)
class TrainerState:
    """Mutable-by-replacement state of a training run.

    Attributes:
        baseline: Parameters λ of the data-dependent baseline.
        theta_slots: Optimizer buffers of the generative parameters.
        phi_slots: Optimizer buffers of the recognition parameters.
        baseline_slots: Optimizer buffers of the baseline.
        c: Running mean of the learning signal.
        v: Running variance of the learning signal.
        iteration: Number of completed updates.
    """

    baseline: BaselineParams
    theta_slots: RMSpropSlots
    phi_slots: RMSpropSlots
    baseline_slots: RMSpropSlots
    c: float = 0.0
    v: float = 1.0
    iteration: int = 0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError(f"The running signal variance must be nonnegative, got {self.v}.")

    @classmethod
    def initial(
        cls, theta: ParameterSet, phi: ParameterSet, baseline: BaselineParams
    ) -> TrainerState:
        return cls(
            baseline=baseline,
            theta_slots=RMSpropSlots.zeros_like(theta),
            phi_slots=RMSpropSlots.zeros_like(phi),
            baseline_slots=RMSpropSlots.zeros_like(baseline),
        )


def rmsprop_update(
    params: _P,
    grads: _P,
    slots: RMSpropSlots[_P],
    config: TrainerConfig,
    frozen: Iterable[str] = (),
) -> tuple[_P, RMSpropSlots[_P]]:
    """One RMSprop ascent step with momentum and weight decay.

    ms <- decay · ms + (1 - decay) · g^2,
    step <- momentum · step + lr · g / sqrt(ms + eps),
    w <- w + step - lr · weight_decay · w (weight blocks only).

    Args:
        params: Current parameters.
        grads: Gradient of the objective being maximized, shaped like `params`.
        slots: Optimizer buffers.
        config: Hyperparameters.
        frozen: Blocks that must not move; their gradient and decay are ignored.

    Returns:
        The updated parameters and buffers.
    """
    frozen = set(frozen)
    biases = params.bias_names()
    values, gradients = params.arrays(), grads.arrays()
    mean_squares, velocities = slots.mean_square.arrays(), slots.velocity.arrays()
    new_values, new_ms, new_velocity = {}, {}, {}
    for name, w in values.items():
        g = gradients[name]
        if g.shape != w.shape:
            raise ShapeMismatchError(f"Gradient {name} has shape {g.shape}, expected {w.shape}.")
        if name in frozen:
            g = np.zeros_like(g)
        ms = config.ms_decay * mean_squares[name] + (1.0 - config.ms_decay) * g**2
        step = config.momentum * velocities[name] + config.learning_rate * g / np.sqrt(
            ms + config.epsilon
        )
        decay = 0.0 if name in biases or name in frozen else config.weight_decay
        new_values[name] = w + step - config.learning_rate * decay * w
        new_ms[name], new_velocity[name] = ms, step
    return params.with_arrays(new_values), RMSpropSlots(
        mean_square=slots.mean_square.with_arrays(new_ms),
        velocity=slots.velocity.with_arrays(new_velocity),
    )


def update_signal_stats(
    c: float, v: float, signal: np.ndarray, alpha: float
) -> tuple[float, float]:
    """Exponentially smoothed mean and variance of the learning signal of one batch."""
    c_batch, v_batch = float(np.mean(signal)), float(np.var(signal))
    return alpha * c + (1.0 - alpha) * c_batch, alpha * v + (1.0 - alpha) * v_batch


def shape_signal(terms: np.ndarray, mode: SignalMode) -> np.ndarray:
    """Per-timestep learning signal of one sequence before baselines and normalization."""
    if mode == SignalMode.SEQUENCE:
        return np.full_like(terms, terms.sum())
    if mode == SignalMode.SUFFIX:
        return np.cumsum(terms[::-1])[::-1]
    return terms.copy()


@dataclass
class NvilStep:
    """Result of one NVIL gradient estimate.

    Attributes:
        grad_theta: Gradient estimate for the generative parameters.
        grad_phi: Gradient estimate for the recognition parameters.
        grad_baseline: Gradient estimate for the baseline.
        elbo: Single-sample lower bound summed over the batch.
        num_frames: Number of frames in the batch.
        state: Trainer state with the running signal statistics updated.
        signal: Final per-timestep signal of every sequence.
    """

    grad_theta: ParameterSet
    grad_phi: ParameterSet
    grad_baseline: BaselineParams
    elbo: float
    num_frames: int
    state: TrainerState
    signal: list[np.ndarray] = field(default_factory=list)


def _posterior_terms(
    theta, phi, V: np.ndarray, rng: RngStream
) -> tuple[HiddenStates | DeepStates, np.ndarray]:
    if isinstance(theta, GenerativeParams):
        hidden = sample_posterior(phi, V, rng)
        return hidden, elbo_terms(theta, phi, V, hidden.h)
    states = deep_sample_posterior(phi, V, rng)
    return states, deep_elbo_terms(theta, phi, V, states)


def _sequence_grads(theta, phi, V: np.ndarray, states, weights: np.ndarray):
    if isinstance(theta, GenerativeParams):
        h = states.h
        return grad_log_joint(theta, V, h), grad_log_q(phi, V, h, weights=weights)
    return deep_grads(theta, phi, V, states, weights=weights)


def _map(executor: Executor | None, fn: Callable, *iterables) -> list:
    if executor is None:
        return list(map(fn, *iterables))
    return list(executor.map(fn, *iterables))


def _sum(containers: Sequence[_P]) -> _P:
    total = containers[0]
    for container in containers[1:]:
        total = total.combine(container, np.add)
    return total


def nvil_step(
    theta,
    phi,
    state: TrainerState,
    batch: Sequence[np.ndarray],
    rngs: Sequence[RngStream],
    config: TrainerConfig,
    executor: Executor | None = None,
) -> NvilStep:
    """Estimate the NVIL gradients for a batch of sequences.

    One recognition sample is drawn per sequence, from that sequence's stream. The generative
    gradient is the sum of grad log p over the batch and never depends on the baseline or on
    the running statistics.

    Args:
        theta: Generative parameters (shallow or deep).
        phi: Recognition parameters matching `theta`.
        state: Trainer state holding the baseline and the running statistics c and v.
        batch: Observed sequences (each T_i × M).
        rngs: One random stream per sequence.
        config: Hyperparameters and variance-reduction switches.
        executor: Optional pool for per-sequence work.

    Returns:
        The gradient estimates, the batch lower bound and the updated state.

    Raises:
        NonFiniteSignalError: If any learning signal value is NaN or infinite.
    """
    if len(rngs) != len(batch):
        raise ValueError("nvil_step needs exactly one random stream per sequence.")
    samples = _map(executor, lambda V, rng: _posterior_terms(theta, phi, V, rng), batch, rngs)
    terms = [sample[1] for sample in samples]
    elbo = float(sum(t.sum() for t in terms))

    signals = [shape_signal(t, config.signal_mode) for t in terms]
    if config.use_baseline:
        signals = [
            s - baseline_forward(state.baseline, V) for s, V in zip(signals, batch, strict=True)
        ]
    stacked = np.concatenate(signals)
    if not np.all(np.isfinite(stacked)):
        raise NonFiniteSignalError(
            f"Learning signal became non-finite at iteration {state.iteration}.",
            iteration=state.iteration,
            values=stacked,
        )
    c, v = update_signal_stats(state.c, state.v, stacked, config.alpha)
    if config.use_centering:
        signals = [s - c for s in signals]
    if config.use_normalization:
        signals = [s / max(1.0, np.sqrt(v)) for s in signals]

    grads = _map(
        executor,
        lambda V, sample, s: _sequence_grads(theta, phi, V, sample[0], s),
        batch,
        samples,
        signals,
    )
    if config.use_baseline:
        grad_baseline = _sum(
            [baseline_grad(state.baseline, V, s) for V, s in zip(batch, signals, strict=True)]
        )
    else:
        grad_baseline = state.baseline.zeros_like()
    return NvilStep(
        grad_theta=_sum([g[0] for g in grads]),
        grad_phi=_sum([g[1] for g in grads]),
        grad_baseline=grad_baseline,
        elbo=elbo,
        num_frames=sum(V.shape[0] for V in batch),
        state=replace(state, c=c, v=v),
        signal=signals,
    )


@dataclass
class TrainResult:
    """Outcome of a training run.

    Attributes:
        spec: Model description.
        theta: Trained generative parameters.
        phi: Trained recognition parameters.
        state: Final trainer state.
        metrics: One record per iteration with columns iter, elbo_per_frame, c, v, seconds.
    """

    spec: ModelSpec
    theta: Any
    phi: Any
    state: TrainerState
    metrics: pd.DataFrame


METRIC_COLUMNS = ["iter", "elbo_per_frame", "c", "v", "seconds"]


def write_metrics(metrics: pd.DataFrame, path: Path | str) -> None:
    """Write metrics as line-delimited JSON records."""
    metrics.to_json(path, orient="records", lines=True)


def read_metrics(path: Path | str) -> pd.DataFrame:
    return pd.read_json(path, orient="records", lines=True)


def smoothed_elbo(metrics: pd.DataFrame, window: int = SMOOTHING_WINDOW) -> pd.Series:
    """Trailing moving average of the per-frame lower bound."""
    return metrics["elbo_per_frame"].rolling(window, min_periods=1).mean()


def check_dataset(spec: ModelSpec, dataset: SequenceBatch) -> None:
    if dataset.likelihood != spec.likelihood:
        raise LikelihoodMismatchError(
            f"The data holds {dataset.likelihood.value} frames but the model expects "
            f"{spec.likelihood.value} frames."
        )
    if dataset.visible_dim != spec.visible_dim:
        raise ShapeMismatchError(
            f"The data has {dataset.visible_dim} values per frame but the model expects "
            f"{spec.visible_dim}."
        )
    if len(dataset) == 0:
        raise ValueError("Cannot train on an empty dataset.")


def train(
    spec: ModelSpec,
    dataset: SequenceBatch,
    config: TrainerConfig,
    rng: RngStream,
    params: ModelParams | None = None,
    state: TrainerState | None = None,
    on_checkpoint: Callable[[ModelSpec, Any, Any, TrainerState], None] | None = None,
    progress: bool = False,
) -> TrainResult:
    """Train a (deep) TSBN with NVIL and RMSprop.

    Iteration k draws its batch from the stream (seed, BATCH_STREAM, k) and the recognition
    sample of batch slot i from (seed, POSTERIOR_STREAM, k, i), so a run is reproducible for a
    fixed seed and does not depend on `config.threads`.

    Args:
        spec: Model description.
        dataset: Training sequences.
        config: Hyperparameters.
        rng: Root random stream of the run.
        params: Starting parameters; drawn with `init_params` when omitted.
        state: Trainer state to resume from.
        on_checkpoint: Called with (spec, theta, phi, state) every `config.checkpoint_every`
            iterations.
        progress: Show a progress bar.

    Returns:
        The trained parameters, final state and per-iteration metrics.
    """
    check_dataset(spec, dataset)
    if config.hmsbn and spec.is_deep:
        raise ValueError("The hidden Markov restriction only applies to shallow models.")
    theta, phi = params if params is not None else init_params(spec, rng.child(INIT_STREAM))
    frozen: frozenset[str] = frozenset()
    if config.hmsbn:
        theta = hmsbn_mask(theta)  # type: ignore[arg-type]
        frozen = HMSBN_BLOCKS
    if state is None:
        baseline = init_baseline(
            spec.visible_dim, config.baseline_hidden, rng.child(BASELINE_STREAM)
        )
        state = TrainerState.initial(theta, phi, baseline)

    batch_size = min(config.batch_size, len(dataset))
    records = []
    started = time.perf_counter()
    logger.info(
        "Training %s on %d sequences for %d iterations", spec, len(dataset), config.max_iterations
    )
    executor = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        for _ in tqdm(range(config.max_iterations), disable=not progress, desc="nvil"):
            k = state.iteration
            chooser = rng.child(BATCH_STREAM).child(k).generator()
            indices = chooser.choice(len(dataset), size=batch_size, replace=False)
            batch = [dataset[int(i)] for i in indices]
            streams = [rng.child(POSTERIOR_STREAM).child(k).child(i) for i in range(batch_size)]

            step = nvil_step(theta, phi, state, batch, streams, config, executor)
            state = step.state
            theta, theta_slots = rmsprop_update(
                theta, step.grad_theta, state.theta_slots, config, frozen
            )
            phi, phi_slots = rmsprop_update(phi, step.grad_phi, state.phi_slots, config)
            baseline, baseline_slots = state.baseline, state.baseline_slots
            if config.use_baseline:
                baseline, baseline_slots = rmsprop_update(
                    baseline, step.grad_baseline, baseline_slots, config
                )
            state = replace(
                state,
                baseline=baseline,
                theta_slots=theta_slots,
                phi_slots=phi_slots,
                baseline_slots=baseline_slots,
                iteration=k + 1,
            )
            records.append(
                {
                    "iter": k,
                    "elbo_per_frame": step.elbo / step.num_frames,
                    "c": state.c,
                    "v": state.v,
                    "seconds": time.perf_counter() - started,
                }
            )
            if (k + 1) % config.log_every == 0:
                recent = [r["elbo_per_frame"] for r in records[-SMOOTHING_WINDOW:]]
                logger.info(
                    "iter %d: elbo/frame %.3f (smoothed %.3f), c %.3f, v %.3f",
                    k + 1,
                    records[-1]["elbo_per_frame"],
                    float(np.mean(recent)),
                    state.c,
                    state.v,
                )
            if on_checkpoint is not None and config.checkpoint_every and (
                (k + 1) % config.checkpoint_every == 0
            ):
                on_checkpoint(spec, theta, phi, state)
    finally:
        if executor is not None:
            executor.shutdown()
    metrics = pd.DataFrame.from_records(records, columns=METRIC_COLUMNS)
    return TrainResult(spec=spec, theta=theta, phi=phi, state=state, metrics=metrics)
