"""Numerically stable kernels and reproducible random streams.

All computation is carried out in double precision. The kernels accept scalars or arrays and
broadcast like their numpy counterparts.
"""

from __future__ import annotations
from dataclasses import dataclass

import numpy as np
from scipy import special

MAX_UINT64 = 2**64 - 1


def sigmoid(x):
    """The logistic function 1 / (1 + exp(-x)), saturating instead of overflowing."""
    return special.expit(np.asarray(x, dtype=np.float64))


def softplus(x):
    """log(1 + exp(x)) in the stable form max(x, 0) + log1p(exp(-|x|)).

    Examples:
        >>> float(softplus(0.0))  # doctest: +ELLIPSIS
        0.693147...
        >>> float(softplus(-1000.0))
        0.0
        >>> float(softplus(1000.0))
        1000.0
    """
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softmax(logits, axis: int = -1):
    """Normalized exponentials along `axis`; invariant to adding a constant to the logits."""
    return special.softmax(np.asarray(logits, dtype=np.float64), axis=axis)


def logsumexp(logits, axis: int = -1):
    return special.logsumexp(np.asarray(logits, dtype=np.float64), axis=axis)


def bernoulli_logpmf(x, psi):
    """Log-probability of the bit `x` under a Bernoulli distribution with logit `psi`.

    Equals psi * x - softplus(psi), which is log(sigmoid(psi)) for x = 1 and
    log(sigmoid(-psi)) for x = 0.
    """
    psi = np.asarray(psi, dtype=np.float64)
    return psi * x - softplus(psi)


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_derivative(x):
    """Derivative of the rectifier, taken to be 0 at exactly 0."""
    return (np.asarray(x) > 0.0).astype(np.float64)


@dataclass(frozen=True)
class RngStream:
    """A reproducible, splittable random stream.

    The pair (seed, stream_id) fully determines the draw sequence. Streams are backed by the
    counter-based Philox generator keyed through a `numpy.random.SeedSequence`, so distinct
    stream ids give independent streams and every call to `generator()` replays the stream from
    its start.

    Attributes:
        seed: The 64-bit root seed of a run.
        stream_id: The 64-bit index of this substream.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, int | np.integer) or not 0 <= int(value) <= MAX_UINT64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value!r}.")

    def generator(self) -> np.random.Generator:
        """Return a fresh generator positioned at the start of this stream."""
        seed_sequence = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(seed_sequence))

    def child(self, index: int) -> RngStream:
        """Derive the substream `index` of this stream.

        The derived stream id depends only on (seed, stream_id, index).
        """
        seed_sequence = np.random.SeedSequence(
            int(self.seed), spawn_key=(int(self.stream_id), int(index))
        )
        derived = int(seed_sequence.generate_state(1, dtype=np.uint64)[0])
        return RngStream(seed=int(self.seed), stream_id=derived)


def as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    """Accept either a stream description or a live generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"Expected an RngStream or numpy Generator, got {type(rng).__name__}.")


def bernoulli_draw(probabilities, generator: np.random.Generator) -> np.ndarray:
    """Sample bits: a unit fires iff its uniform draw is strictly below its probability."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    return (generator.random(probabilities.shape) < probabilities).astype(np.float64)
