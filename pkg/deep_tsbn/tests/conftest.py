"""
Shared fixtures. Models are tiny so that gradients can be checked against finite differences and
lower bounds against exhaustive enumeration of the hidden states.
"""

import numpy as np
import pytest

from deep_tsbn.data import SequenceBatch
from deep_tsbn.params import LayerKind, Likelihood, ModelSpec, zero_params


@pytest.fixture
def make_model():
    """Factory for (theta, phi) with every array entry drawn from N(0, scale^2)."""

    def make(spec: ModelSpec, seed: int = 0, scale: float = 0.5):
        generator = np.random.default_rng(seed)
        theta, phi = zero_params(spec)
        theta = theta.map(lambda a: generator.normal(0.0, scale, a.shape))
        phi = phi.map(lambda a: generator.normal(0.0, scale, a.shape))
        return theta, phi

    return make


@pytest.fixture
def make_sequence():
    """Factory for a random T × M sequence of the given observation family."""

    def make(likelihood: Likelihood, T: int, M: int, seed: int = 0) -> np.ndarray:
        generator = np.random.default_rng(seed)
        if likelihood == Likelihood.BINARY:
            return (generator.random((T, M)) < 0.5).astype(np.float64)
        if likelihood == Likelihood.REAL:
            return generator.normal(0.0, 1.0, (T, M))
        return generator.poisson(2.0, (T, M)).astype(np.float64)

    return make


@pytest.fixture
def make_batch(make_sequence):
    """Factory for a SequenceBatch of `count` sequences of length T."""

    def make(likelihood: Likelihood, count: int, T: int, M: int, seed: int = 0):
        frames = [make_sequence(likelihood, T, M, seed=seed + i) for i in range(count)]
        return SequenceBatch(frames, likelihood, M)

    return make


@pytest.fixture
def shallow_spec():
    return ModelSpec(visible_dim=3, layer_dims=(2,), order=1, likelihood=Likelihood.BINARY)


@pytest.fixture
def stochastic_deep_spec():
    return ModelSpec(visible_dim=2, layer_dims=(2, 2), order=1, likelihood=Likelihood.BINARY)


@pytest.fixture
def deterministic_deep_spec():
    return ModelSpec(
        visible_dim=2,
        layer_dims=(2, 2),
        layer_kinds=(LayerKind.DETERMINISTIC, LayerKind.STOCHASTIC),
        order=1,
        likelihood=Likelihood.BINARY,
    )
