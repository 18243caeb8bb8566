import numpy as np
import pytest

from ..errors import LikelihoodMismatchError, ShapeMismatchError
from ..numeric import RngStream
from ..params import (
    HMSBN_BLOCKS,
    GenerativeParams,
    LayerKind,
    Likelihood,
    ModelSpec,
    finite_difference_gradient,
    hmsbn_mask,
    init_params,
    parameter_symbols,
    zero_params,
)


def test_model_spec_defaults():
    spec = ModelSpec(visible_dim=5, layer_dims=(4, 3))
    assert spec.layer_kinds == (LayerKind.STOCHASTIC, LayerKind.STOCHASTIC)
    assert spec.is_deep
    assert not spec.is_deterministic
    assert spec.num_layers == 2


def test_model_spec_validation():
    with pytest.raises(ValueError):
        _ = ModelSpec(visible_dim=5, layer_dims=())
    with pytest.raises(ValueError):
        _ = ModelSpec(visible_dim=0, layer_dims=(3,))
    with pytest.raises(ValueError):
        _ = ModelSpec(visible_dim=5, layer_dims=(3,), order=0)
    with pytest.raises(ValueError):
        _ = ModelSpec(
            visible_dim=5, layer_dims=(3, 2), layer_kinds=("stochastic", "deterministic")
        )
    with pytest.raises(ValueError):
        _ = ModelSpec(
            visible_dim=5,
            layer_dims=(3, 3, 2),
            layer_kinds=("deterministic", "stochastic", "stochastic"),
        )


def test_model_spec_dict_round_trip():
    spec = ModelSpec(
        visible_dim=7,
        layer_dims=(4, 3),
        layer_kinds=(LayerKind.DETERMINISTIC, LayerKind.STOCHASTIC),
        order=2,
        likelihood=Likelihood.REAL,
    )
    assert ModelSpec.from_dict(spec.to_dict()) == spec


def test_init_biases_are_zero_and_shapes_follow_spec():
    spec = ModelSpec(visible_dim=900, layer_dims=(100,), likelihood=Likelihood.REAL)
    theta, phi = init_params(spec, RngStream(0))
    assert theta.W2.shape == (900, 100)
    assert theta.W4p is not None and theta.W4p.shape == (900, 900)
    for container in (theta, phi):
        arrays = container.arrays()
        for name in container.bias_names():
            np.testing.assert_array_equal(arrays[name], 0.0)


def test_init_weight_statistics():
    spec = ModelSpec(visible_dim=700, layer_dims=(300,))
    theta, phi = init_params(spec, RngStream(1))
    pooled = np.concatenate(
        [
            value.ravel()
            for container in (theta, phi)
            for name, value in container.arrays().items()
            if name not in container.bias_names()
        ]
    )
    assert abs(pooled.mean()) < 1e-5
    assert abs(pooled.std() - 1e-3) < 1e-5


def test_init_is_reproducible():
    spec = ModelSpec(visible_dim=6, layer_dims=(4, 3), order=2)
    first = init_params(spec, RngStream(5))
    second = init_params(spec, RngStream(5))
    other = init_params(spec, RngStream(6))
    for a, b, c in zip(first, second, other, strict=True):
        for name, value in a.arrays().items():
            np.testing.assert_array_equal(value, b.arrays()[name])
        assert any(
            not np.array_equal(value, c.arrays()[name])
            for name, value in a.arrays().items()
            if name not in a.bias_names()
        )


def test_generative_params_shape_checks():
    theta, _ = zero_params(ModelSpec(visible_dim=3, layer_dims=(2,), order=2))
    with pytest.raises(ShapeMismatchError):
        _ = GenerativeParams(
            W1=theta.W1, W2=np.zeros((3, 3)), W3=theta.W3, W4=theta.W4, b=theta.b, c=theta.c
        )
    with pytest.raises(ShapeMismatchError):
        _ = GenerativeParams(
            W1=theta.W1, W2=theta.W2, W3=np.zeros((2, 3)), W4=theta.W4, b=theta.b, c=theta.c
        )


def test_generative_params_likelihood_checks():
    theta, _ = zero_params(ModelSpec(visible_dim=3, layer_dims=(2,)))
    with pytest.raises(LikelihoodMismatchError):
        _ = GenerativeParams(
            W1=theta.W1,
            W2=theta.W2,
            W3=theta.W3,
            W4=theta.W4,
            b=theta.b,
            c=theta.c,
            cp=np.zeros(3),
        )
    with pytest.raises(ShapeMismatchError):
        _ = GenerativeParams(
            W1=theta.W1,
            W2=theta.W2,
            W3=theta.W3,
            W4=theta.W4,
            b=theta.b,
            c=theta.c,
            likelihood=Likelihood.REAL,
        )


def test_deterministic_top_layer_has_no_lagged_below():
    spec = ModelSpec(
        visible_dim=4,
        layer_dims=(3, 2),
        layer_kinds=(LayerKind.DETERMINISTIC, LayerKind.STOCHASTIC),
    )
    theta, phi = zero_params(spec)
    assert theta.layers[2].lagged_below is None
    assert phi.layers[1].lagged_below is None
    assert theta.is_deterministic and phi.is_deterministic
    assert theta.dims == (4, 3, 2)
    assert phi.dims == (4, 3, 2)


def test_hmsbn_mask():
    spec = ModelSpec(visible_dim=3, layer_dims=(2,), likelihood=Likelihood.REAL)
    theta, _ = init_params(spec, RngStream(0))
    masked = hmsbn_mask(theta)
    arrays = masked.arrays()
    for name in HMSBN_BLOCKS:
        np.testing.assert_array_equal(arrays[name], 0.0)
    np.testing.assert_array_equal(masked.W1, theta.W1)


@pytest.mark.parametrize("likelihood", list(Likelihood))
@pytest.mark.parametrize(
    "layer_dims, layer_kinds",
    [
        ((3,), ()),
        ((3, 2), (LayerKind.STOCHASTIC, LayerKind.STOCHASTIC)),
        ((3, 2), (LayerKind.DETERMINISTIC, LayerKind.STOCHASTIC)),
    ],
)
def test_parameter_symbols_cover_every_block(likelihood, layer_dims, layer_kinds):
    spec = ModelSpec(
        visible_dim=4, layer_dims=layer_dims, layer_kinds=layer_kinds, likelihood=likelihood
    )
    theta, phi = zero_params(spec)
    symbols = parameter_symbols(spec)
    for key, container in (("generative", theta), ("recognition", phi)):
        paths = list(symbols[key].values())
        assert len(set(paths)) == len(paths)
        assert set(paths) == set(container.arrays())


def test_parameter_symbols_reject_three_layers():
    with pytest.raises(ValueError):
        _ = parameter_symbols(ModelSpec(visible_dim=4, layer_dims=(3, 3, 2)))


def test_bias_names():
    theta, phi = zero_params(ModelSpec(visible_dim=4, layer_dims=(3, 2)))
    assert theta.bias_names() == {"layers.0.bias", "layers.1.bias", "layers.2.bias"}
    assert phi.bias_names() == {"layers.0.bias", "layers.1.bias"}


def test_check_finite():
    theta, _ = zero_params(ModelSpec(visible_dim=2, layer_dims=(2,)))
    theta.check_finite()
    broken = theta.with_arrays({**theta.arrays(), "c": np.array([0.0, np.nan])})
    with pytest.raises(ValueError):
        broken.check_finite()


def test_finite_difference_gradient_of_quadratic():
    theta, _ = zero_params(ModelSpec(visible_dim=2, layer_dims=(3,)))
    theta = theta.map(lambda a: np.arange(a.size, dtype=np.float64).reshape(a.shape) / 10.0)

    def objective(params):
        return sum(0.5 * float(np.sum(value**2)) for value in params.arrays().values())

    gradient = finite_difference_gradient(objective, theta)
    for name, value in theta.arrays().items():
        np.testing.assert_allclose(gradient.arrays()[name], value, atol=1e-8)
