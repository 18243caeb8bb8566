import pytest

from ..errors import ConfigError
from ..params import LayerKind, Likelihood
from ..utils import format_spec_string, parse_layer_dims, parse_spec_string, value_to_bool


@pytest.mark.parametrize(
    "value, expected",
    [
        ("1", True),
        ("TRUE", True),
        (" yes ", True),
        ("on", True),
        (True, True),
        ("0", False),
        ("false", False),
        ("No", False),
        ("off", False),
        (False, False),
    ],
)
def test_value_to_bool(value, expected):
    assert value_to_bool(value) is expected


def test_value_to_bool_rejects_other_strings():
    with pytest.raises(ConfigError):
        _ = value_to_bool("maybe")


def test_parse_layer_dims():
    assert parse_layer_dims("100") == (100,)
    assert parse_layer_dims("25-25") == (25, 25)
    for bad in ("", "25-", "a", "0", "10--2"):
        with pytest.raises(ConfigError):
            _ = parse_layer_dims(bad)


def test_parse_spec_string():
    spec = parse_spec_string("J=20,order=2,binary", 900)
    assert spec.visible_dim == 900
    assert spec.layer_dims == (20,)
    assert spec.order == 2
    assert spec.likelihood == Likelihood.BINARY
    assert not spec.is_deep

    spec = parse_spec_string(" J = 30-20 , REAL ", 49)
    assert spec.layer_dims == (30, 20)
    assert spec.order == 1
    assert spec.likelihood == Likelihood.REAL
    assert spec.layer_kinds == (LayerKind.STOCHASTIC, LayerKind.STOCHASTIC)

    spec = parse_spec_string("J=25-25-25,count,kind=deterministic", 100)
    assert spec.layer_kinds == (
        LayerKind.DETERMINISTIC,
        LayerKind.DETERMINISTIC,
        LayerKind.STOCHASTIC,
    )


@pytest.mark.parametrize(
    "value",
    [
        "order=2,binary",
        "J=20,poisson",
        "J=20,depth=3",
        "J=20,order=two",
        "J=20,kind=fuzzy",
        "J=20,order=0",
    ],
)
def test_parse_spec_string_errors(value):
    with pytest.raises(ConfigError):
        _ = parse_spec_string(value, 10)


@pytest.mark.parametrize(
    "value",
    [
        "J=100,order=1,binary",
        "J=20,order=2,real",
        "J=25-25,order=1,count",
        "J=50-25,order=1,binary,kind=deterministic",
    ],
)
def test_format_spec_string_inverts_parsing(value):
    assert format_spec_string(parse_spec_string(value, 9)) == value
