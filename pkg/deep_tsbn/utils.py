from .errors import ConfigError
from .params import LayerKind, Likelihood, ModelSpec

TRUE_STRINGS = frozenset({"1", "true", "yes", "on"})
FALSE_STRINGS = frozenset({"0", "false", "no", "off"})


def value_to_bool(value: str | bool) -> bool:
    """Convert a string flag value to a boolean.

    Args:
        value: One of 1/0, true/false, yes/no, on/off (any case), or a boolean.

    Returns:
        The boolean value.

    Examples:
        >>> value_to_bool("Yes")
        True
        >>> value_to_bool("off")
        False
    """
    if isinstance(value, bool):
        return value
    lowered = value.strip().lower()
    if lowered in TRUE_STRINGS:
        return True
    if lowered in FALSE_STRINGS:
        return False
    raise ConfigError(f"Cannot interpret {value!r} as a boolean.")


def parse_layer_dims(value: str) -> tuple[int, ...]:
    """Parse hidden layer sizes written as "25" or "25-25", listed from the data upward.

    Examples:
        >>> parse_layer_dims("25-10")
        (25, 10)
    """
    try:
        dims = tuple(int(part) for part in value.split("-"))
    except ValueError as error:
        raise ConfigError(f"Invalid hidden layer sizes {value!r}.") from error
    if any(d < 1 for d in dims):
        raise ConfigError(f"Hidden layer sizes must be positive, got {value!r}.")
    return dims


def parse_spec_string(value: str, visible_dim: int) -> ModelSpec:
    """Build a ModelSpec from a compact description such as "J=20,order=2,binary".

    Items are separated by commas. `J` gives the hidden layer sizes (see `parse_layer_dims`),
    `order` the window length and `kind` the kind of the middle layers of a deep model; a bare
    likelihood name (binary, real or count) selects the observation family. The number of
    visible units comes from the data.

    Args:
        value: The description.
        visible_dim: Number of visible units M.

    Returns:
        The model spec.

    Examples:
        >>> spec = parse_spec_string("J=25-25,order=1,count,kind=deterministic", 100)
        >>> spec.layer_dims, spec.likelihood.value, spec.layer_kinds[0].value
        ((25, 25), 'count', 'deterministic')
    """
    dims: tuple[int, ...] | None = None
    order = 1
    likelihood = Likelihood.BINARY
    kind = LayerKind.STOCHASTIC
    for item in (part.strip() for part in value.split(",")):
        if not item:
            continue
        key, sep, raw = (s.strip() for s in item.partition("="))
        if not sep:
            try:
                likelihood = Likelihood(key.lower())
            except ValueError as error:
                raise ConfigError(f"Unknown item {item!r} in model spec {value!r}.") from error
        elif key == "J":
            dims = parse_layer_dims(raw)
        elif key == "order":
            try:
                order = int(raw)
            except ValueError as error:
                raise ConfigError(f"order must be an integer, got {raw!r}.") from error
        elif key == "kind":
            try:
                kind = LayerKind(raw.lower())
            except ValueError as error:
                raise ConfigError(f"Unknown layer kind {raw!r}.") from error
        else:
            raise ConfigError(f"Unknown key {key!r} in model spec {value!r}.")
    if dims is None:
        raise ConfigError(f"Model spec {value!r} does not give the hidden layer sizes (J=...).")
    kinds = (kind,) * (len(dims) - 1) + (LayerKind.STOCHASTIC,)
    try:
        return ModelSpec(
            visible_dim=visible_dim,
            layer_dims=dims,
            layer_kinds=kinds,
            order=order,
            likelihood=likelihood,
        )
    except ValueError as error:
        raise ConfigError(f"Invalid model spec {value!r}: {error}") from error


def format_spec_string(spec: ModelSpec) -> str:
    """Inverse of `parse_spec_string` (the visible dimension is not part of the string).

    Examples:
        >>> format_spec_string(parse_spec_string("J=20,order=2,binary", 900))
        'J=20,order=2,binary'
    """
    items = [
        "J=" + "-".join(str(d) for d in spec.layer_dims),
        f"order={spec.order}",
        spec.likelihood.value,
    ]
    if spec.is_deep and spec.layer_kinds[0] != LayerKind.STOCHASTIC:
        items.append(f"kind={spec.layer_kinds[0].value}")
    return ",".join(items)
