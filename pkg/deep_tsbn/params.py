from __future__ import annotations
import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Any, ClassVar, TypeVar

import numpy as np

from .errors import LikelihoodMismatchError, ShapeMismatchError
from .numeric import RngStream, as_generator

logger = logging.getLogger(__name__)

INIT_WEIGHT_STD = 0.001

_P = TypeVar("_P", bound="ParameterSet")


class Likelihood(Enum):
    """Observation family of the visible frames."""

    BINARY = "binary"
    REAL = "real"
    COUNT = "count"


class LayerKind(Enum):
    """Kind of a hidden layer in a deep model."""

    STOCHASTIC = "stochastic"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class ModelSpec:
    """Static description of a (deep) temporal sigmoid belief network.

    Attributes:
        visible_dim: Number of visible units M per frame.
        layer_dims: Hidden layer sizes J(1), ..., J(L), starting at the layer next to the data.
        layer_kinds: Kind of every hidden layer, same order as `layer_dims`. The top layer is
            always stochastic and all middle layers share one kind. Defaults to all stochastic.
        order: Number of past frames n each conditional sees through its sliding window.
        likelihood: Observation family of the visible frames.
    """

    visible_dim: int
    layer_dims: tuple[int, ...]
    layer_kinds: tuple[LayerKind, ...] = ()
    order: int = 1
    likelihood: Likelihood = Likelihood.BINARY

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        kinds = self.layer_kinds or (LayerKind.STOCHASTIC,) * len(self.layer_dims)
        object.__setattr__(self, "layer_kinds", tuple(LayerKind(k) for k in kinds))
        object.__setattr__(self, "likelihood", Likelihood(self.likelihood))

        if self.visible_dim < 1:
            raise ValueError(f"visible_dim must be positive, got {self.visible_dim}.")
        if not self.layer_dims:
            raise ValueError("A model needs at least one hidden layer.")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError(f"Hidden layer sizes must be positive, got {self.layer_dims}.")
        if len(self.layer_kinds) != len(self.layer_dims):
            raise ValueError("layer_kinds and layer_dims must have the same length.")
        if self.layer_kinds[-1] != LayerKind.STOCHASTIC:
            raise ValueError("The top hidden layer must be stochastic.")
        if len(set(self.layer_kinds[:-1])) > 1:
            raise ValueError("All middle layers must be of the same kind.")
        if self.order < 1:
            raise ValueError(f"order must be at least 1, got {self.order}.")

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims)

    @property
    def is_deep(self) -> bool:
        return self.num_layers > 1

    @property
    def is_deterministic(self) -> bool:
        """True for deep models whose middle layers are deterministic."""
        return self.is_deep and self.layer_kinds[0] == LayerKind.DETERMINISTIC

    def to_dict(self) -> dict[str, Any]:
        return {
            "visible_dim": self.visible_dim,
            "layer_dims": list(self.layer_dims),
            "layer_kinds": [kind.value for kind in self.layer_kinds],
            "order": self.order,
            "likelihood": self.likelihood.value,
        }

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> ModelSpec:
        return cls(
            visible_dim=int(values["visible_dim"]),
            layer_dims=tuple(values["layer_dims"]),
            layer_kinds=tuple(LayerKind(k) for k in values["layer_kinds"]),
            order=int(values["order"]),
            likelihood=Likelihood(values["likelihood"]),
        )


class ParameterSet:
    """Mixin for frozen dataclasses whose leaves are arrays.

    Leaves are addressed by dotted paths (for example `W1` or `layers.0.top_down`), which is how
    optimizers, checkpoints and finite-difference checks walk a container without knowing its
    concrete type.
    """

    BIAS_FIELDS: ClassVar[frozenset[str]] = frozenset()

    def arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        _flatten(self, "", out, set())
        return out

    def bias_names(self) -> set[str]:
        biases: set[str] = set()
        _flatten(self, "", {}, biases)
        return biases

    def with_arrays(self: _P, arrays: Mapping[str, np.ndarray]) -> _P:
        return _rebuild(self, "", arrays)

    def map(self: _P, fn: Callable[[np.ndarray], np.ndarray]) -> _P:
        return self.with_arrays({name: fn(value) for name, value in self.arrays().items()})

    def zeros_like(self: _P) -> _P:
        return self.map(np.zeros_like)

    def combine(self: _P, other: ParameterSet, fn: Callable[[Any, Any], np.ndarray]) -> _P:
        theirs = other.arrays()
        mine = self.arrays()
        return self.with_arrays({name: fn(value, theirs[name]) for name, value in mine.items()})

    def check_finite(self) -> None:
        for name, value in self.arrays().items():
            if not np.all(np.isfinite(value)):
                raise ValueError(f"Parameter block {name} contains non-finite entries.")


def _flatten(node: Any, prefix: str, out: dict[str, np.ndarray], biases: set[str]) -> None:
    if isinstance(node, np.ndarray):
        out[prefix] = node
    elif isinstance(node, ParameterSet):
        for f in fields(node):  # type: ignore[arg-type]
            value = getattr(node, f.name)
            name = f"{prefix}.{f.name}" if prefix else f.name
            if isinstance(value, np.ndarray) and f.name in node.BIAS_FIELDS:
                biases.add(name)
            _flatten(value, name, out, biases)
    elif isinstance(node, tuple):
        for i, item in enumerate(node):
            _flatten(item, f"{prefix}.{i}", out, biases)


def _rebuild(node: Any, prefix: str, arrays: Mapping[str, np.ndarray]) -> Any:
    if isinstance(node, np.ndarray):
        return arrays[prefix]
    if isinstance(node, ParameterSet):
        changes = {}
        for f in fields(node):  # type: ignore[arg-type]
            name = f"{prefix}.{f.name}" if prefix else f.name
            changes[f.name] = _rebuild(getattr(node, f.name), name, arrays)
        return replace(node, **changes)  # type: ignore[type-var]
    if isinstance(node, tuple):
        return tuple(_rebuild(item, f"{prefix}.{i}", arrays) for i, item in enumerate(node))
    return node


def _as_float(value: Any) -> np.ndarray | None:
    return None if value is None else np.asarray(value, dtype=np.float64)


def _check_shape(name: str, array: np.ndarray | None, shape: tuple[int, ...]) -> None:
    if array is None:
        raise ShapeMismatchError(f"{name} is missing; expected shape {shape}.")
    if array.shape != shape:
        raise ShapeMismatchError(f"{name} has shape {array.shape}, expected {shape}.")


def _window_order(name: str, array: np.ndarray, unit_dim: int) -> int:
    if array.ndim != 2 or array.shape[1] % unit_dim or array.shape[1] == 0:
        raise ShapeMismatchError(
            f"{name} has shape {array.shape}; its width must be a positive multiple of {unit_dim}."
        )
    return array.shape[1] // unit_dim


def _coerce_arrays(container: ParameterSet) -> None:
    for f in fields(container):  # type: ignore[arg-type]
        value = getattr(container, f.name)
        if isinstance(value, np.ndarray | list):
            object.__setattr__(container, f.name, _as_float(value))


@dataclass(frozen=True, eq=False)
class GenerativeParams(ParameterSet):
    """Generative parameters θ of a shallow order-n TSBN.

    Window-fed blocks (W1, W3, W4, W4p) are widened to accept the concatenation of the last n
    frames, most recent first.

    Attributes:
        W1: J × nJ hidden-to-hidden transition weights.
        W2: M × J hidden-to-visible weights.
        W3: J × nM visible-history-to-hidden weights.
        W4: M × nM visible-history-to-visible weights.
        b: Hidden biases (J).
        c: Visible biases (M); the mean bias for real-valued data.
        W2p: M × J hidden-to-log-scale weights (real-valued data only).
        W4p: M × nM visible-history-to-log-scale weights (real-valued data only).
        cp: Log-scale biases (real-valued data only).
        likelihood: Observation family.
    """

    W1: np.ndarray
    W2: np.ndarray
    W3: np.ndarray
    W4: np.ndarray
    b: np.ndarray
    c: np.ndarray
    W2p: np.ndarray | None = None
    W4p: np.ndarray | None = None
    cp: np.ndarray | None = None
    likelihood: Likelihood = Likelihood.BINARY

    BIAS_FIELDS: ClassVar[frozenset[str]] = frozenset({"b", "c", "cp"})

    def __post_init__(self):
        _coerce_arrays(self)
        if self.b.ndim != 1 or self.c.ndim != 1:
            raise ShapeMismatchError("Bias vectors b and c must be one-dimensional.")
        J, M = self.hidden_dim, self.visible_dim
        n = _window_order("W1", self.W1, J)
        _check_shape("W1", self.W1, (J, n * J))
        _check_shape("W2", self.W2, (M, J))
        _check_shape("W3", self.W3, (J, n * M))
        _check_shape("W4", self.W4, (M, n * M))
        extras = (self.W2p, self.W4p, self.cp)
        if self.likelihood == Likelihood.REAL:
            _check_shape("W2p", self.W2p, (M, J))
            _check_shape("W4p", self.W4p, (M, n * M))
            _check_shape("cp", self.cp, (M,))
        elif any(extra is not None for extra in extras):
            raise LikelihoodMismatchError(
                f"Log-scale blocks W2p, W4p, cp only exist for real-valued data, "
                f"not for {self.likelihood.value} data."
            )

    @property
    def hidden_dim(self) -> int:
        return self.b.shape[0]

    @property
    def visible_dim(self) -> int:
        return self.c.shape[0]

    @property
    def order(self) -> int:
        return self.W1.shape[1] // self.hidden_dim


@dataclass(frozen=True, eq=False)
class RecognitionParams(ParameterSet):
    """Recognition parameters φ of a shallow order-n TSBN.

    Attributes:
        U1: J × nJ hidden-history weights.
        U2: J × M current-frame weights.
        U3: J × nM visible-history weights.
        d: Hidden biases (J).
    """

    U1: np.ndarray
    U2: np.ndarray
    U3: np.ndarray
    d: np.ndarray

    BIAS_FIELDS: ClassVar[frozenset[str]] = frozenset({"d"})

    def __post_init__(self):
        _coerce_arrays(self)
        if self.d.ndim != 1 or self.U2.ndim != 2:
            raise ShapeMismatchError("d must be a vector and U2 a matrix.")
        J, M = self.hidden_dim, self.visible_dim
        n = _window_order("U1", self.U1, J)
        _check_shape("U1", self.U1, (J, n * J))
        _check_shape("U2", self.U2, (J, M))
        _check_shape("U3", self.U3, (J, n * M))

    @property
    def hidden_dim(self) -> int:
        return self.d.shape[0]

    @property
    def visible_dim(self) -> int:
        return self.U2.shape[1]

    @property
    def order(self) -> int:
        return self.U1.shape[1] // self.hidden_dim


@dataclass(frozen=True, eq=False)
class GenerativeLayer(ParameterSet):
    """Conditional of one layer of a deep generative model.

    The preactivation of layer l at time t is
    `top_down @ x[l+1]_t + recurrent @ window(x[l]) + lagged_below @ window(x[l-1]) + bias`,
    where layer 0 is the visible frame and absent blocks contribute nothing.

    Attributes:
        recurrent: D_l × nD_l weights on the layer's own history.
        bias: Biases (D_l).
        top_down: D_l × D_(l+1) weights from the layer above at the same time step.
        lagged_below: D_l × nD_(l-1) weights on the history of the layer below.
        scale_top_down: Log-scale counterpart of `top_down` (real-valued visible layer only).
        scale_recurrent: Log-scale counterpart of `recurrent` (real-valued visible layer only).
        scale_bias: Log-scale biases (real-valued visible layer only).
    """

    recurrent: np.ndarray
    bias: np.ndarray
    top_down: np.ndarray | None = None
    lagged_below: np.ndarray | None = None
    scale_top_down: np.ndarray | None = None
    scale_recurrent: np.ndarray | None = None
    scale_bias: np.ndarray | None = None

    BIAS_FIELDS: ClassVar[frozenset[str]] = frozenset({"bias", "scale_bias"})

    def __post_init__(self):
        _coerce_arrays(self)

    @property
    def has_scale(self) -> bool:
        return self.scale_bias is not None


@dataclass(frozen=True, eq=False)
class RecognitionLayer(ParameterSet):
    """Recognition conditional of hidden layer l of a deep model.

    The preactivation is
    `up @ x[l-1]_t + recurrent @ window(x[l]) + lagged_below @ window(x[l-1]) + bias`.
    """

    up: np.ndarray
    recurrent: np.ndarray
    bias: np.ndarray
    lagged_below: np.ndarray | None = None

    BIAS_FIELDS: ClassVar[frozenset[str]] = frozenset({"bias"})

    def __post_init__(self):
        _coerce_arrays(self)


@dataclass(frozen=True, eq=False)
class DeepGenerativeParams(ParameterSet):
    """Generative parameters of a deep TSBN.

    Attributes:
        layers: One conditional per layer; index 0 is the visible layer, index L the top layer.
        layer_kinds: Kinds of the hidden layers 1..L.
        likelihood: Observation family of the visible layer.
    """

    layers: tuple[GenerativeLayer, ...]
    layer_kinds: tuple[LayerKind, ...]
    likelihood: Likelihood = Likelihood.BINARY

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "layer_kinds", tuple(self.layer_kinds))
        _validate_deep_generative(self)

    @property
    def dims(self) -> tuple[int, ...]:
        """Sizes of layers 0..L, starting with the visible layer."""
        return tuple(layer.bias.shape[0] for layer in self.layers)

    @property
    def order(self) -> int:
        return self.layers[0].recurrent.shape[1] // self.dims[0]

    @property
    def is_deterministic(self) -> bool:
        return self.layer_kinds[0] == LayerKind.DETERMINISTIC and len(self.layer_kinds) > 1


@dataclass(frozen=True, eq=False)
class DeepRecognitionParams(ParameterSet):
    """Recognition parameters of a deep TSBN.

    Attributes:
        layers: One conditional per hidden layer; index 0 is hidden layer 1.
        layer_kinds: Kinds of the hidden layers 1..L.
    """

    layers: tuple[RecognitionLayer, ...]
    layer_kinds: tuple[LayerKind, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "layer_kinds", tuple(self.layer_kinds))
        _validate_deep_recognition(self)

    @property
    def dims(self) -> tuple[int, ...]:
        """Sizes of layers 0..L; the visible size is read from the first layer's input width."""
        return (self.layers[0].up.shape[1],) + tuple(layer.bias.shape[0] for layer in self.layers)

    @property
    def order(self) -> int:
        return self.layers[0].recurrent.shape[1] // self.layers[0].bias.shape[0]

    @property
    def is_deterministic(self) -> bool:
        return self.layer_kinds[0] == LayerKind.DETERMINISTIC and len(self.layer_kinds) > 1


def _validate_deep_generative(params: DeepGenerativeParams) -> None:
    L = len(params.layers) - 1
    if L < 1 or len(params.layer_kinds) != L:
        raise ShapeMismatchError("Deep parameters need L+1 layers and L hidden layer kinds.")
    dims = params.dims
    n = _window_order("layers.0.recurrent", params.layers[0].recurrent, dims[0])
    for level, layer in enumerate(params.layers):
        name = f"layers.{level}"
        D = dims[level]
        _check_shape(f"{name}.recurrent", layer.recurrent, (D, n * D))
        if level < L:
            _check_shape(f"{name}.top_down", layer.top_down, (D, dims[level + 1]))
        elif layer.top_down is not None:
            raise ShapeMismatchError("The top layer has no layer above it.")
        if level == 0:
            if layer.lagged_below is not None:
                raise ShapeMismatchError("The visible layer has no layer below it.")
        elif layer.lagged_below is not None:
            _check_shape(f"{name}.lagged_below", layer.lagged_below, (D, n * dims[level - 1]))
        elif not (level == L and params.is_deterministic):
            raise ShapeMismatchError(f"{name}.lagged_below is missing.")
        if level == 0 and params.likelihood == Likelihood.REAL:
            _check_shape(f"{name}.scale_top_down", layer.scale_top_down, (D, dims[1]))
            _check_shape(f"{name}.scale_recurrent", layer.scale_recurrent, (D, n * D))
            _check_shape(f"{name}.scale_bias", layer.scale_bias, (D,))
        elif layer.has_scale:
            raise LikelihoodMismatchError(
                "Log-scale blocks only exist on a real-valued visible layer."
            )


def _validate_deep_recognition(params: DeepRecognitionParams) -> None:
    L = len(params.layers)
    if L < 1 or len(params.layer_kinds) != L:
        raise ShapeMismatchError("Deep recognition parameters need one layer per hidden layer.")
    dims = params.dims
    n = _window_order("layers.0.recurrent", params.layers[0].recurrent, dims[1])
    for index, layer in enumerate(params.layers):
        level = index + 1
        name = f"layers.{index}"
        _check_shape(f"{name}.up", layer.up, (dims[level], dims[level - 1]))
        _check_shape(f"{name}.recurrent", layer.recurrent, (dims[level], n * dims[level]))
        if layer.lagged_below is not None:
            expected = (dims[level], n * dims[level - 1])
            _check_shape(f"{name}.lagged_below", layer.lagged_below, expected)
        elif not (level == L and params.is_deterministic):
            raise ShapeMismatchError(f"{name}.lagged_below is missing.")


@dataclass
class Workspace:
    """Per-timestep intermediate quantities of one (or S) hidden-state samples.

    Arrays are time-major (T × D, or S × T × D for batched samples). Entries that do not apply to
    the active likelihood or model depth, or recognition entries when no recognition model is
    given, are None. For deep models psi1, chi1, psi3 and chi3 belong to the top layer.

    Attributes:
        psi1: Hidden prior preactivations (generative, top layer for deep models).
        psi2: Visible preactivations (logits, Gaussian means or softmax logits).
        psi3: Recognition preactivations.
        psi4: Generative preactivations of the middle layers 1..L-1 of a deep model, one array
            per layer, bottom first.
        psi5: Recognition preactivations of the same middle layers.
        chi1: Hidden prior residuals h - sigmoid(psi1).
        chi2: Visible residuals v - sigmoid(psi2) for binary data.
        chi3: Recognition residuals h - sigmoid(psi3).
        chi4: Gaussian mean residuals (v - mu) exp(-2 tau).
        chi5: Gaussian log-scale residuals (v - mu)^2 exp(-2 tau) - 1.
        chi6: Count residuals v - y sum(v).
        mu: Gaussian means.
        tau: Gaussian log standard deviations.
        y: Softmax probabilities for count data.
        Q: Derivatives of log p(V, z) with respect to the generative states h^g of every
            deterministic middle layer, accumulated backwards through time.
    """

    psi1: np.ndarray | None = None
    psi2: np.ndarray | None = None
    psi3: np.ndarray | None = None
    psi4: tuple[np.ndarray, ...] | None = None
    psi5: tuple[np.ndarray, ...] | None = None
    chi1: np.ndarray | None = None
    chi2: np.ndarray | None = None
    chi3: np.ndarray | None = None
    chi4: np.ndarray | None = None
    chi5: np.ndarray | None = None
    chi6: np.ndarray | None = None
    mu: np.ndarray | None = None
    tau: np.ndarray | None = None
    y: np.ndarray | None = None
    Q: tuple[np.ndarray, ...] | None = None


ModelParams = tuple[GenerativeParams, RecognitionParams] | tuple[
    DeepGenerativeParams, DeepRecognitionParams
]


def zero_params(spec: ModelSpec) -> ModelParams:
    """Build all-zero generative and recognition containers shaped by `spec`."""
    n, M = spec.order, spec.visible_dim
    if not spec.is_deep:
        J = spec.layer_dims[0]
        real = spec.likelihood == Likelihood.REAL
        theta = GenerativeParams(
            W1=np.zeros((J, n * J)),
            W2=np.zeros((M, J)),
            W3=np.zeros((J, n * M)),
            W4=np.zeros((M, n * M)),
            b=np.zeros(J),
            c=np.zeros(M),
            W2p=np.zeros((M, J)) if real else None,
            W4p=np.zeros((M, n * M)) if real else None,
            cp=np.zeros(M) if real else None,
            likelihood=spec.likelihood,
        )
        phi = RecognitionParams(
            U1=np.zeros((J, n * J)), U2=np.zeros((J, M)), U3=np.zeros((J, n * M)), d=np.zeros(J)
        )
        return theta, phi

    dims = (M,) + spec.layer_dims
    L = spec.num_layers
    deterministic = spec.is_deterministic
    generative_layers = []
    for level, D in enumerate(dims):
        real_visible = level == 0 and spec.likelihood == Likelihood.REAL
        generative_layers.append(
            GenerativeLayer(
                recurrent=np.zeros((D, n * D)),
                bias=np.zeros(D),
                top_down=np.zeros((D, dims[level + 1])) if level < L else None,
                lagged_below=(
                    np.zeros((D, n * dims[level - 1]))
                    if level > 0 and not (level == L and deterministic)
                    else None
                ),
                scale_top_down=np.zeros((D, dims[1])) if real_visible else None,
                scale_recurrent=np.zeros((D, n * D)) if real_visible else None,
                scale_bias=np.zeros(D) if real_visible else None,
            )
        )
    recognition_layers = [
        RecognitionLayer(
            up=np.zeros((dims[level], dims[level - 1])),
            recurrent=np.zeros((dims[level], n * dims[level])),
            bias=np.zeros(dims[level]),
            lagged_below=(
                np.zeros((dims[level], n * dims[level - 1]))
                if not (level == L and deterministic)
                else None
            ),
        )
        for level in range(1, L + 1)
    ]
    theta = DeepGenerativeParams(
        layers=tuple(generative_layers), layer_kinds=spec.layer_kinds, likelihood=spec.likelihood
    )
    phi = DeepRecognitionParams(layers=tuple(recognition_layers), layer_kinds=spec.layer_kinds)
    return theta, phi


def random_weights(
    template: _P, generator: np.random.Generator, std: float = INIT_WEIGHT_STD
) -> _P:
    """Draw every weight entry i.i.d. N(0, std^2) and set every bias entry to exactly 0."""
    biases = template.bias_names()
    drawn = {
        name: np.zeros_like(value) if name in biases else generator.normal(0.0, std, value.shape)
        for name, value in template.arrays().items()
    }
    return template.with_arrays(drawn)


def init_params(spec: ModelSpec, rng: RngStream | np.random.Generator) -> ModelParams:
    """Initialize generative and recognition parameters for `spec`.

    Weights are drawn from N(0, 0.001^2) and biases start at zero. Generative blocks are drawn
    before recognition blocks, each in field order, so equal seeds give bit-identical parameters.

    Args:
        spec: The model description.
        rng: Random stream (or live generator) to draw the weights from.

    Returns:
        The pair (theta, phi).
    """
    generator = as_generator(rng)
    theta, phi = zero_params(spec)
    theta = random_weights(theta, generator)
    phi = random_weights(phi, generator)
    logger.debug("Initialized %s", spec)
    return theta, phi  # type: ignore[return-value]


def hmsbn_mask(theta: GenerativeParams) -> GenerativeParams:
    """Return `theta` with the visible-history blocks zeroed (the hidden Markov SBN)."""
    return replace(
        theta,
        W3=np.zeros_like(theta.W3),
        W4=np.zeros_like(theta.W4),
        W4p=None if theta.W4p is None else np.zeros_like(theta.W4p),
    )


HMSBN_BLOCKS = frozenset({"W3", "W4", "W4p"})


def parameter_symbols(spec: ModelSpec) -> dict[str, dict[str, str]]:
    """Map equation symbols to container field paths.

    Shallow models use W1..W4, b, c (plus W2', W4', c' for real data) and U1..U3, d. Two-layer
    deep models use W1..W7, b1..b3 (plus W5', W7', b3' for real data) and U1..U6, c1, c2; W3 and
    U3 do not exist in the deterministic variant.

    Raises:
        ValueError: If the model has more than two hidden layers, where no symbol naming exists.
    """
    real = spec.likelihood == Likelihood.REAL
    if not spec.is_deep:
        generative = {s: s for s in ("W1", "W2", "W3", "W4", "b", "c")}
        if real:
            generative.update({"W2'": "W2p", "W4'": "W4p", "c'": "cp"})
        recognition = {s: s for s in ("U1", "U2", "U3", "d")}
        return {"generative": generative, "recognition": recognition}

    if spec.num_layers != 2:
        raise ValueError("Symbol names are only defined for models with at most two hidden layers.")
    generative = {
        "W1": "layers.2.recurrent",
        "W3": "layers.2.lagged_below",
        "b1": "layers.2.bias",
        "W2": "layers.1.top_down",
        "W4": "layers.1.recurrent",
        "W6": "layers.1.lagged_below",
        "b2": "layers.1.bias",
        "W5": "layers.0.top_down",
        "W7": "layers.0.recurrent",
        "b3": "layers.0.bias",
    }
    recognition = {
        "U5": "layers.0.up",
        "U4": "layers.0.recurrent",
        "U6": "layers.0.lagged_below",
        "c2": "layers.0.bias",
        "U2": "layers.1.up",
        "U1": "layers.1.recurrent",
        "U3": "layers.1.lagged_below",
        "c1": "layers.1.bias",
    }
    if spec.is_deterministic:
        del generative["W3"]
        del recognition["U3"]
    if real:
        generative.update(
            {
                "W5'": "layers.0.scale_top_down",
                "W7'": "layers.0.scale_recurrent",
                "b3'": "layers.0.scale_bias",
            }
        )
    return {"generative": generative, "recognition": recognition}


def finite_difference_gradient(
    fn: Callable[[_P], float], params: _P, step: float = 1e-5
) -> _P:
    """Central-difference gradient of a scalar function with respect to every parameter entry.

    Args:
        fn: Scalar function of a parameter container.
        params: The point at which to differentiate.
        step: Perturbation applied in each direction.

    Returns:
        A container shaped like `params` holding (fn(x + step) - fn(x - step)) / (2 step).
    """
    base = params.arrays()
    gradient = {name: np.zeros_like(value) for name, value in base.items()}
    for name, value in base.items():
        for index in np.ndindex(value.shape):
            shifted = value.copy()
            shifted[index] = value[index] + step
            f_plus = fn(params.with_arrays({**base, name: shifted}))
            shifted[index] = value[index] - step
            f_minus = fn(params.with_arrays({**base, name: shifted.copy()}))
            gradient[name][index] = (f_plus - f_minus) / (2.0 * step)
    return params.with_arrays(gradient)
