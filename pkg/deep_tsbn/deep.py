"""Deep temporal sigmoid belief networks.

Layers are numbered from the data upward: layer 0 is the visible frame and layer L the top
stochastic layer. In the stochastic variant every hidden layer holds bits. In the deterministic
variant the middle layers 1..L-1 are rectified linear functions of their inputs, computed once
from the top-layer samples (generative states h^g) and once from the data alone (recognition
states h^r); only the top layer is random, and gradients reach the middle-layer weights through
back-propagation through time.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass

import numpy as np

from .data import lagged_window, stack_windows
from .errors import ShapeMismatchError
from .numeric import (
    RngStream,
    as_generator,
    bernoulli_draw,
    bernoulli_logpmf,
    relu,
    relu_derivative,
    sigmoid,
)
from .params import (
    DeepGenerativeParams,
    DeepRecognitionParams,
    GenerativeLayer,
    LayerKind,
    Likelihood,
    RecognitionLayer,
    Workspace,
)
from .shallow import (
    VisibleParams,
    draw_visible,
    make_visible_params,
    set_visible_entries,
    visible_log_likelihood,
    visible_residuals,
)

logger = logging.getLogger(__name__)


@dataclass
class DeepStates:
    """Hidden trajectories of a deep model.

    Attributes:
        layers: One T × D_l array per hidden layer 1..L. Stochastic layers hold bits;
            deterministic layers hold nonnegative reals (h^g when drawn from the generative
            model, h^r when drawn from the recognition model).
        log_q: Recognition log-probability over the stochastic layers; None for fantasy samples.
        log_q_terms: Per-timestep recognition log-probabilities; None for fantasy samples.
    """

    layers: tuple[np.ndarray, ...]
    log_q: float | None = None
    log_q_terms: np.ndarray | None = None

    @property
    def top(self) -> np.ndarray:
        """Samples of the top stochastic layer."""
        return self.layers[-1]


def _stochastic_levels(kinds: tuple[LayerKind, ...]) -> list[int]:
    return [level for level, kind in enumerate(kinds, start=1) if kind == LayerKind.STOCHASTIC]


def _check_data(theta_or_phi: DeepGenerativeParams | DeepRecognitionParams, V) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    M = theta_or_phi.dims[0]
    if V.ndim != 2 or V.shape[1] != M:
        raise ShapeMismatchError(f"V has shape {V.shape}; expected (T, {M}).")
    return V


def _check_states(dims: tuple[int, ...], T: int, layers) -> tuple[np.ndarray, ...]:
    layers = tuple(np.asarray(x, dtype=np.float64) for x in layers)
    if len(layers) != len(dims) - 1:
        raise ShapeMismatchError(f"Expected {len(dims) - 1} hidden layers, got {len(layers)}.")
    for level, x in enumerate(layers, start=1):
        if x.shape != (T, dims[level]):
            raise ShapeMismatchError(
                f"Hidden layer {level} has shape {x.shape}, expected ({T}, {dims[level]})."
            )
    return layers


def _require_deterministic(params: DeepGenerativeParams | DeepRecognitionParams) -> None:
    if not params.is_deterministic:
        raise ValueError("Deterministic recursions need a model with deterministic middle layers.")
    top = params.layers[-1]
    if top.lagged_below is not None and np.any(top.lagged_below != 0.0):
        raise ValueError(
            "The top layer may not read the history of a deterministic layer; "
            "its lagged_below block must be absent or zero."
        )


def _generative_preact(layer: GenerativeLayer, above, own_window, below_window) -> np.ndarray:
    preact = own_window @ layer.recurrent.T + layer.bias
    if layer.top_down is not None:
        preact = preact + above @ layer.top_down.T
    if layer.lagged_below is not None:
        preact = preact + below_window @ layer.lagged_below.T
    return preact


def _recognition_preact(layer: RecognitionLayer, below, own_window, below_window) -> np.ndarray:
    preact = below @ layer.up.T + own_window @ layer.recurrent.T + layer.bias
    if layer.lagged_below is not None:
        preact = preact + below_window @ layer.lagged_below.T
    return preact


def _visible_params(theta: DeepGenerativeParams, first_hidden, v_window) -> VisibleParams:
    visible = theta.layers[0]
    psi = first_hidden @ visible.top_down.T  # type: ignore[union-attr]
    psi = psi + v_window @ visible.recurrent.T + visible.bias
    tau = None
    if theta.likelihood == Likelihood.REAL:
        tau = (
            first_hidden @ visible.scale_top_down.T  # type: ignore[union-attr]
            + v_window @ visible.scale_recurrent.T  # type: ignore[union-attr]
            + visible.scale_bias
        )
    return make_visible_params(theta.likelihood, psi, tau)


def deep_sample(
    theta: DeepGenerativeParams,
    T: int,
    rng: RngStream | np.random.Generator,
    counts_per_frame: int = 1,
) -> tuple[np.ndarray, DeepStates]:
    """Ancestral sampling from a deep model, top-down within each step and left to right in time.

    Returns:
        The pair (V, states) with V of shape (T, M).
    """
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}.")
    generator = as_generator(rng)
    n, dims, L = theta.order, theta.dims, len(theta.dims) - 1
    xs = [np.zeros((T, D)) for D in dims]
    for t in range(T):
        for level in range(L, 0, -1):
            layer = theta.layers[level]
            preact = _generative_preact(
                layer,
                xs[level + 1][t] if level < L else None,
                lagged_window(xs[level], t, n),
                lagged_window(xs[level - 1], t, n),
            )
            if theta.layer_kinds[level - 1] == LayerKind.STOCHASTIC:
                xs[level][t] = bernoulli_draw(sigmoid(preact), generator)
            else:
                xs[level][t] = relu(preact)
        vis = _visible_params(theta, xs[1][t], lagged_window(xs[0], t, n))
        xs[0][t] = draw_visible(vis, generator, counts_per_frame)
    return xs[0], DeepStates(layers=tuple(xs[1:]))


def deep_sample_posterior(
    phi: DeepRecognitionParams, V, rng: RngStream | np.random.Generator
) -> DeepStates:
    """Sample all hidden layers from the recognition model, bottom-up within each step.

    Deterministic middle layers are computed from the data; log_q covers the stochastic layers.
    """
    V = _check_data(phi, V)
    generator = as_generator(rng)
    n, dims, T = phi.order, phi.dims, V.shape[0]
    xs = [V] + [np.zeros((T, D)) for D in dims[1:]]
    terms = np.zeros(T)
    for t in range(T):
        for index, layer in enumerate(phi.layers):
            level = index + 1
            preact = _recognition_preact(
                layer,
                xs[level - 1][t],
                lagged_window(xs[level], t, n),
                lagged_window(xs[level - 1], t, n),
            )
            if phi.layer_kinds[index] == LayerKind.STOCHASTIC:
                xs[level][t] = bernoulli_draw(sigmoid(preact), generator)
                terms[t] += np.sum(bernoulli_logpmf(xs[level][t], preact))
            else:
                xs[level][t] = relu(preact)
    return DeepStates(layers=tuple(xs[1:]), log_q=float(terms.sum()), log_q_terms=terms)


def _generative_states(theta: DeepGenerativeParams, V, states: DeepStates) -> list[np.ndarray]:
    """[V, x1, ..., xL] as the generative model sees them."""
    layers = _check_states(theta.dims, V.shape[0], states.layers)
    if theta.is_deterministic:
        return [V, *det_forward(theta, V, layers[-1]), layers[-1]]
    return [V, *layers]


def _recognition_states(phi: DeepRecognitionParams, V, states: DeepStates) -> list[np.ndarray]:
    layers = _check_states(phi.dims, V.shape[0], states.layers)
    if phi.is_deterministic:
        return [V, *det_forward(phi, V), layers[-1]]
    return [V, *layers]


def _generative_preacts(theta: DeepGenerativeParams, xs: list[np.ndarray]) -> list[np.ndarray]:
    n, L = theta.order, len(xs) - 1
    preacts = []
    for level in range(1, L + 1):
        preacts.append(
            _generative_preact(
                theta.layers[level],
                xs[level + 1] if level < L else None,
                stack_windows(xs[level], n),
                stack_windows(xs[level - 1], n),
            )
        )
    return preacts


def _recognition_preacts(phi: DeepRecognitionParams, xs: list[np.ndarray]) -> list[np.ndarray]:
    n = phi.order
    return [
        _recognition_preact(
            layer, xs[level - 1], stack_windows(xs[level], n), stack_windows(xs[level - 1], n)
        )
        for level, layer in enumerate(phi.layers, start=1)
    ]


def deep_log_joint_terms(theta: DeepGenerativeParams, V, states: DeepStates) -> np.ndarray:
    """Per-timestep generative log-probabilities of the stochastic layers and the frame."""
    V = _check_data(theta, V)
    xs = _generative_states(theta, V, states)
    preacts = _generative_preacts(theta, xs)
    terms = visible_log_likelihood(_visible_params(theta, xs[1], stack_windows(V, theta.order)), V)
    for level in _stochastic_levels(theta.layer_kinds):
        terms = terms + np.sum(bernoulli_logpmf(xs[level], preacts[level - 1]), axis=-1)
    return terms


def deep_log_joint(theta: DeepGenerativeParams, V, states: DeepStates) -> float:
    return float(np.sum(deep_log_joint_terms(theta, V, states)))


def deep_log_q_terms(phi: DeepRecognitionParams, V, states: DeepStates) -> np.ndarray:
    V = _check_data(phi, V)
    xs = _recognition_states(phi, V, states)
    preacts = _recognition_preacts(phi, xs)
    terms = np.zeros(V.shape[0])
    for level in _stochastic_levels(phi.layer_kinds):
        terms = terms + np.sum(bernoulli_logpmf(xs[level], preacts[level - 1]), axis=-1)
    return terms


def deep_log_q(phi: DeepRecognitionParams, V, states: DeepStates) -> float:
    """Recognition log-probability of the stochastic layers of `states`."""
    return float(np.sum(deep_log_q_terms(phi, V, states)))


def deep_elbo_terms(
    theta: DeepGenerativeParams, phi: DeepRecognitionParams, V, states: DeepStates
) -> np.ndarray:
    """Per-timestep lower-bound contributions of a deep model.

    With deterministic middle layers only the top-layer and visible terms remain, evaluated with
    h^g rebuilt from the top-layer samples and h^r rebuilt from the data.
    """
    return deep_log_joint_terms(theta, V, states) - deep_log_q_terms(phi, V, states)


def deep_build_workspace(
    theta: DeepGenerativeParams, V, states: DeepStates, phi: DeepRecognitionParams | None = None
) -> Workspace:
    """Preactivations and residuals of every conditional of a deep model for one trajectory.

    psi1/chi1 (and psi3/chi3 with `phi`) describe the top layer; the visible entries are filled as
    for a shallow model from the bottom hidden layer. Middle-layer preactivations go to psi4 and
    psi5. Models with deterministic middle layers also get Q, the back-propagated derivatives
    of log p(V, z) with respect to h^g.
    """
    V = _check_data(theta, V)
    xs = _generative_states(theta, V, states)
    preacts = _generative_preacts(theta, xs)
    ws = Workspace(psi1=preacts[-1], chi1=xs[-1] - sigmoid(preacts[-1]), psi4=tuple(preacts[:-1]))
    set_visible_entries(ws, _visible_params(theta, xs[1], stack_windows(V, theta.order)), V)
    if theta.is_deterministic:
        d_states, _ = _det_generative_backward(theta, V, xs, preacts[:-1])
        ws.Q = tuple(d_states)
    if phi is not None:
        rxs = _recognition_states(phi, V, states)
        rpreacts = _recognition_preacts(phi, rxs)
        ws.psi3, ws.chi3 = rpreacts[-1], rxs[-1] - sigmoid(rpreacts[-1])
        ws.psi5 = tuple(rpreacts[:-1])
    return ws


def _layer_grads(
    prefix: str,
    layer: GenerativeLayer | RecognitionLayer,
    order: int,
    delta: np.ndarray,
    current: np.ndarray | None,
    own: np.ndarray,
    below: np.ndarray,
) -> dict[str, np.ndarray]:
    """Residual-times-input sums for every block of one conditional.

    `current` feeds the same-time block (top_down for generative layers, up for recognition
    layers), `own` and `below` are the trajectories whose windows feed the recurrent and
    lagged_below blocks.
    """
    grads = {
        f"{prefix}.recurrent": delta.T @ stack_windows(own, order),
        f"{prefix}.bias": delta.sum(axis=0),
    }
    current_block = "up" if isinstance(layer, RecognitionLayer) else "top_down"
    if getattr(layer, current_block) is not None:
        grads[f"{prefix}.{current_block}"] = delta.T @ current  # type: ignore[operator]
    if layer.lagged_below is not None:
        grads[f"{prefix}.lagged_below"] = delta.T @ stack_windows(below, order)
    return grads


def _visible_grads(theta: DeepGenerativeParams, V, first_hidden) -> dict[str, np.ndarray]:
    n = theta.order
    vis = _visible_params(theta, first_hidden, stack_windows(V, n))
    chi_mean, chi_scale = visible_residuals(vis, V)
    grads = _layer_grads("layers.0", theta.layers[0], n, chi_mean, first_hidden, V, V)
    if chi_scale is not None:
        grads["layers.0.scale_top_down"] = chi_scale.T @ first_hidden
        grads["layers.0.scale_recurrent"] = chi_scale.T @ stack_windows(V, n)
        grads["layers.0.scale_bias"] = chi_scale.sum(axis=0)
    return grads


def _weighted(residual: np.ndarray, weights) -> np.ndarray:
    return residual if weights is None else residual * np.asarray(weights)[:, None]


def deep_grads_stochastic(
    theta: DeepGenerativeParams,
    phi: DeepRecognitionParams,
    V,
    states: DeepStates,
    weights=None,
) -> tuple[DeepGenerativeParams, DeepRecognitionParams]:
    """Gradients of log p(V, states) and log q(states | V) for an all-stochastic deep model.

    Args:
        theta: Generative parameters.
        phi: Recognition parameters.
        V: Observed sequence (T × M).
        states: One hidden trajectory per layer.
        weights: Optional per-timestep weights applied to the recognition terms only, giving
            sum_t w_t grad log q_t.

    Returns:
        Gradient containers shaped like `theta` and `phi`.
    """
    if theta.is_deterministic or phi.is_deterministic:
        raise ValueError("deep_grads_stochastic needs hidden layers that are all stochastic.")
    V = _check_data(theta, V)
    n, L = theta.order, len(theta.layers) - 1
    xs = _generative_states(theta, V, states)

    generative = _visible_grads(theta, V, xs[1])
    for level, preact in enumerate(_generative_preacts(theta, xs), start=1):
        chi = xs[level] - sigmoid(preact)
        generative.update(
            _layer_grads(
                f"layers.{level}",
                theta.layers[level],
                n,
                chi,
                xs[level + 1] if level < L else None,
                xs[level],
                xs[level - 1],
            )
        )

    recognition: dict[str, np.ndarray] = {}
    for level, preact in enumerate(_recognition_preacts(phi, xs), start=1):
        chi = _weighted(xs[level] - sigmoid(preact), weights)
        recognition.update(
            _layer_grads(
                f"layers.{level - 1}",
                phi.layers[level - 1],
                n,
                chi,
                xs[level - 1],
                xs[level],
                xs[level - 1],
            )
        )
    return theta.with_arrays(generative), phi.with_arrays(recognition)


def _det_pass(
    params: DeepGenerativeParams | DeepRecognitionParams, V: np.ndarray, top: np.ndarray | None
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Rectified middle-layer states and their preactivations, each listed for levels 1..L-1."""
    n, dims, T = params.order, params.dims, V.shape[0]
    L = len(dims) - 1
    xs: list[np.ndarray] = [V] + [np.zeros((T, D)) for D in dims[1:L]]
    if top is not None:
        xs.append(top)
    preacts = [np.zeros((T, D)) for D in dims[1:L]]
    generative = isinstance(params, DeepGenerativeParams)
    # Generative states read the layer above at the same step, recognition states the layer below
    levels = range(L - 1, 0, -1) if generative else range(1, L)
    for t in range(T):
        for level in levels:
            own = lagged_window(xs[level], t, n)
            below = lagged_window(xs[level - 1], t, n)
            if isinstance(params, DeepGenerativeParams):
                above = xs[level + 1][t]
                preact = _generative_preact(params.layers[level], above, own, below)
            else:
                current = xs[level - 1][t]
                preact = _recognition_preact(params.layers[level - 1], current, own, below)
            preacts[level - 1][t] = preact
            xs[level][t] = relu(preact)
    return xs[1:L], preacts


def det_forward(
    params: DeepGenerativeParams | DeepRecognitionParams, V, top=None
) -> list[np.ndarray]:
    """Deterministic middle-layer trajectories.

    For generative parameters these are h^g, computed from the top-layer samples `top` and the
    data history; for recognition parameters these are h^r, computed from the data alone.

    Raises:
        ValueError: If the model has no deterministic layers, or the top layer reads the history
            of the layer below (a nonzero lagged_below block).
    """
    _require_deterministic(params)
    V = _check_data(params, V)
    if isinstance(params, DeepGenerativeParams):
        if top is None:
            raise ValueError("Generative deterministic states need top-layer samples.")
        top = np.asarray(top, dtype=np.float64)
        if top.shape != (V.shape[0], params.dims[-1]):
            expected = (V.shape[0], params.dims[-1])
            raise ShapeMismatchError(
                f"Top-layer samples have shape {top.shape}, expected {expected}."
            )
        states, _ = _det_pass(params, V, top)
    else:
        states, _ = _det_pass(params, V, None)
    return states


def _split_blocks(matrix: np.ndarray, order: int) -> list[np.ndarray]:
    return np.split(matrix, order, axis=1)


def _det_generative_backward(
    theta: DeepGenerativeParams, V: np.ndarray, xs: list[np.ndarray], preacts: list[np.ndarray]
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Derivatives of sum_t log p(V, z) with respect to h^g and to its preactivations.

    `xs` is [V, h^g_1, ..., h^g_(L-1), z] and `preacts` the middle-layer preactivations.
    """
    n, T = theta.order, V.shape[0]
    L = len(xs) - 1
    states = xs[1:L]
    # Seeded by the visible residuals
    vis = _visible_params(theta, xs[1], stack_windows(V, n))
    chi_mean, chi_scale = visible_residuals(vis, V)
    d_states = [np.zeros_like(x) for x in states]
    d_states[0] += chi_mean @ theta.layers[0].top_down  # type: ignore[operator]
    if chi_scale is not None:
        d_states[0] += chi_scale @ theta.layers[0].scale_top_down  # type: ignore[operator]
    d_preacts = [np.zeros_like(x) for x in states]
    recurrent = [None] + [_split_blocks(theta.layers[lv].recurrent, n) for lv in range(1, L)]
    lagged = [None] + [
        _split_blocks(theta.layers[lv].lagged_below, n) if lv > 1 else None for lv in range(1, L)
    ]
    for t in range(T - 1, -1, -1):
        for level in range(1, L):
            i = level - 1
            delta = d_states[i][t] * relu_derivative(preacts[i][t])
            d_preacts[i][t] = delta
            if level + 1 < L:
                d_states[i + 1][t] += delta @ theta.layers[level].top_down  # type: ignore[operator]
            for lag in range(1, n + 1):
                if t - lag < 0:
                    break
                d_states[i][t - lag] += delta @ recurrent[level][lag - 1]  # type: ignore[index]
                if level > 1:
                    below_block = lagged[level][lag - 1]  # type: ignore[index]
                    d_states[i - 1][t - lag] += delta @ below_block
    return d_states, d_preacts


def _det_generative_grads(
    theta: DeepGenerativeParams, V: np.ndarray, top: np.ndarray
) -> dict[str, np.ndarray]:
    n = theta.order
    L = len(theta.dims) - 1
    states, preacts = _det_pass(theta, V, top)
    xs = [V, *states, top]

    grads = _visible_grads(theta, V, xs[1])
    top_layer = theta.layers[L]
    top_preact = _generative_preact(
        top_layer, None, stack_windows(top, n), stack_windows(xs[L - 1], n)
    )
    chi_top = top - sigmoid(top_preact)
    grads.update(_layer_grads(f"layers.{L}", top_layer, n, chi_top, None, top, xs[L - 1]))

    _, d_preacts = _det_generative_backward(theta, V, xs, preacts)
    for level in range(1, L):
        grads.update(
            _layer_grads(
                f"layers.{level}",
                theta.layers[level],
                n,
                d_preacts[level - 1],
                xs[level + 1],
                xs[level],
                xs[level - 1],
            )
        )
    return grads


def _det_recognition_grads(
    phi: DeepRecognitionParams, V: np.ndarray, top: np.ndarray, weights
) -> dict[str, np.ndarray]:
    n, T = phi.order, V.shape[0]
    L = len(phi.dims) - 1
    states, preacts = _det_pass(phi, V, None)
    xs = [V, *states, top]

    top_layer = phi.layers[L - 1]
    top_preact = _recognition_preact(
        top_layer, xs[L - 1], stack_windows(top, n), stack_windows(xs[L - 1], n)
    )
    chi_top = top - sigmoid(top_preact)
    delta_top = _weighted(chi_top, weights)
    grads = _layer_grads(f"layers.{L - 1}", top_layer, n, delta_top, xs[L - 1], top, xs[L - 1])

    d_states = [np.zeros_like(x) for x in states]
    d_states[L - 2] += delta_top @ top_layer.up
    d_preacts = [np.zeros_like(x) for x in states]
    recurrent = [None] + [_split_blocks(phi.layers[lv - 1].recurrent, n) for lv in range(1, L)]
    lagged = [None] + [
        _split_blocks(phi.layers[lv - 1].lagged_below, n) if lv > 1 else None for lv in range(1, L)
    ]
    for t in range(T - 1, -1, -1):
        for level in range(L - 1, 0, -1):
            i = level - 1
            delta = d_states[i][t] * relu_derivative(preacts[i][t])
            d_preacts[i][t] = delta
            if level > 1:
                d_states[i - 1][t] += delta @ phi.layers[i].up
            for lag in range(1, n + 1):
                if t - lag < 0:
                    break
                d_states[i][t - lag] += delta @ recurrent[level][lag - 1]  # type: ignore[index]
                if level > 1:
                    below_block = lagged[level][lag - 1]  # type: ignore[index]
                    d_states[i - 1][t - lag] += delta @ below_block

    for level in range(1, L):
        grads.update(
            _layer_grads(
                f"layers.{level - 1}",
                phi.layers[level - 1],
                n,
                d_preacts[level - 1],
                xs[level - 1],
                xs[level],
                xs[level - 1],
            )
        )
    return grads


def det_bptt_grads(
    theta: DeepGenerativeParams,
    phi: DeepRecognitionParams,
    V,
    top,
    weights=None,
) -> tuple[DeepGenerativeParams, DeepRecognitionParams]:
    """Gradients for a model with deterministic middle layers, by back-propagation through time.

    The generative gradient is that of log p(V, z) with h^g rebuilt from the top-layer samples
    `top`; the recognition gradient is that of sum_t w_t log q(z_t | h^r_t, z window), which
    reaches the middle-layer recognition weights through h^r.

    Args:
        theta: Generative parameters.
        phi: Recognition parameters.
        V: Observed sequence (T × M).
        top: Top-layer samples z (T × D_L).
        weights: Optional per-timestep weights of the recognition terms.

    Returns:
        Gradient containers shaped like `theta` and `phi`.
    """
    _require_deterministic(theta)
    _require_deterministic(phi)
    V = _check_data(theta, V)
    top = np.asarray(top, dtype=np.float64)
    if top.shape != (V.shape[0], theta.dims[-1]):
        raise ShapeMismatchError(
            f"Top-layer samples have shape {top.shape}, expected ({V.shape[0]}, {theta.dims[-1]})."
        )
    generative = _det_generative_grads(theta, V, top)
    recognition = _det_recognition_grads(phi, V, top, weights)
    # A zero lagged_below block on the top layer is tolerated; it receives no gradient
    for prefix, container, grads in (
        (f"layers.{len(theta.layers) - 1}", theta, generative),
        (f"layers.{len(phi.layers) - 1}", phi, recognition),
    ):
        if container.layers[-1].lagged_below is not None:
            grads[f"{prefix}.lagged_below"] = np.zeros_like(container.layers[-1].lagged_below)
    return theta.with_arrays(generative), phi.with_arrays(recognition)


def deep_grads(
    theta: DeepGenerativeParams,
    phi: DeepRecognitionParams,
    V,
    states: DeepStates,
    weights=None,
) -> tuple[DeepGenerativeParams, DeepRecognitionParams]:
    """Dispatch to the stochastic or the back-propagation gradient of a deep model."""
    if theta.is_deterministic:
        return det_bptt_grads(theta, phi, V, states.top, weights)
    return deep_grads_stochastic(theta, phi, V, states, weights)


def deep_one_step_visible(
    theta: DeepGenerativeParams,
    V,
    states: DeepStates,
    generator: np.random.Generator | None = None,
) -> VisibleParams:
    """Predictive visible parameters of every frame given the past of (V, states).

    For each step the top layer's prior mean is pushed down through the layers (sigmoid means
    for stochastic layers, rectified values for deterministic ones), using only the history of
    the sampled states. With a generator, stochastic layers are drawn instead of averaged.
    """
    V = _check_data(theta, V)
    n, L = theta.order, len(theta.layers) - 1
    xs = _generative_states(theta, V, states)
    estimate = None
    for level in range(L, 0, -1):
        preact = _generative_preact(
            theta.layers[level],
            estimate,
            stack_windows(xs[level], n),
            stack_windows(xs[level - 1], n),
        )
        if theta.layer_kinds[level - 1] == LayerKind.DETERMINISTIC:
            estimate = relu(preact)
        elif generator is not None:
            estimate = bernoulli_draw(sigmoid(preact), generator)
        else:
            estimate = sigmoid(preact)
    return _visible_params(theta, estimate, stack_windows(V, n))


def deep_visible_params(theta: DeepGenerativeParams, V, states: DeepStates) -> VisibleParams:
    """Visible conditional of every frame given the hidden states of `states`."""
    V = _check_data(theta, V)
    xs = _generative_states(theta, V, states)
    return _visible_params(theta, xs[1], stack_windows(V, theta.order))
