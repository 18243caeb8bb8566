"""The shallow order-n temporal sigmoid belief network.

Sequences are time-major: V is T × M and a hidden trajectory H is T × J. Functions that only
evaluate probabilities also accept a leading sample axis on H (S × T × J) and then return one
value per sample. At t = 1 every history window is zero.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass

import numpy as np

from .data import lagged_window, stack_windows
from .errors import LikelihoodMismatchError, ShapeMismatchError
from .numeric import (
    RngStream,
    as_generator,
    bernoulli_draw,
    bernoulli_logpmf,
    logsumexp,
    sigmoid,
    softmax,
)
from .params import GenerativeParams, Likelihood, RecognitionParams, Workspace

logger = logging.getLogger(__name__)

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
MAX_ENUMERATED_BITS = 20


@dataclass
class VisibleParams:
    """Parameters of p(v_t | h_t, v_window) for one observation family.

    Attributes:
        likelihood: Observation family.
        psi: Bernoulli logits (binary), Gaussian means (real) or softmax logits (count).
        tau: Gaussian log standard deviations (real only).
        y: Softmax probabilities (count only).
    """

    likelihood: Likelihood
    psi: np.ndarray
    tau: np.ndarray | None = None
    y: np.ndarray | None = None

    @property
    def mean(self) -> np.ndarray:
        """Expected frame: pixel probabilities, Gaussian means or word probabilities."""
        if self.likelihood == Likelihood.BINARY:
            return sigmoid(self.psi)
        if self.likelihood == Likelihood.REAL:
            return self.psi
        return self.y  # type: ignore[return-value]


@dataclass
class HiddenStates:
    """Hidden trajectories drawn from the recognition model.

    Attributes:
        h: T × J bits, or S × T × J for several samples.
        log_q: Total recognition log-probability of each sample (always ≤ 0).
        log_q_terms: Per-timestep recognition log-probabilities (T, or S × T).
    """

    h: np.ndarray
    log_q: float | np.ndarray
    log_q_terms: np.ndarray


def make_visible_params(
    likelihood: Likelihood, psi: np.ndarray, tau: np.ndarray | None = None
) -> VisibleParams:
    if likelihood == Likelihood.COUNT:
        return VisibleParams(likelihood, psi, y=softmax(psi))
    if likelihood == Likelihood.REAL:
        if tau is None:
            raise LikelihoodMismatchError("Real-valued data needs log-scale parameters.")
        return VisibleParams(likelihood, psi, tau=tau)
    return VisibleParams(likelihood, psi)


def visible_log_likelihood(vis: VisibleParams, V: np.ndarray) -> np.ndarray:
    """log p(v_t | ...) summed over the frame, one value per time step (and sample)."""
    if vis.likelihood == Likelihood.BINARY:
        return np.sum(bernoulli_logpmf(V, vis.psi), axis=-1)
    if vis.likelihood == Likelihood.REAL:
        tau = vis.tau
        return np.sum(-HALF_LOG_2PI - tau - 0.5 * (V - vis.psi) ** 2 * np.exp(-2.0 * tau), axis=-1)
    # Multinomial coefficient omitted: it does not depend on the parameters
    log_y = vis.psi - logsumexp(vis.psi, axis=-1)[..., None]
    return np.sum(V * log_y, axis=-1)


def visible_residuals(vis: VisibleParams, V: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Derivatives of the visible log-likelihood with respect to psi (and tau for real data)."""
    if vis.likelihood == Likelihood.BINARY:
        return V - sigmoid(vis.psi), None
    if vis.likelihood == Likelihood.REAL:
        precision = np.exp(-2.0 * vis.tau)  # type: ignore[operator]
        return (V - vis.psi) * precision, (V - vis.psi) ** 2 * precision - 1.0
    return V - vis.y * np.sum(V, axis=-1, keepdims=True), None


def _check_width(name: str, array: np.ndarray, width: int) -> None:
    if array.shape[-1] != width:
        raise ShapeMismatchError(f"{name} has trailing size {array.shape[-1]}, expected {width}.")


def _check_bits(name: str, array: np.ndarray) -> None:
    if not np.all((array == 0.0) | (array == 1.0)):
        raise ValueError(f"{name} may only contain 0 and 1.")


def _check_sequence(theta_or_phi: GenerativeParams | RecognitionParams, V, H=None):
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != theta_or_phi.visible_dim:
        raise ShapeMismatchError(
            f"V has shape {V.shape}; expected (T, {theta_or_phi.visible_dim})."
        )
    if H is None:
        return V, None
    H = np.asarray(H, dtype=np.float64)
    if H.ndim < 2 or H.shape[-2:] != (V.shape[0], theta_or_phi.hidden_dim):
        raise ShapeMismatchError(
            f"H has shape {H.shape}; expected (..., {V.shape[0]}, {theta_or_phi.hidden_dim})."
        )
    _check_bits("H", H)
    return V, H


def hidden_logits(theta: GenerativeParams, h_window, v_window) -> np.ndarray:
    """Prior preactivations ψ1 = W1 h_window + W3 v_window + b.

    Windows are the concatenated previous n frames, zero-padded before the first time step.
    Leading axes broadcast.
    """
    h_window = np.asarray(h_window, dtype=np.float64)
    v_window = np.asarray(v_window, dtype=np.float64)
    _check_width("h_window", h_window, theta.W1.shape[1])
    _check_width("v_window", v_window, theta.W3.shape[1])
    return h_window @ theta.W1.T + v_window @ theta.W3.T + theta.b


def visible_params(
    theta: GenerativeParams, h, v_window, likelihood: Likelihood | None = None
) -> VisibleParams:
    """Parameters of p(v_t | h_t, v_window) for the model's observation family.

    Args:
        theta: Generative parameters.
        h: Current hidden state (J, or any leading axes).
        v_window: Visible history window (nM).
        likelihood: If given, the family the caller expects.

    Raises:
        LikelihoodMismatchError: If `likelihood` differs from the parameters' family.
    """
    if likelihood is not None and Likelihood(likelihood) != theta.likelihood:
        raise LikelihoodMismatchError(
            f"Parameters model {theta.likelihood.value} data, not {Likelihood(likelihood).value}."
        )
    h = np.asarray(h, dtype=np.float64)
    v_window = np.asarray(v_window, dtype=np.float64)
    _check_width("h", h, theta.hidden_dim)
    _check_width("v_window", v_window, theta.W4.shape[1])
    psi = h @ theta.W2.T + v_window @ theta.W4.T + theta.c
    tau = None
    if theta.likelihood == Likelihood.REAL:
        tau = h @ theta.W2p.T + v_window @ theta.W4p.T + theta.cp  # type: ignore[union-attr]
    return make_visible_params(theta.likelihood, psi, tau)


def recognition_logits(phi: RecognitionParams, h_window, v_t, v_window) -> np.ndarray:
    """Recognition preactivations ψ3 = U1 h_window + U2 v_t + U3 v_window + d."""
    h_window = np.asarray(h_window, dtype=np.float64)
    v_t = np.asarray(v_t, dtype=np.float64)
    v_window = np.asarray(v_window, dtype=np.float64)
    _check_width("h_window", h_window, phi.U1.shape[1])
    _check_width("v_t", v_t, phi.visible_dim)
    _check_width("v_window", v_window, phi.U3.shape[1])
    return h_window @ phi.U1.T + v_t @ phi.U2.T + v_window @ phi.U3.T + phi.d


def draw_visible(
    vis: VisibleParams, generator: np.random.Generator, counts_per_frame: int = 1
) -> np.ndarray:
    """Sample one frame from the visible conditional."""
    if vis.likelihood == Likelihood.BINARY:
        return bernoulli_draw(sigmoid(vis.psi), generator)
    if vis.likelihood == Likelihood.REAL:
        noise = generator.standard_normal(vis.psi.shape)
        return vis.psi + np.exp(vis.tau) * noise  # type: ignore[arg-type]
    return generator.multinomial(counts_per_frame, vis.y).astype(np.float64)


def sample_sequence(
    theta: GenerativeParams,
    T: int,
    rng: RngStream | np.random.Generator,
    counts_per_frame: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Ancestral sampling of a fantasy sequence.

    At every step h_t is drawn from its prior given the sampled history, then v_t given h_t.

    Args:
        theta: Generative parameters.
        T: Sequence length.
        rng: Random stream.
        counts_per_frame: Total word count of each frame (count data only).

    Returns:
        The pair (V, H) with shapes (T, M) and (T, J).
    """
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}.")
    generator = as_generator(rng)
    n = theta.order
    V = np.zeros((T, theta.visible_dim))
    H = np.zeros((T, theta.hidden_dim))
    for t in range(T):
        v_window = lagged_window(V, t, n)
        psi1 = hidden_logits(theta, lagged_window(H, t, n), v_window)
        H[t] = bernoulli_draw(sigmoid(psi1), generator)
        V[t] = draw_visible(visible_params(theta, H[t], v_window), generator, counts_per_frame)
    return V, H


def set_visible_entries(ws: Workspace, vis: VisibleParams, V) -> None:
    """Store the visible preactivations and the residuals of the active likelihood in `ws`."""
    ws.psi2 = vis.psi
    chi_mean, chi_scale = visible_residuals(vis, V)
    if vis.likelihood == Likelihood.BINARY:
        ws.chi2 = chi_mean
    elif vis.likelihood == Likelihood.REAL:
        ws.mu, ws.tau, ws.chi4, ws.chi5 = vis.psi, vis.tau, chi_mean, chi_scale
    else:
        ws.y, ws.chi6 = vis.y, chi_mean


def build_workspace(
    theta: GenerativeParams, V, H, phi: RecognitionParams | None = None
) -> Workspace:
    """Compute preactivations and residuals of every conditional for one or S trajectories."""
    V, H = _check_sequence(theta, V, H)
    if theta.likelihood == Likelihood.BINARY:
        _check_bits("V", V)
    n = theta.order
    v_windows = stack_windows(V, n)
    h_windows = stack_windows(H, n)

    ws = Workspace()
    ws.psi1 = hidden_logits(theta, h_windows, v_windows)
    ws.chi1 = H - sigmoid(ws.psi1)
    set_visible_entries(ws, visible_params(theta, H, v_windows), V)
    if phi is not None:
        ws.psi3 = recognition_logits(phi, h_windows, V, v_windows)
        ws.chi3 = H - sigmoid(ws.psi3)
    return ws


def _visible_of(theta: GenerativeParams, ws: Workspace) -> VisibleParams:
    if theta.likelihood == Likelihood.REAL:
        return VisibleParams(theta.likelihood, ws.mu, tau=ws.tau)  # type: ignore[arg-type]
    return VisibleParams(theta.likelihood, ws.psi2, y=ws.y)  # type: ignore[arg-type]


def log_joint_terms(theta: GenerativeParams, V, H) -> np.ndarray:
    """Per-timestep log p(h_t, v_t | history)."""
    ws = build_workspace(theta, V, H)
    V = np.asarray(V, dtype=np.float64)
    hidden = np.sum(bernoulli_logpmf(np.asarray(H, dtype=np.float64), ws.psi1), axis=-1)
    return hidden + visible_log_likelihood(_visible_of(theta, ws), V)


def log_joint(theta: GenerativeParams, V, H) -> float | np.ndarray:
    """log p(V, H), one value per sample when H carries a sample axis.

    Raises:
        ShapeMismatchError: If V or H do not fit the parameters.
        ValueError: If binary frames or hidden states hold values other than 0 and 1.
    """
    total = np.sum(log_joint_terms(theta, V, H), axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def log_q_terms(phi: RecognitionParams, V, H) -> np.ndarray:
    """Per-timestep log q(h_t | h_window, v_t, v_window)."""
    V, H = _check_sequence(phi, V, H)
    h_windows = stack_windows(H, phi.order)
    psi3 = recognition_logits(phi, h_windows, V, stack_windows(V, phi.order))
    return np.sum(bernoulli_logpmf(H, psi3), axis=-1)


def log_q(phi: RecognitionParams, V, H) -> float | np.ndarray:
    """Recognition log-probability log q(H | V) of given hidden trajectories."""
    total = np.sum(log_q_terms(phi, V, H), axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def sample_posterior(
    phi: RecognitionParams,
    V,
    rng: RngStream | np.random.Generator,
    num_samples: int | None = None,
) -> HiddenStates:
    """Draw hidden trajectories from the recognition model in one forward (filtering) pass.

    Args:
        phi: Recognition parameters.
        V: Observed sequence (T × M).
        rng: Random stream.
        num_samples: Number of independent trajectories S drawn side by side. If None, a single
            trajectory without the sample axis is returned.

    Returns:
        HiddenStates whose log-probabilities are accumulated while sampling.
    """
    V, _ = _check_sequence(phi, V)
    generator = as_generator(rng)
    n, (T, _M), J = phi.order, V.shape, phi.hidden_dim
    S = 1 if num_samples is None else num_samples
    v_windows = stack_windows(V, n)
    H = np.zeros((S, T, J))
    terms = np.zeros((S, T))
    for t in range(T):
        psi = recognition_logits(phi, lagged_window(H, t, n), V[t], v_windows[t])
        H[:, t] = bernoulli_draw(sigmoid(psi), generator)
        terms[:, t] = np.sum(bernoulli_logpmf(H[:, t], psi), axis=-1)
    if num_samples is None:
        return HiddenStates(h=H[0], log_q=float(terms[0].sum()), log_q_terms=terms[0])
    return HiddenStates(h=H, log_q=terms.sum(axis=1), log_q_terms=terms)


def elbo_terms(theta: GenerativeParams, phi: RecognitionParams, V, H) -> np.ndarray:
    """Per-timestep lower-bound contributions l_t = log p(h_t, v_t | .) - log q(h_t | .).

    Their sum is log p(V, H) - log q(H | V).
    """
    return log_joint_terms(theta, V, H) - log_q_terms(phi, V, H)


def _residual_products(residual: np.ndarray, weights: np.ndarray | None) -> np.ndarray:
    return residual if weights is None else residual * np.asarray(weights)[:, None]


def grad_log_joint(theta: GenerativeParams, V, H, weights=None) -> GenerativeParams:
    """Gradient of log p(V, H) with respect to every generative block.

    Every block gradient is a residual-times-input outer product summed over time.

    Args:
        theta: Generative parameters.
        V: Observed sequence (T × M).
        H: One hidden trajectory (T × J).
        weights: Optional per-timestep weights applied to each step's contribution.

    Returns:
        A container shaped like `theta`.
    """
    if np.ndim(H) != 2:
        raise ShapeMismatchError("Gradients take a single hidden trajectory (T × J).")
    ws = build_workspace(theta, V, H)
    V = np.asarray(V, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    n = theta.order
    h_windows, v_windows = stack_windows(H, n), stack_windows(V, n)

    chi1 = _residual_products(ws.chi1, weights)  # type: ignore[arg-type]
    chi_mean = ws.chi2 if ws.chi2 is not None else ws.chi4 if ws.chi4 is not None else ws.chi6
    chi_mean = _residual_products(chi_mean, weights)  # type: ignore[arg-type]
    grads = {
        "W1": chi1.T @ h_windows,
        "W3": chi1.T @ v_windows,
        "b": chi1.sum(axis=0),
        "W2": chi_mean.T @ H,
        "W4": chi_mean.T @ v_windows,
        "c": chi_mean.sum(axis=0),
    }
    if theta.likelihood == Likelihood.REAL:
        chi5 = _residual_products(ws.chi5, weights)  # type: ignore[arg-type]
        grads.update({"W2p": chi5.T @ H, "W4p": chi5.T @ v_windows, "cp": chi5.sum(axis=0)})
    return theta.with_arrays(grads)


def grad_log_q(phi: RecognitionParams, V, H, weights=None) -> RecognitionParams:
    """Gradient of log q(H | V) with respect to U1, U2, U3 and d.

    With `weights` each time step's term is scaled, giving sum_t w_t grad log q(h_t | .).
    """
    if np.ndim(H) != 2:
        raise ShapeMismatchError("Gradients take a single hidden trajectory (T × J).")
    V, H = _check_sequence(phi, V, H)
    n = phi.order
    h_windows, v_windows = stack_windows(H, n), stack_windows(V, n)
    chi3 = H - sigmoid(recognition_logits(phi, h_windows, V, v_windows))
    chi3 = _residual_products(chi3, weights)
    return phi.with_arrays(
        {
            "U1": chi3.T @ h_windows,
            "U2": chi3.T @ V,
            "U3": chi3.T @ v_windows,
            "d": chi3.sum(axis=0),
        }
    )


def enumerate_hidden(J: int, T: int) -> np.ndarray:
    """Every binary hidden trajectory of shape (T, J), stacked along a leading axis."""
    bits = J * T
    if bits > MAX_ENUMERATED_BITS:
        raise ValueError(f"Enumerating 2^{bits} hidden configurations exceeds the 2^20 cap.")
    codes = np.arange(2**bits)[:, None]
    return ((codes >> np.arange(bits)) & 1).reshape(-1, T, J).astype(np.float64)


def exact_log_marginal(theta: GenerativeParams, V) -> float:
    """log p(V) by summing the joint over all 2^(J·T) hidden trajectories."""
    V = np.asarray(V, dtype=np.float64)
    configurations = enumerate_hidden(theta.hidden_dim, V.shape[0])
    return float(logsumexp(log_joint(theta, V, configurations), axis=0))


def exact_elbo(theta: GenerativeParams, phi: RecognitionParams, V) -> float:
    """E_q[log p(V, H) - log q(H | V)] by enumeration."""
    V = np.asarray(V, dtype=np.float64)
    configurations = enumerate_hidden(theta.hidden_dim, V.shape[0])
    log_p = np.asarray(log_joint(theta, V, configurations))
    log_qs = np.asarray(log_q(phi, V, configurations))
    return float(np.sum(np.exp(log_qs) * (log_p - log_qs)))


def one_step_visible(
    theta: GenerativeParams, V, H, generator: np.random.Generator | None = None
) -> VisibleParams:
    """Predictive visible parameters of every frame given the past of (V, H).

    Row t combines the prior over h_t given rows before t with the visible history. The prior is
    summarized by its mean sigmoid(ψ1), or by a draw from it when a generator is passed. H may
    carry a leading sample axis.
    """
    V = np.asarray(V, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    v_windows = stack_windows(V, theta.order)
    probabilities = sigmoid(hidden_logits(theta, stack_windows(H, theta.order), v_windows))
    if generator is not None:
        probabilities = bernoulli_draw(probabilities, generator)
    return visible_params(theta, probabilities, v_windows)
