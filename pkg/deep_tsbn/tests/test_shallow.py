from dataclasses import fields

import numpy as np
import pytest

from ..data import window_view
from ..errors import LikelihoodMismatchError, ShapeMismatchError
from ..numeric import RngStream
from ..params import (
    GenerativeParams,
    Likelihood,
    ModelSpec,
    RecognitionParams,
    Workspace,
    finite_difference_gradient,
    hmsbn_mask,
    zero_params,
)
from ..shallow import (
    build_workspace,
    elbo_terms,
    enumerate_hidden,
    exact_elbo,
    exact_log_marginal,
    grad_log_joint,
    grad_log_q,
    hidden_logits,
    log_joint,
    log_joint_terms,
    log_q,
    log_q_terms,
    recognition_logits,
    sample_posterior,
    sample_sequence,
    visible_params,
)

LN2 = np.log(2.0)


def _spec(likelihood=Likelihood.BINARY, M=2, J=2, order=1):
    return ModelSpec(visible_dim=M, layer_dims=(J,), order=order, likelihood=likelihood)


def _bits(shape, seed=0):
    return (np.random.default_rng(seed).random(shape) < 0.5).astype(np.float64)


def _reference_log_joint(theta, V, H):
    """Frame-by-frame evaluation of log p(V, H)."""
    n = theta.order
    total = 0.0
    for t in range(1, V.shape[0] + 1):
        h_window, v_window = window_view(H, t, n), window_view(V, t, n)
        h, v = H[t - 1], V[t - 1]
        psi1 = theta.W1 @ h_window + theta.W3 @ v_window + theta.b
        total += np.sum(h * psi1 - np.log1p(np.exp(psi1)))
        psi2 = theta.W2 @ h + theta.W4 @ v_window + theta.c
        if theta.likelihood == Likelihood.BINARY:
            total += np.sum(v * psi2 - np.log1p(np.exp(psi2)))
        elif theta.likelihood == Likelihood.REAL:
            tau = theta.W2p @ h + theta.W4p @ v_window + theta.cp
            total += np.sum(
                -0.5 * np.log(2 * np.pi) - tau - 0.5 * (v - psi2) ** 2 / np.exp(2 * tau)
            )
        else:
            total += np.sum(v * (psi2 - np.log(np.sum(np.exp(psi2)))))
    return total


def test_hidden_logits_hand_case():
    theta, _ = zero_params(_spec(J=2, M=2))
    theta = theta.with_arrays({**theta.arrays(), "W1": np.array([[1.0, -1.0], [1.0, 1.0]])})
    np.testing.assert_allclose(hidden_logits(theta, [1.0, 1.0], [0.0, 0.0]), [0.0, 2.0])


def test_recognition_logits_hand_case():
    phi = RecognitionParams(
        U1=np.array([[0.5]]),
        U2=np.array([[1.0, -1.0]]),
        U3=np.array([[0.5, 3.0]]),
        d=np.array([0.0]),
    )
    psi3 = recognition_logits(phi, [1.0], [1.0, 1.0], [2.0, 0.0])
    np.testing.assert_allclose(psi3, [1.5])


def test_visible_params_per_likelihood():
    theta, _ = zero_params(_spec(Likelihood.BINARY, M=2, J=1))
    theta = theta.with_arrays({**theta.arrays(), "W2": np.array([[2.0], [0.0]])})
    vis = visible_params(theta, [1.0], [0.0, 0.0])
    np.testing.assert_allclose(vis.psi, [2.0, 0.0])
    np.testing.assert_allclose(vis.mean, [1 / (1 + np.exp(-2.0)), 0.5])

    theta, _ = zero_params(_spec(Likelihood.REAL, M=2, J=1))
    theta = theta.with_arrays(
        {**theta.arrays(), "c": np.array([1.0, -1.0]), "cp": np.array([0.0, np.log(2.0)])}
    )
    vis = visible_params(theta, [1.0], [0.0, 0.0])
    np.testing.assert_allclose(vis.mean, [1.0, -1.0])
    np.testing.assert_allclose(np.exp(vis.tau), [1.0, 2.0])

    theta, _ = zero_params(_spec(Likelihood.COUNT, M=3, J=1))
    theta = theta.with_arrays({**theta.arrays(), "c": np.log([1.0, 2.0, 3.0])})
    vis = visible_params(theta, [0.0], np.zeros(3))
    np.testing.assert_allclose(vis.mean, [1 / 6, 2 / 6, 3 / 6])


def test_visible_params_likelihood_mismatch():
    theta, _ = zero_params(_spec(Likelihood.BINARY))
    with pytest.raises(LikelihoodMismatchError):
        _ = visible_params(theta, [0.0, 0.0], [0.0, 0.0], likelihood="real")


def test_zero_model_samples_fair_coins():
    theta, _ = zero_params(_spec(M=100, J=10))
    V, H = sample_sequence(theta, 1000, RngStream(0))
    assert V.shape == (1000, 100)
    assert H.shape == (1000, 10)
    assert abs(V.mean() - 0.5) < 0.01
    assert abs(H.mean() - 0.5) < 0.02


def test_sampling_is_deterministic(make_model):
    theta, _ = make_model(_spec(Likelihood.REAL, order=2))
    V1, H1 = sample_sequence(theta, 20, RngStream(9))
    V2, H2 = sample_sequence(theta, 20, RngStream(9))
    np.testing.assert_array_equal(V1, V2)
    np.testing.assert_array_equal(H1, H2)


def test_count_sampling_frequencies():
    theta, _ = zero_params(_spec(Likelihood.COUNT, M=3, J=1))
    theta = theta.with_arrays({**theta.arrays(), "c": np.log([1.0, 2.0, 3.0])})
    V, _ = sample_sequence(theta, 20_000, RngStream(1))
    np.testing.assert_array_equal(V.sum(axis=1), 1.0)
    np.testing.assert_allclose(V.mean(axis=0), [1 / 6, 2 / 6, 3 / 6], atol=0.015)


def test_sample_sequence_rejects_empty():
    theta, _ = zero_params(_spec())
    with pytest.raises(ValueError):
        _ = sample_sequence(theta, 0, RngStream(0))


def test_log_joint_of_zero_model():
    theta, _ = zero_params(_spec(M=1, J=1))
    assert log_joint(theta, [[1.0]], [[0.0]]) == pytest.approx(-2 * LN2, rel=1e-14)
    theta, _ = zero_params(_spec(M=3, J=2))
    V, H = _bits((5, 3)), _bits((5, 2), seed=1)
    assert log_joint(theta, V, H) == pytest.approx(-5 * 5 * LN2, rel=1e-14)


def test_log_joint_real_standard_normal():
    theta, _ = zero_params(_spec(Likelihood.REAL, M=4, J=3))
    theta = theta.with_arrays({**theta.arrays(), "b": np.full(3, 1000.0)})
    T = 6
    value = log_joint(theta, np.zeros((T, 4)), np.ones((T, 3)))
    assert value == pytest.approx(-T * 4 * 0.5 * np.log(2 * np.pi), rel=1e-12)


@pytest.mark.parametrize("likelihood", list(Likelihood))
@pytest.mark.parametrize("order", [1, 2])
def test_log_joint_matches_frame_by_frame_evaluation(
    make_model, make_sequence, likelihood, order
):
    theta, _ = make_model(_spec(likelihood, M=3, J=2, order=order), seed=order)
    V = make_sequence(likelihood, 5, 3, seed=2)
    H = _bits((5, 2), seed=3)
    expected = _reference_log_joint(theta, V, H)
    np.testing.assert_allclose(log_joint(theta, V, H), expected, rtol=1e-12)


def test_log_joint_over_sample_axis(make_model):
    theta, _ = make_model(_spec())
    V = _bits((4, 2))
    H = np.stack([_bits((4, 2), seed=s) for s in range(3)])
    batched = log_joint(theta, V, H)
    assert batched.shape == (3,)
    for s in range(3):
        assert batched[s] == pytest.approx(log_joint(theta, V, H[s]), rel=1e-12)


def test_posterior_of_zero_model():
    _, phi = zero_params(_spec(M=3, J=4))
    hidden = sample_posterior(phi, _bits((6, 3)), RngStream(0))
    assert hidden.h.shape == (6, 4)
    assert hidden.log_q == pytest.approx(-6 * 4 * LN2, rel=1e-14)


@pytest.mark.parametrize("order", [1, 3])
def test_posterior_log_probability_is_self_consistent(make_model, order):
    _, phi = make_model(_spec(Likelihood.REAL, order=order))
    V = np.random.default_rng(0).normal(size=(7, 2))
    hidden = sample_posterior(phi, V, RngStream(4))
    assert hidden.log_q <= 0.0
    assert hidden.log_q == pytest.approx(log_q(phi, V, hidden.h), rel=1e-12)
    np.testing.assert_allclose(hidden.log_q_terms, log_q_terms(phi, V, hidden.h), rtol=1e-12)

    several = sample_posterior(phi, V, RngStream(4), num_samples=5)
    assert several.h.shape == (5, 7, 2)
    np.testing.assert_allclose(several.log_q, log_q(phi, V, several.h), rtol=1e-12)


def test_elbo_terms_of_zero_model():
    theta, phi = zero_params(_spec(M=3, J=2))
    terms = elbo_terms(theta, phi, _bits((4, 3)), _bits((4, 2), seed=1))
    np.testing.assert_allclose(terms, -3 * LN2)


@pytest.mark.parametrize("likelihood", list(Likelihood))
def test_elbo_terms_sum_to_log_ratio(make_model, make_sequence, likelihood):
    theta, phi = make_model(_spec(likelihood, order=2))
    V = make_sequence(likelihood, 5, 2)
    H = _bits((5, 2), seed=5)
    total = elbo_terms(theta, phi, V, H).sum()
    assert total == pytest.approx(log_joint(theta, V, H) - log_q(phi, V, H), rel=1e-12)


def test_exact_elbo_bounds_exact_marginal(make_model, make_sequence):
    for seed in range(50):
        theta, phi = make_model(_spec(M=2, J=2), seed=seed, scale=1.0)
        V = make_sequence(Likelihood.BINARY, 3, 2, seed=seed)
        assert exact_elbo(theta, phi, V) <= exact_log_marginal(theta, V) + 1e-10


def test_monte_carlo_elbo_agrees_with_enumeration(make_model, make_sequence):
    theta, phi = make_model(_spec(M=2, J=2), seed=11, scale=1.0)
    V = make_sequence(Likelihood.BINARY, 3, 2, seed=11)
    hidden = sample_posterior(phi, V, RngStream(2), num_samples=4000)
    values = log_joint(theta, V, hidden.h) - hidden.log_q
    stderr = values.std(ddof=1) / np.sqrt(values.size)
    assert abs(values.mean() - exact_elbo(theta, phi, V)) < 4 * stderr + 1e-12


def test_enumerate_hidden():
    configurations = enumerate_hidden(2, 3)
    assert configurations.shape == (64, 3, 2)
    assert len({c.tobytes() for c in configurations}) == 64
    with pytest.raises(ValueError):
        _ = enumerate_hidden(5, 5)


def test_exact_marginal_normalizes(make_model):
    theta, _ = make_model(_spec(M=2, J=2), seed=3, scale=1.0)
    total = sum(np.exp(exact_log_marginal(theta, V)) for V in enumerate_hidden(2, 2))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_bias_gradients_of_zero_model():
    theta, phi = zero_params(_spec(M=3, J=2))
    T = 4
    V = _bits((T, 3))
    np.testing.assert_allclose(grad_log_joint(theta, V, np.ones((T, 2))).b, T / 2)
    np.testing.assert_allclose(grad_log_q(phi, V, np.zeros((T, 2))).d, -T / 2)


def test_gaussian_residuals_at_the_mean():
    theta, _ = zero_params(_spec(Likelihood.REAL, M=3, J=2))
    ws = build_workspace(theta, np.zeros((4, 3)), _bits((4, 2)))
    np.testing.assert_array_equal(ws.chi4, 0.0)
    np.testing.assert_array_equal(ws.chi5, -1.0)


def test_count_residuals(make_model, make_sequence):
    theta, _ = make_model(_spec(Likelihood.COUNT, M=4, J=2))
    V = make_sequence(Likelihood.COUNT, 5, 4)
    ws = build_workspace(theta, V, _bits((5, 2)))
    np.testing.assert_allclose(ws.y.sum(axis=-1), 1.0)
    np.testing.assert_allclose(ws.chi6.sum(axis=-1), 0.0, atol=1e-12)


def test_every_shallow_workspace_entry_is_filled(make_model, make_sequence):
    deep_only = {"psi4", "psi5", "Q"}
    filled = set()
    for likelihood in Likelihood:
        theta, phi = make_model(_spec(likelihood, M=3, J=2))
        ws = build_workspace(theta, make_sequence(likelihood, 4, 3), _bits((4, 2)), phi)
        filled |= {f.name for f in fields(ws) if getattr(ws, f.name) is not None}
    assert filled == {f.name for f in fields(Workspace)} - deep_only


@pytest.mark.parametrize("likelihood", list(Likelihood))
@pytest.mark.parametrize("order", [1, 2])
def test_generative_gradient_matches_finite_differences(
    make_model, make_sequence, likelihood, order
):
    theta, _ = make_model(_spec(likelihood, order=order), seed=order)
    V = make_sequence(likelihood, 4, 2, seed=1)
    H = _bits((4, 2), seed=2)
    weights = np.array([0.5, -1.0, 2.0, 1.5])

    def weighted(params):
        return float(np.sum(weights * log_joint_terms(params, V, H)))

    numeric = finite_difference_gradient(lambda params: log_joint(params, V, H), theta)
    analytic = grad_log_joint(theta, V, H)
    numeric_weighted = finite_difference_gradient(weighted, theta)
    analytic_weighted = grad_log_joint(theta, V, H, weights=weights)
    for name, value in numeric.arrays().items():
        np.testing.assert_allclose(analytic.arrays()[name], value, atol=1e-6, err_msg=name)
        np.testing.assert_allclose(
            analytic_weighted.arrays()[name],
            numeric_weighted.arrays()[name],
            atol=1e-6,
            err_msg=name,
        )


@pytest.mark.parametrize("order", [1, 2])
def test_recognition_gradient_matches_finite_differences(make_model, order):
    _, phi = make_model(_spec(Likelihood.REAL, order=order), seed=order)
    V = np.random.default_rng(1).normal(size=(4, 2))
    H = _bits((4, 2), seed=2)
    weights = np.array([1.0, -0.5, 3.0, 0.25])

    def weighted(params):
        return float(np.sum(weights * log_q_terms(params, V, H)))

    numeric = finite_difference_gradient(weighted, phi)
    analytic = grad_log_q(phi, V, H, weights=weights)
    for name, value in numeric.arrays().items():
        np.testing.assert_allclose(analytic.arrays()[name], value, atol=1e-6, err_msg=name)


def test_single_frame_sequences(make_model):
    theta, phi = make_model(_spec(order=2))
    V, H = _bits((1, 2)), _bits((1, 2), seed=1)
    numeric = finite_difference_gradient(lambda params: log_joint(params, V, H), theta)
    analytic = grad_log_joint(theta, V, H)
    for name, value in numeric.arrays().items():
        np.testing.assert_allclose(analytic.arrays()[name], value, atol=1e-6)
    np.testing.assert_array_equal(analytic.W1, 0.0)
    np.testing.assert_array_equal(grad_log_q(phi, V, H).U3, 0.0)


def test_score_function_has_zero_mean(make_model):
    theta, phi = make_model(_spec(M=2, J=3), seed=4)
    V = _bits((3, 2))
    hidden = sample_posterior(phi, V, RngStream(8), num_samples=20_000)
    chi3 = build_workspace(theta, V, hidden.h, phi).chi3
    scores = chi3.sum(axis=1)
    stderr = scores.std(axis=0, ddof=1) / np.sqrt(scores.shape[0])
    assert np.all(np.abs(scores.mean(axis=0)) < 4 * stderr + 1e-12)


def test_hidden_markov_model_ignores_visible_history(make_model):
    theta, _ = make_model(_spec(M=3, J=2))
    theta = hmsbn_mask(theta)
    V = _bits((5, 3))
    H = _bits((5, 2), seed=1)
    changed = V.copy()
    changed[0] = 1.0 - changed[0]
    np.testing.assert_allclose(
        log_joint_terms(theta, V, H)[1:], log_joint_terms(theta, changed, H)[1:], rtol=1e-14
    )


def test_input_validation():
    theta, phi = zero_params(_spec(M=2, J=2))
    with pytest.raises(ValueError):
        _ = log_joint(theta, _bits((3, 2)), np.full((3, 2), 0.5))
    with pytest.raises(ValueError):
        _ = log_joint(theta, np.full((3, 2), 0.5), _bits((3, 2)))
    with pytest.raises(ShapeMismatchError):
        _ = log_joint(theta, _bits((3, 4)), _bits((3, 2)))
    with pytest.raises(ShapeMismatchError):
        _ = log_q(phi, _bits((3, 2)), _bits((4, 2)))
    with pytest.raises(ShapeMismatchError):
        _ = grad_log_joint(theta, _bits((3, 2)), _bits((2, 3, 2)))
    with pytest.raises(ShapeMismatchError):
        _ = grad_log_q(phi, _bits((3, 2)), _bits((2, 3, 2)))


def test_generative_params_accept_lists():
    theta = GenerativeParams(
        W1=[[0.0]], W2=[[0.0]], W3=[[0.0]], W4=[[0.0]], b=[0.0], c=[0.0]
    )
    assert theta.order == 1
    assert theta.W1.dtype == np.float64
