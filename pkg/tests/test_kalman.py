import pytest

import numpy as np

from retrodecode.kalman import (
    DecodeError,
    KalmanConvergenceError,
    KalmanFitError,
    KalmanModel,
    KalmanState,
    ModelFormatError,
    RIDGE_LAMBDAS,
    fit_kalman,
    fit_observation_model,
    kalman_step,
    load_kalman,
    make_cv_folds,
    save_kalman,
    steady_state_gain,
)
from retrodecode.synthdata import Nonlinearity, PlantedTuning, SynthConfig, modulation


@pytest.fixture
def regression_data():
    rng = np.random.default_rng(12)
    labels = np.cumsum(rng.normal(0.0, 0.05, size=(3000, 2)), axis=0)
    labels -= labels.mean(axis=0)
    H = rng.normal(size=(6, 2))
    features = labels @ H.T + rng.normal(0.0, 0.3, size=(3000, 6))
    return features, labels, H


def test_scalar_fixed_point():
    K = steady_state_gain(np.ones((1, 1)), np.ones(1), np.ones((1, 1)), 0.0)

    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(0.5, abs=1e-9)


def test_fully_predictable_state_ignores_observations():
    K = steady_state_gain(np.array([[1.0, 0.0], [0.5, 2.0], [0.0, 1.0]]), np.ones(3), np.zeros((2, 2)), 0.0)

    np.testing.assert_array_equal(K, 0.0)


def test_gain_does_not_depend_on_initial_covariance(regression_data):
    features, labels, _ = regression_data
    observation = fit_observation_model(features, labels)

    from_w = steady_state_gain(observation.H, observation.Q, observation.W, 0.9, tolerance=1e-13)
    from_large = steady_state_gain(
        observation.H, observation.Q, observation.W, 0.9, P_init=10.0 * np.eye(2), tolerance=1e-13
    )

    np.testing.assert_allclose(from_w, from_large, atol=1e-8)


def test_steady_state_gain_is_a_fixed_point(regression_data):
    features, labels, _ = regression_data
    observation = fit_observation_model(features, labels)

    K = steady_state_gain(observation.H, observation.Q, observation.W, 0.9, tolerance=1e-13)

    # Textbook form of the same recursion, iterated to convergence.
    H, Q, W = observation.H, np.diag(observation.Q), observation.W
    P = W
    for _ in range(5000):
        P_prior = 0.81 * P + W
        K_direct = P_prior @ H.T @ np.linalg.inv(H @ P_prior @ H.T + Q)
        P = (np.eye(2) - K_direct @ H) @ P_prior
    np.testing.assert_allclose(K, K_direct, atol=1e-10)


def test_steady_state_matches_time_varying_filter():
    rng = np.random.default_rng(3)
    H = rng.normal(size=(6, 2))
    Q = rng.uniform(0.5, 2.0, size=6)
    W = np.array([[0.02, 0.005], [0.005, 0.03]])
    alpha = 0.8

    # Converged posterior covariance of the time-varying filter.
    P = W.copy()
    for _ in range(5000):
        P_prior = alpha * alpha * P + W
        K_t = P_prior @ H.T @ np.linalg.inv(H @ P_prior @ H.T + np.diag(Q))
        P = (np.eye(2) - K_t @ H) @ P_prior

    K = steady_state_gain(H, Q, W, alpha, tolerance=1e-14)
    model = KalmanModel(H, K, alpha, 1.0, W, Q, 0.0)

    state = KalmanState.zero()
    v_oracle = np.zeros(2)
    for x_t in rng.normal(size=(200, 6)):
        P_prior = alpha * alpha * P + W
        K_t = P_prior @ H.T @ np.linalg.inv(H @ P_prior @ H.T + np.diag(Q))
        P = (np.eye(2) - K_t @ H) @ P_prior
        v_oracle = alpha * v_oracle + K_t @ (x_t - H @ (alpha * v_oracle))

        velocity, state = kalman_step(model, state, x_t)
        np.testing.assert_allclose(velocity, v_oracle, atol=1e-8)


def test_convergence_error():
    with pytest.raises(KalmanConvergenceError) as error:
        steady_state_gain(np.ones((3, 2)), np.ones(3), np.eye(2), 0.99, max_iterations=2)

    assert error.value.last_delta > 0


def test_fit_observation_model(regression_data):
    features, labels, H = regression_data

    observation = fit_observation_model(features, labels)

    np.testing.assert_allclose(observation.H, H, atol=0.05)
    np.testing.assert_allclose(observation.Q, 0.09, rtol=0.15)
    np.testing.assert_allclose(observation.W, np.cov(np.diff(labels, axis=0), rowvar=False))
    assert observation.ridge_lambda in RIDGE_LAMBDAS


def test_cross_validation_prefers_strong_penalty_for_pure_noise():
    rng = np.random.default_rng(5)
    labels = rng.normal(size=(400, 2))
    features = rng.normal(size=(400, 40))

    observation = fit_observation_model(features, labels, ridge_lambdas=(1e-4, 1e3))

    assert observation.ridge_lambda == 1e3


def test_observation_noise_is_floored():
    rng = np.random.default_rng(6)
    labels = rng.normal(size=(100, 2))
    H = np.array([[1.0, 0.5], [0.0, 2.0]])
    features = labels @ H.T

    observation = fit_observation_model(features, labels, ridge_lambdas=(1e-12,))

    assert np.all(observation.Q >= 1e-9)


def test_fit_errors(regression_data):
    features, labels, _ = regression_data

    with pytest.raises(KalmanFitError):
        fit_observation_model(features[:50], labels[:50])
    with pytest.raises(KalmanFitError):
        fit_observation_model(features, np.column_stack([labels[:, 0], labels[:, 0]]))
    with pytest.raises(KalmanFitError):
        fit_observation_model(np.where(features > 2.5, np.nan, features), labels)


def test_make_cv_folds():
    folds = make_cv_folds(23, 5)

    assert len(folds) == 5
    validation = np.concatenate([valid for _, valid in folds])
    np.testing.assert_array_equal(validation, np.arange(23))
    for train, valid in folds:
        assert np.all(np.diff(valid) == 1)
        assert set(train).isdisjoint(valid)


def test_gain_scales_output_only(regression_data):
    features, labels, _ = regression_data
    model = fit_kalman(features, labels, alpha=0.9)
    faster = model.with_params(gain=3.0)

    slow_state, fast_state = KalmanState.zero(), KalmanState.zero()
    for x_t in features[:20]:
        slow, slow_state = kalman_step(model, slow_state, x_t)
        fast, fast_state = kalman_step(faster, fast_state, x_t)
        np.testing.assert_allclose(fast, 3.0 * slow)
        np.testing.assert_allclose(fast_state.v_prev, slow_state.v_prev)


def test_with_params_recomputes_gain(regression_data):
    features, labels, _ = regression_data
    model = fit_kalman(features, labels, alpha=0.8)

    same = model.with_params(gain=2.0)
    smoother = model.with_params(alpha=0.97)

    assert same.K is model.K or np.array_equal(same.K, model.K)
    np.testing.assert_allclose(smoother.K, steady_state_gain(model.H, model.Q, model.W, 0.97))
    assert not np.allclose(smoother.K, model.K)
    with pytest.raises(ValueError):
        model.with_params(alpha=1.0)
    with pytest.raises(ValueError):
        model.with_params(gain=0.0)


def test_decode_error(regression_data):
    features, labels, _ = regression_data
    model = fit_kalman(features, labels)

    with pytest.raises(DecodeError):
        kalman_step(model, KalmanState.zero(), np.zeros(5))
    with pytest.raises(DecodeError):
        kalman_step(model, KalmanState.zero(), np.full(6, np.inf))


def test_save_and_load(tmp_path, regression_data):
    features, labels, _ = regression_data
    model = fit_kalman(features, labels, alpha=0.94, gain=1.7)
    path = tmp_path / "kalman.npz"

    save_kalman(model, path)
    loaded = load_kalman(path)

    for name in ("H", "K", "W", "Q"):
        np.testing.assert_array_equal(getattr(loaded, name), getattr(model, name))
    assert (loaded.alpha, loaded.gain, loaded.ridge_lambda) == (model.alpha, model.gain, model.ridge_lambda)


def test_load_rejects_other_files(tmp_path):
    path = tmp_path / "other.npz"
    np.savez(path, kind=np.array("rnn"), version=np.array(1))

    with pytest.raises(ModelFormatError):
        load_kalman(path)


def test_recovers_planted_cosine_tuning():
    rng = np.random.default_rng(30)
    tuning = PlantedTuning(np.zeros(8), rng.uniform(0.2, 1.0, size=8), rng.uniform(0.0, 2.0 * np.pi, size=8))
    labels = rng.uniform(-1.0, 1.0, size=(2000, 2))
    features = modulation(SynthConfig(feature_count=8, nonlinearity=Nonlinearity.NONE), tuning, labels)

    observation = fit_observation_model(features, labels, ridge_lambdas=(1e-4,))

    planted = tuning.tuning_vectors()
    assert np.linalg.norm(observation.H - planted) / np.linalg.norm(planted) < 1e-3


def test_step_by_hand():
    model = KalmanModel(np.eye(2), np.eye(2), 0.5, 2.0, np.eye(2), np.ones(2), 0.0)

    velocity, state = kalman_step(model, KalmanState(np.array([0.4, 0.4])), np.ones(2))

    # 2 * (0.5 * 0.4 + (1 - 0.5 * 0.4))
    np.testing.assert_allclose(velocity, [2.0, 2.0])
    np.testing.assert_allclose(state.v_prev, [1.0, 1.0])


def test_zero_input_from_rest(regression_data):
    features, labels, _ = regression_data
    model = fit_kalman(features, labels, alpha=0.9, gain=3.0)

    velocity, _ = kalman_step(model, KalmanState.zero(), np.zeros(6))

    np.testing.assert_array_equal(velocity, 0.0)


def test_no_smoothing_is_linear(regression_data):
    features, labels, _ = regression_data
    model = fit_kalman(features, labels, alpha=0.9).with_params(alpha=0.0, gain=2.5)
    first, second = features[10], features[20]
    previous = KalmanState(np.array([0.7, -0.3]))

    combined, _ = kalman_step(model, previous, 2.0 * first - second)
    single_first, _ = kalman_step(model, previous, first)
    single_second, _ = kalman_step(model, KalmanState.zero(), second)

    np.testing.assert_allclose(combined, 2.0 * single_first - single_second, atol=1e-12)
    np.testing.assert_allclose(single_first, 2.5 * model.K @ first, atol=1e-12)
