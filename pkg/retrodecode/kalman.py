"""
Steady-state velocity Kalman decoder.

The observation model ``x_t = H v_t + noise`` is fitted by ridge regression of every feature on the
2-D label; the gain ``K`` is the fixed point of the Kalman recursion for the state model
``v_t = alpha * v_{t-1} + noise``. Decoding is then the fixed linear recursion

    v_t = g * (A v_{t-1} + K (x_t - H A v_{t-1})),  A = alpha * I
"""

from __future__ import annotations

import logging
from pathlib import Path
import typing

import numpy as np
from sklearn.linear_model import Ridge
from sklearn.model_selection import KFold

from . import utils

logger = logging.getLogger(__name__)

RIDGE_LAMBDAS = tuple(float(value) for value in np.logspace(-4, 3, 8))
CV_FOLDS = 5
GAIN_TOLERANCE = 1e-9
MAX_GAIN_ITERATIONS = 100_000
MIN_OBSERVATION_NOISE = 1e-9
ALPHA_VALUES = (0.80, 0.90, 0.94, 0.97, 0.99)
FORMAT_VERSION = 1


class KalmanFitError(utils.RetrodecodeError):
    pass


class KalmanConvergenceError(utils.RetrodecodeError):
    def __init__(self, message: str, last_delta: float) -> None:
        super().__init__(message)
        self.last_delta = last_delta


class DecodeError(utils.RetrodecodeError):
    pass


class ModelFormatError(utils.RetrodecodeError):
    pass


class ObservationModel(typing.NamedTuple):
    H: np.ndarray
    Q: np.ndarray
    W: np.ndarray
    ridge_lambda: float


class KalmanModel:
    """
    A fitted steady-state Kalman decoder.

    ``H`` is features x 2, ``K`` is 2 x features and ``Q`` holds the diagonal of the observation noise
    covariance. :class:`KalmanModel` is immutable; :func:`with_params` returns a copy with a new gain
    or smoothing value and the matching steady-state ``K``.
    """

    def __init__(
        self,
        H: np.ndarray,
        K: np.ndarray,
        alpha: float,
        gain: float,
        W: np.ndarray,
        Q: np.ndarray,
        ridge_lambda: float,
    ) -> None:
        self.__H = _readonly(H)
        self.__K = _readonly(K)
        self.__W = _readonly(W)
        self.__Q = _readonly(Q)
        self.__alpha = float(alpha)
        self.__gain = float(gain)
        self.__ridge_lambda = float(ridge_lambda)

        features = self.__H.shape[0]
        if self.__H.shape != (features, 2) or self.__K.shape != (2, features) or self.__Q.shape != (features,):
            raise ValueError("inconsistent Kalman dimensions H{} K{} Q{}".format(self.__H.shape, self.__K.shape, self.__Q.shape))
        if self.__W.shape != (2, 2):
            raise ValueError("W must be 2 x 2")
        if not 0.0 <= self.__alpha < 1.0:
            raise ValueError("alpha must be in [0, 1), got {}".format(alpha))
        if not self.__gain > 0:
            raise ValueError("gain must be positive, got {}".format(gain))

    @property
    def H(self) -> np.ndarray:
        return self.__H

    @property
    def K(self) -> np.ndarray:
        return self.__K

    @property
    def W(self) -> np.ndarray:
        return self.__W

    @property
    def Q(self) -> np.ndarray:
        return self.__Q

    @property
    def alpha(self) -> float:
        return self.__alpha

    @property
    def gain(self) -> float:
        return self.__gain

    @property
    def ridge_lambda(self) -> float:
        return self.__ridge_lambda

    @property
    def feature_count(self) -> int:
        return int(self.__H.shape[0])

    def with_params(self, gain: typing.Optional[float] = None, alpha: typing.Optional[float] = None) -> KalmanModel:
        """
        :return: A copy with a new gain and/or smoothing value. ``K`` is recomputed when ``alpha`` changes.
        """
        alpha = self.alpha if alpha is None else float(alpha)
        if not 0.0 <= alpha < 1.0:
            raise ValueError("alpha must be in [0, 1), got {}".format(alpha))
        K = self.K if alpha == self.alpha else steady_state_gain(self.H, self.Q, self.W, alpha)
        return KalmanModel(self.H, K, alpha, self.gain if gain is None else gain, self.W, self.Q, self.ridge_lambda)

    def __repr__(self) -> str:
        return "KalmanModel(features={}, alpha={}, gain={:.4g}, lambda={:.0e})".format(
            self.feature_count, self.alpha, self.gain, self.ridge_lambda
        )


class KalmanState(typing.NamedTuple):
    """
    The un-gained velocity of the previous step.
    """

    v_prev: np.ndarray

    @classmethod
    def zero(cls) -> KalmanState:
        return cls(np.zeros(2))


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def make_cv_folds(sample_count: int, folds: int = CV_FOLDS) -> typing.List[typing.Tuple[np.ndarray, np.ndarray]]:
    """
    Contiguous cross-validation folds: every sample is in exactly one validation fold.

    :return: ``(train positions, validation positions)`` per fold.
    """
    splitter = KFold(n_splits=folds, shuffle=False)
    return [(train, valid) for train, valid in splitter.split(np.zeros((sample_count, 1)))]


def fit_observation_model(
    features: np.ndarray,
    labels: np.ndarray,
    ridge_lambdas: typing.Sequence[float] = RIDGE_LAMBDAS,
    folds: int = CV_FOLDS,
) -> ObservationModel:
    """
    Fits ``H`` by ridge regression of every feature on the 2-D label (no intercept; features are
    z-scored), choosing the ridge penalty by cross-validated mean squared error.

    ``Q`` is the diagonal of the residual covariance, floored to keep it positive, and ``W`` is the
    covariance of the first differences of the labels.

    :param features: Samples x channels.
    :param labels: Samples x 2 cursor-to-target labels.
    :param ridge_lambdas: Candidate penalties; the first one with the lowest held-out error wins.

    :raise KalmanFitError: With fewer than ten samples per feature or degenerate labels.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    samples, channels = features.shape

    if labels.shape != (samples, 2):
        raise KalmanFitError("labels must be samples x 2, got {}".format(labels.shape))
    if samples < 10 * channels:
        raise KalmanFitError("need at least {} samples for {} features, got {}".format(10 * channels, channels, samples))
    if not np.all(np.isfinite(features)) or not np.all(np.isfinite(labels)):
        raise KalmanFitError("training data contains non-finite values")
    if np.linalg.matrix_rank(labels.T @ labels) < 2:
        raise KalmanFitError("labels are degenerate; the regression is not identifiable")
    if len(ridge_lambdas) == 0:
        raise KalmanFitError("no ridge penalties to choose from")

    best_lambda, best_error = float(ridge_lambdas[0]), np.inf
    if len(ridge_lambdas) > 1:
        fold_positions = make_cv_folds(samples, folds)
        for ridge_lambda in ridge_lambdas:
            errors = []
            for train, valid in fold_positions:
                model = Ridge(alpha=ridge_lambda, fit_intercept=False).fit(labels[train], features[train])
                residual = features[valid] - model.predict(labels[valid])
                errors.append(np.mean(residual * residual))
            error = float(np.mean(errors))
            logger.debug("Ridge lambda %.0e: held-out MSE %.6g", ridge_lambda, error)
            if error < best_error:
                best_lambda, best_error = float(ridge_lambda), error

    model = Ridge(alpha=best_lambda, fit_intercept=False).fit(labels, features)
    H = np.asarray(model.coef_, dtype=float).reshape(channels, 2)

    residual = features - labels @ H.T
    Q = np.maximum(np.var(residual, axis=0), MIN_OBSERVATION_NOISE)
    W = np.cov(np.diff(labels, axis=0), rowvar=False)

    return ObservationModel(H, Q, np.atleast_2d(W), best_lambda)


def _gain_update(H: np.ndarray, Q: np.ndarray, P_prior: np.ndarray) -> np.ndarray:
    # K = P- H^T (H P- H^T + Q)^-1 = P- (I + H^T Q^-1 H P-)^-1 H^T Q^-1; only a state-sized solve
    HtQinv = H.T / Q[None, :]
    inner = np.eye(P_prior.shape[0]) + HtQinv @ H @ P_prior
    return P_prior @ np.linalg.solve(inner, HtQinv)


def steady_state_gain(
    H: np.ndarray,
    Q: np.ndarray,
    W: np.ndarray,
    alpha: float,
    P_init: typing.Optional[np.ndarray] = None,
    tolerance: float = GAIN_TOLERANCE,
    max_iterations: int = MAX_GAIN_ITERATIONS,
) -> np.ndarray:
    """
    Iterates the Kalman covariance recursion with ``A = alpha * I`` until the gain stops changing.

    ``P- = alpha^2 P + W``, ``K = P- H^T (H P- H^T + Q)^-1``, ``P = (I - K H) P-``.

    :param H: Features x state observation matrix.
    :param Q: Diagonal of the observation noise covariance.
    :param W: State noise covariance.
    :param P_init: Initial posterior covariance; defaults to ``W``.

    :raise KalmanConvergenceError: If the max-abs change of ``K`` is still above :attr:`tolerance`
                                   after :attr:`max_iterations` iterations.

    >>> steady_state_gain(np.ones((1, 1)), np.ones(1), np.ones((1, 1)), 0.0).round(12)
    array([[0.5]])
    """
    H = np.asarray(H, dtype=float)
    Q = np.asarray(Q, dtype=float).ravel()
    W = np.asarray(W, dtype=float)
    if np.any(Q <= 0):
        raise ValueError("observation noise must be positive")

    state_size = H.shape[1]
    identity = np.eye(state_size)
    P = W.copy() if P_init is None else np.asarray(P_init, dtype=float)
    K = np.zeros((state_size, H.shape[0]))
    delta = np.inf

    for _ in range(max_iterations):
        P_prior = alpha * alpha * P + W
        K_next = _gain_update(H, Q, P_prior)
        P = (identity - K_next @ H) @ P_prior
        delta = float(np.max(np.abs(K_next - K)))
        K = K_next
        if delta < tolerance:
            return K

    raise KalmanConvergenceError("steady-state gain did not converge, last delta {:.3e}".format(delta), delta)


def fit_kalman(
    features: np.ndarray,
    labels: np.ndarray,
    alpha: float = ALPHA_VALUES[0],
    gain: float = 1.0,
    ridge_lambdas: typing.Sequence[float] = RIDGE_LAMBDAS,
) -> KalmanModel:
    """
    Fits the observation model and the steady-state gain in one go.
    """
    observation = fit_observation_model(features, labels, ridge_lambdas)
    K = steady_state_gain(observation.H, observation.Q, observation.W, alpha)
    model = KalmanModel(observation.H, K, alpha, gain, observation.W, observation.Q, observation.ridge_lambda)
    logger.info("Fitted %r on %d samples", model, features.shape[0])
    return model


def kalman_step(model: KalmanModel, state: KalmanState, x_t: np.ndarray) -> typing.Tuple[np.ndarray, KalmanState]:
    """
    One decoding step, ``v_t = g (A v_{t-1} + K (x_t - H A v_{t-1}))``.

    The returned state carries ``v_t / g`` so the gain only scales the output.

    :raise DecodeError: If :attr:`x_t` has the wrong length or non-finite values.
    """
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape != (model.feature_count,) or not np.all(np.isfinite(x_t)):
        raise DecodeError("Kalman input must be {} finite features".format(model.feature_count))

    predicted = model.alpha * state.v_prev
    ungained = predicted + model.K @ (x_t - model.H @ predicted)

    return model.gain * ungained, KalmanState(ungained)


def save_kalman(model: KalmanModel, path: typing.Union[str, Path]) -> None:
    np.savez(
        Path(path),
        kind=np.array("kalman"),
        version=np.array(FORMAT_VERSION),
        H=model.H,
        K=model.K,
        W=model.W,
        Q=model.Q,
        alpha=np.array(model.alpha),
        gain=np.array(model.gain),
        ridge_lambda=np.array(model.ridge_lambda),
    )


def load_kalman(path: typing.Union[str, Path]) -> KalmanModel:
    """
    :raise ModelFormatError: If the file is not a Kalman model of a supported version.
    """
    with np.load(Path(path), allow_pickle=False) as data:
        if str(data.get("kind", "")) != "kalman" or int(data.get("version", -1)) != FORMAT_VERSION:
            raise ModelFormatError("{} is not a version {} Kalman model".format(path, FORMAT_VERSION))
        return KalmanModel(
            data["H"],
            data["K"],
            float(data["alpha"]),
            float(data["gain"]),
            data["W"],
            data["Q"],
            float(data["ridge_lambda"]),
        )
