"""
The step interface the simulator drives: every decoder is immutable, hands out a fresh state per
simulation and maps ``(state, features, cursor_to_target)`` to ``(velocity, state)``.

Learned decoders ignore ``cursor_to_target``; the reference decoders use only it.
"""

from __future__ import annotations

import abc
import math
import typing

import numpy as np

from . import kalman, rnn

DEFAULT_TICK_S = 0.02


class DecoderModel(abc.ABC):
    """
    Abstract decoder. Implementations are immutable and safe to share between concurrent
    simulations; all per-run memory lives in the state object.
    """

    kind: str = ""

    @property
    @abc.abstractmethod
    def gain(self) -> float:
        pass

    @property
    def alpha(self) -> typing.Optional[float]:
        """
        :getter: The smoothing factor, or ``None`` for decoders without one.
        """
        return None

    @property
    def feature_count(self) -> typing.Optional[int]:
        """
        :getter: Expected feature vector length, or ``None`` if the decoder ignores features.
        """
        return None

    @abc.abstractmethod
    def initial_state(self) -> typing.Any:
        pass

    @abc.abstractmethod
    def step(
        self, state: typing.Any, x_t: np.ndarray, cursor_to_target: np.ndarray
    ) -> typing.Tuple[np.ndarray, typing.Any]:
        pass

    @abc.abstractmethod
    def with_params(self, gain: typing.Optional[float] = None, alpha: typing.Optional[float] = None) -> DecoderModel:
        pass

    def __repr__(self) -> str:
        return "{}(gain={:.4g}, alpha={})".format(self.__class__.__name__, self.gain, self.alpha)


class KalmanDecoder(DecoderModel):
    kind = "kalman"

    def __init__(self, model: kalman.KalmanModel) -> None:
        self.__model = model

    @property
    def model(self) -> kalman.KalmanModel:
        return self.__model

    @property
    def gain(self) -> float:
        return self.__model.gain

    @property
    def alpha(self) -> float:
        return self.__model.alpha

    @property
    def feature_count(self) -> int:
        return self.__model.feature_count

    def initial_state(self) -> kalman.KalmanState:
        return kalman.KalmanState.zero()

    def step(self, state, x_t, cursor_to_target):
        return kalman.kalman_step(self.__model, state, x_t)

    def with_params(self, gain=None, alpha=None) -> KalmanDecoder:
        return KalmanDecoder(self.__model.with_params(gain, alpha))


class RnnDecoder(DecoderModel):
    kind = "rnn"

    def __init__(self, weights: rnn.LstmWeights, gain: float = 1.0) -> None:
        if not gain > 0:
            raise ValueError("gain must be positive, got {}".format(gain))
        self.__weights = weights
        self.__gain = float(gain)

    @property
    def weights(self) -> rnn.LstmWeights:
        return self.__weights

    @property
    def gain(self) -> float:
        return self.__gain

    @property
    def feature_count(self) -> int:
        return self.__weights.feature_count

    def initial_state(self) -> rnn.LstmState:
        return rnn.LstmState.zero(self.__weights.hidden_units)

    def step(self, state, x_t, cursor_to_target):
        state = rnn.lstm_step(self.__weights, state, x_t)
        return rnn.decode_heads(self.__weights, state.h, self.__gain), state

    def with_params(self, gain=None, alpha=None) -> RnnDecoder:
        return RnnDecoder(self.__weights, self.__gain if gain is None else gain)


class OracleDecoder(DecoderModel):
    """
    Moves straight toward the target center at ``gain`` workspace units per second, stopping on the
    center instead of overshooting it.
    """

    kind = "oracle"

    def __init__(self, gain: float = 1.0, tick_s: float = DEFAULT_TICK_S) -> None:
        if not gain > 0:
            raise ValueError("gain must be positive, got {}".format(gain))
        self.__gain = float(gain)
        self.__tick_s = float(tick_s)

    @property
    def gain(self) -> float:
        return self.__gain

    def initial_state(self) -> None:
        return None

    def step(self, state, x_t, cursor_to_target):
        cursor_to_target = np.asarray(cursor_to_target, dtype=float)
        distance = math.hypot(cursor_to_target[0], cursor_to_target[1])
        if distance == 0.0:
            return np.zeros(2), state
        speed = min(self.__gain, distance / self.__tick_s)
        return cursor_to_target * (speed / distance), state

    def with_params(self, gain=None, alpha=None) -> OracleDecoder:
        return OracleDecoder(self.__gain if gain is None else gain, self.__tick_s)


class NullDecoder(DecoderModel):
    """
    Always decodes zero velocity.
    """

    kind = "null"

    def __init__(self, gain: float = 1.0) -> None:
        self.__gain = float(gain)

    @property
    def gain(self) -> float:
        return self.__gain

    def initial_state(self) -> None:
        return None

    def step(self, state, x_t, cursor_to_target):
        return np.zeros(2), state

    def with_params(self, gain=None, alpha=None) -> NullDecoder:
        return NullDecoder(self.__gain if gain is None else gain)
