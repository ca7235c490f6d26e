"""
LSTM decoder written directly in numpy.

A single LSTM cell with a forget gate feeds three dense heads: ``tanh`` heads for the x and y
direction and a ``sigmoid`` head for the normalized distance to target. The decoded velocity is
``g * d * (v_x, v_y)``. Training uses truncated backpropagation through time over fixed-length
windows, inverted dropout on the last hidden state and Adam.
"""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path
import typing

import numpy as np

from . import utils
from .datamodel import Block
from .kalman import DecodeError, ModelFormatError
from .optim import Adam

logger = logging.getLogger(__name__)

GATES = ("f", "i", "o", "u")
HEADS = ("x", "y", "d")
FORMAT_VERSION = 1

Params = typing.Dict[str, np.ndarray]


class TrainError(utils.RetrodecodeError):
    pass


def sigmoid(values: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * values))


class LstmWeights:
    """
    Weights of the cell and of the three heads.

    Gate parameters are stored stacked in the order forget, input, output, update: ``W`` is
    4·hidden x features, ``U`` is 4·hidden x hidden and ``b`` has 4·hidden entries. The heads are
    ``V`` (3 x hidden) and ``c`` (3), in the order x, y, d. Per-gate views are available as
    :func:`W_q`, :func:`U_q` and :func:`b_q`.

    :class:`LstmWeights` is immutable.
    """

    def __init__(self, params: typing.Mapping[str, np.ndarray]) -> None:
        self.__params = {name: np.array(params[name], dtype=float) for name in ("W", "U", "b", "V", "c")}
        for value in self.__params.values():
            value.setflags(write=False)

        hidden = self.__params["U"].shape[1]
        features = self.__params["W"].shape[1]
        expected = {
            "W": (4 * hidden, features),
            "U": (4 * hidden, hidden),
            "b": (4 * hidden,),
            "V": (3, hidden),
            "c": (3,),
        }
        for name, shape in expected.items():
            if self.__params[name].shape != shape:
                raise ValueError("{} must have shape {}, got {}".format(name, shape, self.__params[name].shape))
            if not np.all(np.isfinite(self.__params[name])):
                raise ValueError("{} has non-finite values".format(name))

    @property
    def hidden_units(self) -> int:
        return int(self.__params["U"].shape[1])

    @property
    def feature_count(self) -> int:
        return int(self.__params["W"].shape[1])

    def params(self) -> Params:
        """
        :return: Writable copies of the stacked parameter arrays.
        """
        return {name: value.copy() for name, value in self.__params.items()}

    def __gate(self, name: str, gate: str) -> np.ndarray:
        hidden = self.hidden_units
        start = GATES.index(gate) * hidden
        return self.__params[name][start : start + hidden]

    def W_q(self, gate: str) -> np.ndarray:
        return self.__gate("W", gate)

    def U_q(self, gate: str) -> np.ndarray:
        return self.__gate("U", gate)

    def b_q(self, gate: str) -> np.ndarray:
        return self.__gate("b", gate)

    @property
    def W(self) -> np.ndarray:
        return self.__params["W"]

    @property
    def U(self) -> np.ndarray:
        return self.__params["U"]

    @property
    def b(self) -> np.ndarray:
        return self.__params["b"]

    @property
    def V(self) -> np.ndarray:
        return self.__params["V"]

    @property
    def c(self) -> np.ndarray:
        return self.__params["c"]

    def __eq__(self, other) -> bool:
        return all(np.array_equal(self.__params[name], other.params()[name]) for name in self.__params)

    def __repr__(self) -> str:
        return "LstmWeights(features={}, hidden={})".format(self.feature_count, self.hidden_units)


class LstmState(typing.NamedTuple):
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zero(cls, hidden_units: int) -> LstmState:
        return cls(np.zeros(hidden_units), np.zeros(hidden_units))


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """
    Training hyperparameters. Defaults are 50 hidden units, batches of 512 windows of 15 steps,
    Adam at 0.001 and 50% dropout.
    """

    hidden_units: int = 50
    batch_size: int = 512
    learning_rate: float = 0.001
    unroll_steps: int = 15
    dropout: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 10
    seed: int = 0
    max_batches_per_epoch: typing.Optional[int] = None
    max_validation_windows: int = 20_000

    def __post_init__(self) -> None:
        if self.hidden_units < 1 or self.batch_size < 1 or self.unroll_steps < 1:
            raise ValueError("hidden_units, batch_size and unroll_steps must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1), got {}".format(self.dropout))
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.max_batches_per_epoch is not None and self.max_batches_per_epoch < 1:
            raise ValueError("max_batches_per_epoch must be positive")


# Inference


def lstm_step(weights: LstmWeights, state: LstmState, x_t: np.ndarray) -> LstmState:
    """
    One LSTM cell update::

        f = sigmoid(W_f x + U_f h + b_f)    i = sigmoid(W_i x + U_i h + b_i)
        o = sigmoid(W_o x + U_o h + b_o)    u = tanh(W_u x + U_u h + b_u)
        c' = f * c + i * u                  h' = o * tanh(c')

    :raise DecodeError: If :attr:`x_t` has the wrong length or non-finite values.
    """
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape != (weights.feature_count,) or not np.all(np.isfinite(x_t)):
        raise DecodeError("LSTM input must be {} finite features".format(weights.feature_count))

    hidden = weights.hidden_units
    activation = weights.W @ x_t + weights.U @ state.h + weights.b
    gates = sigmoid(activation[: 3 * hidden])
    update = np.tanh(activation[3 * hidden :])

    c = gates[:hidden] * state.c + gates[hidden : 2 * hidden] * update
    h = gates[2 * hidden :] * np.tanh(c)

    return LstmState(h, c)


def decode_heads(weights: LstmWeights, h_t: np.ndarray, gain: float) -> np.ndarray:
    """
    ``g * d * (v_x, v_y)`` with ``v_x, v_y = tanh(...)`` and ``d = sigmoid(...)``.
    """
    z = weights.V @ h_t + weights.c
    direction = np.tanh(z[:2])
    distance = sigmoid(z[2])

    return gain * distance * direction


# Training data


def training_targets(labels: np.ndarray) -> np.ndarray:
    """
    Splits ticks x 2 labels into ``(unit direction x, unit direction y, distance clipped to [0, 1])``.
    Zero labels get a zero direction.
    """
    labels = np.asarray(labels, dtype=float)
    distance = np.hypot(labels[:, 0], labels[:, 1])
    safe = np.where(distance > 0, distance, 1.0)
    direction = np.where(distance[:, None] > 0, labels / safe[:, None], 0.0)

    return np.column_stack([direction, np.clip(distance, 0.0, 1.0)])


class SequenceSet:
    """
    Fixed-length windows over the ticks of a set of blocks, stride one tick, never crossing a block
    boundary. Each window is labeled with the training target of its last tick.

    Windows are kept as end positions into the concatenated block data.
    """

    def __init__(self, features: np.ndarray, targets: np.ndarray, ends: np.ndarray, unroll_steps: int) -> None:
        self.__features = np.asarray(features, dtype=float)
        self.__targets = np.asarray(targets, dtype=float)
        self.__ends = np.asarray(ends, dtype=np.int64)
        self.__offsets = np.arange(-unroll_steps + 1, 1)
        self.unroll_steps = unroll_steps

    def __len__(self) -> int:
        return int(self.__ends.shape[0])

    @property
    def feature_count(self) -> int:
        return int(self.__features.shape[1])

    def batch(self, windows: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
        """
        :return: Inputs (windows x steps x features) and targets (windows x 3).
        """
        ends = self.__ends[np.asarray(windows, dtype=np.int64)]
        return self.__features[ends[:, None] + self.__offsets[None, :]], self.__targets[ends]


def make_sequences(blocks: typing.Sequence[Block], unroll_steps: int = 15) -> SequenceSet:
    if len(blocks) == 0:
        return SequenceSet(np.zeros((0, 1)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64), unroll_steps)

    features = np.concatenate([block.features for block in blocks], axis=0)
    targets = np.concatenate([training_targets(block.labels) for block in blocks], axis=0)

    ends = []
    offset = 0
    for block in blocks:
        ends.append(np.arange(offset + unroll_steps - 1, offset + len(block)))
        offset += len(block)

    return SequenceSet(features, targets, np.concatenate(ends), unroll_steps)


def _uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape: typing.Tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_weights(feature_count: int, hidden_units: int, rng: np.random.Generator) -> LstmWeights:
    """
    Glorot-uniform input and head weights, orthogonal recurrent weights per gate, forget-gate bias 1.
    """
    W = np.concatenate([_uniform(rng, feature_count, hidden_units, (hidden_units, feature_count)) for _ in GATES])
    U_blocks = []
    for _ in GATES:
        q, r = np.linalg.qr(rng.normal(size=(hidden_units, hidden_units)))
        U_blocks.append(q * np.sign(np.diag(r))[None, :])
    b = np.zeros(4 * hidden_units)
    b[:hidden_units] = 1.0

    V = _uniform(rng, hidden_units, 1, (3, hidden_units))

    return LstmWeights({"W": W, "U": np.concatenate(U_blocks), "b": b, "V": V, "c": np.zeros(3)})


# Loss and gradients


def forward(
    params: typing.Mapping[str, np.ndarray], inputs: np.ndarray, dropout_mask: typing.Optional[np.ndarray] = None
) -> typing.Tuple[np.ndarray, typing.Dict[str, typing.Any]]:
    """
    Runs a batch of windows from a zero state.

    :param inputs: Windows x steps x features.
    :param dropout_mask: Windows x hidden multipliers applied to the last hidden state.
    :return: Head outputs (windows x 3) and the cache :func:`backward` needs.
    """
    batch, steps, _ = inputs.shape
    hidden = params["U"].shape[1]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    cache: typing.Dict[str, typing.Any] = {"steps": []}

    for t in range(steps):
        activation = inputs[:, t] @ params["W"].T + h @ params["U"].T + params["b"]
        gates = sigmoid(activation[:, : 3 * hidden])
        update = np.tanh(activation[:, 3 * hidden :])
        f, i, o = gates[:, :hidden], gates[:, hidden : 2 * hidden], gates[:, 2 * hidden :]
        c_next = f * c + i * update
        tanh_c = np.tanh(c_next)
        h_next = o * tanh_c
        cache["steps"].append((h, c, f, i, o, update, tanh_c))
        h, c = h_next, c_next

    dropped = h if dropout_mask is None else h * dropout_mask
    z = dropped @ params["V"].T + params["c"]
    outputs = np.column_stack([np.tanh(z[:, 0]), np.tanh(z[:, 1]), sigmoid(z[:, 2])])
    cache.update(inputs=inputs, dropped=dropped, dropout_mask=dropout_mask)

    return outputs, cache


def mse_loss(outputs: np.ndarray, targets: np.ndarray) -> float:
    """
    Mean squared error of each head over the batch, summed over the three heads.
    """
    error = outputs - targets
    return float(np.sum(np.mean(error * error, axis=0)))


def backward(
    params: typing.Mapping[str, np.ndarray], outputs: np.ndarray, targets: np.ndarray, cache: typing.Dict[str, typing.Any]
) -> Params:
    batch = outputs.shape[0]
    hidden = params["U"].shape[1]
    inputs = cache["inputs"]

    d_outputs = 2.0 * (outputs - targets) / batch
    d_z = np.column_stack(
        [
            d_outputs[:, 0] * (1.0 - outputs[:, 0] ** 2),
            d_outputs[:, 1] * (1.0 - outputs[:, 1] ** 2),
            d_outputs[:, 2] * outputs[:, 2] * (1.0 - outputs[:, 2]),
        ]
    )
    grads: Params = {
        "V": d_z.T @ cache["dropped"],
        "c": d_z.sum(axis=0),
        "W": np.zeros_like(params["W"]),
        "U": np.zeros_like(params["U"]),
        "b": np.zeros_like(params["b"]),
    }

    d_h = d_z @ params["V"]
    if cache["dropout_mask"] is not None:
        d_h = d_h * cache["dropout_mask"]
    d_c = np.zeros((batch, hidden))

    for t in reversed(range(len(cache["steps"]))):
        h_prev, c_prev, f, i, o, update, tanh_c = cache["steps"][t]
        d_o = d_h * tanh_c
        d_c = d_c + d_h * o * (1.0 - tanh_c * tanh_c)
        d_activation = np.concatenate(
            [
                d_c * c_prev * f * (1.0 - f),
                d_c * update * i * (1.0 - i),
                d_o * o * (1.0 - o),
                d_c * i * (1.0 - update * update),
            ],
            axis=1,
        )
        grads["W"] += d_activation.T @ inputs[:, t]
        grads["U"] += d_activation.T @ h_prev
        grads["b"] += d_activation.sum(axis=0)
        d_h = d_activation @ params["U"]
        d_c = d_c * f

    return grads


def loss_and_gradients(
    params: typing.Mapping[str, np.ndarray],
    inputs: np.ndarray,
    targets: np.ndarray,
    dropout_mask: typing.Optional[np.ndarray] = None,
) -> typing.Tuple[float, Params]:
    """
    Loss of a batch and its gradient with respect to every parameter array, by backpropagation
    through all steps of the window.
    """
    outputs, cache = forward(params, inputs, dropout_mask)
    return mse_loss(outputs, targets), backward(params, outputs, targets, cache)


def evaluate(weights: LstmWeights, sequences: SequenceSet, batch_size: int = 512, limit: typing.Optional[int] = None) -> float:
    """
    Dropout-free loss over the first :attr:`limit` windows of :attr:`sequences`.
    """
    count = len(sequences) if limit is None else min(limit, len(sequences))
    if count == 0:
        raise TrainError("no windows to evaluate")

    params = weights.params()
    total = 0.0
    for start in range(0, count, batch_size):
        windows = np.arange(start, min(start + batch_size, count))
        inputs, targets = sequences.batch(windows)
        outputs, _ = forward(params, inputs)
        error = outputs - targets
        total += float(np.sum(error * error))

    return total / count


def train_rnn(train: SequenceSet, valid: SequenceSet, config: TrainConfig = TrainConfig()) -> LstmWeights:
    """
    Trains the decoder and returns the weights of the epoch with the lowest validation loss.

    :param train: Training windows.
    :param valid: Validation windows; when empty the training windows are used for selection.
    :param config: Hyperparameters; the result depends only on the data and :attr:`config`.

    :raise TrainError: If there are no training windows or the loss becomes non-finite.
    """
    if len(train) == 0:
        raise TrainError("no training windows")
    if train.unroll_steps != config.unroll_steps:
        raise TrainError("windows have {} steps, config wants {}".format(train.unroll_steps, config.unroll_steps))

    rng = utils.make_rng(config.seed)
    weights = init_weights(train.feature_count, config.hidden_units, rng)
    if config.epochs == 0:
        return weights

    selection = valid if len(valid) > 0 else train
    if selection is train:
        logger.warning("No validation windows; selecting epochs by training loss")

    params = weights.params()
    optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    best_weights, best_loss = weights, evaluate(weights, selection, config.batch_size, config.max_validation_windows)

    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        batches = range(0, len(train), config.batch_size)
        if config.max_batches_per_epoch is not None:
            batches = batches[: config.max_batches_per_epoch]

        for start in batches:
            inputs, targets = train.batch(order[start : start + config.batch_size])
            mask = None
            if config.dropout > 0:
                keep = rng.random((inputs.shape[0], config.hidden_units)) >= config.dropout
                mask = keep / (1.0 - config.dropout)
            loss, grads = loss_and_gradients(params, inputs, targets, mask)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(grad)) for grad in grads.values()):
                raise TrainError("training diverged in epoch {}".format(epoch))
            optimizer.step(params, grads)

        current = LstmWeights(params)
        validation_loss = evaluate(current, selection, config.batch_size, config.max_validation_windows)
        logger.debug("Epoch %d: training loss %.6g, validation loss %.6g", epoch, loss, validation_loss)
        if validation_loss < best_loss:
            best_weights, best_loss = current, validation_loss

    logger.info("Trained LSTM (%d hidden) for %d epochs, best validation loss %.6g", config.hidden_units, config.epochs, best_loss)
    return best_weights


# Files


def save_rnn(weights: LstmWeights, path: typing.Union[str, Path]) -> None:
    np.savez(
        Path(path),
        kind=np.array("lstm"),
        version=np.array(FORMAT_VERSION),
        shape=np.array([weights.feature_count, weights.hidden_units]),
        **weights.params(),
    )


def load_rnn(path: typing.Union[str, Path]) -> LstmWeights:
    """
    :raise ModelFormatError: If the file is not an LSTM model of a supported version.
    """
    with np.load(Path(path), allow_pickle=False) as data:
        if str(data.get("kind", "")) != "lstm" or int(data.get("version", -1)) != FORMAT_VERSION:
            raise ModelFormatError("{} is not a version {} LSTM model".format(path, FORMAT_VERSION))
        weights = LstmWeights({name: data[name] for name in ("W", "U", "b", "V", "c")})
        if [weights.feature_count, weights.hidden_units] != [int(value) for value in data["shape"]]:
            raise ModelFormatError("{}: shape tag does not match the stored arrays".format(path))
        return weights
