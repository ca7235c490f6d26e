import pytest
import time
import typing

import numpy as np

from retrodecode.datamodel import Block
from retrodecode.kalman import DecodeError, ModelFormatError
from retrodecode.optim import Adam
from retrodecode.utils import make_rng
from retrodecode.rnn import (
    LstmState,
    LstmWeights,
    TrainConfig,
    TrainError,
    decode_heads,
    evaluate,
    forward,
    init_weights,
    load_rnn,
    loss_and_gradients,
    lstm_step,
    make_sequences,
    save_rnn,
    train_rnn,
    training_targets,
)


def linear_block(block_id: int, ticks: int = 120, features: int = 4, seed: int = 0) -> Block:
    rng = np.random.default_rng(seed + block_id)
    labels = rng.uniform(-0.7, 0.7, size=(ticks, 2))
    mixing = np.random.default_rng(seed).normal(size=(features, 2))
    return Block(block_id, labels @ mixing.T, labels, np.arange(ticks) * 20)


def test_adam_single_step():
    params = {"w": np.array([1.0, -2.0])}
    optimizer = Adam(learning_rate=0.1)

    optimizer.step(params, {"w": np.array([0.5, -3.0])})

    # The first bias-corrected step has magnitude learning_rate against the gradient sign.
    np.testing.assert_allclose(params["w"], [0.9, -1.9], atol=1e-6)
    assert optimizer.steps == 1


def test_adam_minimizes_quadratic():
    params = {"w": np.array([3.0, -4.0])}
    optimizer = Adam(learning_rate=0.05)

    for _ in range(2000):
        optimizer.step(params, {"w": 2.0 * params["w"]})

    np.testing.assert_allclose(params["w"], 0.0, atol=0.1)


def test_adam_rejects_bad_hyperparameters():
    with pytest.raises(ValueError):
        Adam(learning_rate=0.0)
    with pytest.raises(ValueError):
        Adam(beta1=1.0)


@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_central_differences(seed):
    rng = np.random.default_rng(seed)
    hidden, features, batch, steps = int(rng.integers(1, 6)), int(rng.integers(1, 7)), 3, 5
    params = init_weights(features, hidden, rng).params()
    params["b"] += rng.normal(0.0, 0.3, size=params["b"].shape)
    params["c"] += rng.normal(0.0, 0.3, size=3)
    inputs = rng.normal(size=(batch, steps, features))
    targets = np.column_stack([rng.uniform(-1.0, 1.0, size=(batch, 2)), rng.uniform(0.0, 1.0, size=batch)])
    mask = (rng.random((batch, hidden)) >= 0.3) / 0.7

    _, grads = loss_and_gradients(params, inputs, targets, mask)

    step = 1e-5
    for name, value in params.items():
        numeric = np.zeros_like(value)
        for position in np.ndindex(value.shape):
            original = value[position]
            value[position] = original + step
            upper, _ = loss_and_gradients(params, inputs, targets, mask)
            value[position] = original - step
            lower, _ = loss_and_gradients(params, inputs, targets, mask)
            value[position] = original
            numeric[position] = (upper - lower) / (2.0 * step)

        difference = np.linalg.norm(grads[name] - numeric)
        scale = max(np.linalg.norm(grads[name]) + np.linalg.norm(numeric), 1e-10)
        assert difference / scale < 1e-4, name


def test_lstm_step_matches_batched_forward():
    rng = np.random.default_rng(1)
    weights = init_weights(4, 6, rng)
    inputs = rng.normal(size=(1, 7, 4))

    state = LstmState.zero(6)
    for x_t in inputs[0]:
        state = lstm_step(weights, state, x_t)
    outputs, _ = forward(weights.params(), inputs)

    z = weights.V @ state.h + weights.c
    np.testing.assert_allclose(outputs[0, :2], np.tanh(z[:2]), atol=1e-12)
    np.testing.assert_allclose(decode_heads(weights, state.h, 1.0), outputs[0, 2] * outputs[0, :2], atol=1e-12)


def zero_weights(features: int, hidden: int) -> typing.Dict[str, np.ndarray]:
    return {
        "W": np.zeros((4 * hidden, features)),
        "U": np.zeros((4 * hidden, hidden)),
        "b": np.zeros(4 * hidden),
        "V": np.zeros((3, hidden)),
        "c": np.zeros(3),
    }


def test_lstm_step_with_zero_weights():
    weights = LstmWeights(zero_weights(2, 1))

    from_rest = lstm_step(weights, LstmState.zero(1), np.array([0.3, -0.2]))
    from_memory = lstm_step(weights, LstmState(np.zeros(1), np.ones(1)), np.zeros(2))

    np.testing.assert_array_equal(from_rest.c, 0.0)
    np.testing.assert_array_equal(from_rest.h, 0.0)
    np.testing.assert_allclose(from_memory.c, [0.5])
    np.testing.assert_allclose(from_memory.h, [0.231059], atol=1e-6)


def test_open_forget_gate_keeps_memory():
    params = zero_weights(2, 3)
    params["b"][:3] = 20.0
    weights = LstmWeights(params)
    memory = np.array([0.8, -1.5, 3.0])

    state = lstm_step(weights, LstmState(np.zeros(3), memory), np.zeros(2))

    np.testing.assert_allclose(state.c, memory, atol=1e-8)


def test_hidden_state_is_bounded():
    rng = np.random.default_rng(7)
    params = init_weights(5, 6, rng).params()
    params = {name: 10.0 * value for name, value in params.items()}
    weights = LstmWeights(params)

    state = LstmState.zero(6)
    for x_t in rng.normal(0.0, 50.0, size=(200, 5)):
        state = lstm_step(weights, state, x_t)
        assert np.all(np.abs(state.h) <= 1.0)


def test_decode_heads_by_hand():
    params = zero_weights(2, 3)
    h = np.array([0.4, -0.9, 0.1])

    np.testing.assert_array_equal(decode_heads(LstmWeights(params), h, 2.0), 0.0)

    params["c"] = np.array([1.0, 0.0, 0.0])
    np.testing.assert_allclose(decode_heads(LstmWeights(params), h, 2.0), [0.761594, 0.0], atol=1e-6)

    params["c"] = np.array([5.0, -5.0, -30.0])
    assert np.all(np.abs(decode_heads(LstmWeights(params), h, 7.0)) < 1e-12 * 7.0)


def test_decode_heads_scales_with_gain():
    weights = init_weights(3, 4, np.random.default_rng(2))
    h = np.random.default_rng(3).normal(size=4)

    np.testing.assert_allclose(decode_heads(weights, h, 5.0), 5.0 * decode_heads(weights, h, 1.0))


def test_lstm_step_rejects_bad_input():
    weights = init_weights(3, 4, np.random.default_rng(2))

    with pytest.raises(DecodeError):
        lstm_step(weights, LstmState.zero(4), np.zeros(2))
    with pytest.raises(DecodeError):
        lstm_step(weights, LstmState.zero(4), np.array([0.0, np.nan, 0.0]))


def test_weights_are_immutable_and_validated():
    weights = init_weights(3, 4, np.random.default_rng(0))

    assert weights.W_q("o").shape == (4, 3)
    assert weights.b_q("f").tolist() == [1.0] * 4
    with pytest.raises(ValueError):
        weights.W[0, 0] = 1.0

    params = weights.params()
    params["V"] = np.zeros((2, 4))
    with pytest.raises(ValueError):
        LstmWeights(params)


def test_training_targets():
    targets = training_targets(np.array([[3.0, 4.0], [0.0, 0.0], [0.3, 0.4]]))

    np.testing.assert_allclose(targets, [[0.6, 0.8, 1.0], [0.0, 0.0, 0.0], [0.6, 0.8, 0.5]])


def test_windows_never_cross_blocks():
    first = linear_block(1, ticks=20)
    second = linear_block(2, ticks=10)

    sequences = make_sequences([first, second], unroll_steps=5)

    assert len(sequences) == (20 - 4) + (10 - 4)
    inputs, targets = sequences.batch(np.arange(len(sequences)))
    np.testing.assert_array_equal(inputs[0], first.features[:5])
    np.testing.assert_array_equal(inputs[16], second.features[:5])
    np.testing.assert_array_equal(inputs[-1], second.features[5:])
    np.testing.assert_allclose(targets[-1], training_targets(second.labels)[-1])


def test_short_block_gives_no_windows():
    assert len(make_sequences([linear_block(1, ticks=10)], unroll_steps=15)) == 0
    assert len(make_sequences([], unroll_steps=15)) == 0


def test_zero_epochs_returns_initial_weights():
    train = make_sequences([linear_block(1)])
    config = TrainConfig(hidden_units=5, epochs=0, seed=4)

    weights = train_rnn(train, make_sequences([]), config)

    assert weights == init_weights(4, 5, make_rng(4))


def test_training_is_deterministic():
    train = make_sequences([linear_block(1), linear_block(2)])
    valid = make_sequences([linear_block(3)])
    config = TrainConfig(hidden_units=6, batch_size=32, epochs=2, seed=9)

    assert train_rnn(train, valid, config) == train_rnn(train, valid, config)


def test_training_reduces_loss():
    train = make_sequences([linear_block(block_id, ticks=200) for block_id in (1, 2)])
    config = TrainConfig(hidden_units=8, batch_size=32, learning_rate=0.01, dropout=0.0, epochs=30, seed=2)
    initial = evaluate(train_rnn(train, train, TrainConfig(hidden_units=8, epochs=0, seed=2)), train)

    trained = train_rnn(train, train, config)

    assert evaluate(trained, train) < 0.5 * initial


@pytest.mark.slow
def test_memorizes_small_set():
    rng = np.random.default_rng(0)
    features = rng.normal(size=(32 * 15, 4))
    labels = rng.uniform(-0.8, 0.8, size=(32 * 15, 2))
    blocks = [
        Block(block_id + 1, features[15 * block_id : 15 * (block_id + 1)], labels[15 * block_id : 15 * (block_id + 1)], np.arange(15) * 20)
        for block_id in range(32)
    ]
    train = make_sequences(blocks)
    assert len(train) == 32
    config = TrainConfig(hidden_units=64, batch_size=32, learning_rate=0.01, dropout=0.0, epochs=2000, seed=1)

    weights = train_rnn(train, train, config)

    assert evaluate(weights, train) / 3.0 < 1e-3


def test_train_errors():
    config = TrainConfig(hidden_units=4, epochs=1)

    with pytest.raises(TrainError):
        train_rnn(make_sequences([]), make_sequences([]), config)
    with pytest.raises(TrainError):
        train_rnn(make_sequences([linear_block(1)], unroll_steps=5), make_sequences([]), config)
    with pytest.raises(TrainError):
        evaluate(init_weights(4, 4, np.random.default_rng(0)), make_sequences([]))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(dropout=1.0)
    with pytest.raises(ValueError):
        TrainConfig(hidden_units=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)


def test_save_and_load(tmp_path):
    weights = init_weights(5, 3, np.random.default_rng(8))
    path = tmp_path / "lstm.npz"

    save_rnn(weights, path)

    assert load_rnn(path) == weights


def test_load_rejects_other_files(tmp_path):
    path = tmp_path / "kalman.npz"
    np.savez(path, kind=np.array("kalman"), version=np.array(1))

    with pytest.raises(ModelFormatError):
        load_rnn(path)


@pytest.mark.slow
def test_step_latency():
    weights = init_weights(384, 50, np.random.default_rng(0))
    inputs = np.random.default_rng(1).normal(size=(10_000, 384))
    state = LstmState.zero(50)

    timings = []
    for x_t in inputs:
        start = time.perf_counter()
        state = lstm_step(weights, state, x_t)
        decode_heads(weights, state.h, 1.0)
        timings.append(time.perf_counter() - start)

    assert np.median(timings) < 1e-3
