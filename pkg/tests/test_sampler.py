import pytest
import math

import numpy as np

from retrodecode.datamodel import Block, LabeledSample
from retrodecode.sampler import EmptyPoolError, bin_of, build_index, draw


def sample(label, value: float = 0.0, tick_ms: int = 0) -> LabeledSample:
    return LabeledSample(np.array([value, -value]), label, 1, tick_ms)


@pytest.fixture
def random_pool():
    rng = np.random.default_rng(9)
    labels = rng.uniform(-1.0, 1.0, size=(2000, 2))
    features = rng.normal(size=(2000, 5))
    return Block(1, features, labels, np.arange(2000) * 20)


def test_bin_of():
    assert bin_of((1.0, 0.0), 16, 8) == (0, 5)
    assert bin_of((0.0, 0.0), 16, 8) == (0, 0)
    assert bin_of((0.0, 0.1), 4, 2) == (1, 0)
    assert bin_of((-5.0, 0.0), 4, 2) == (2, 1)


def test_bin_of_wraps_around():
    assert bin_of((1.0, -1e-17), 16, 8)[0] == bin_of((1.0, 0.0), 16, 8)[0] == 0
    assert bin_of((1.0, -1e-3), 16, 8)[0] == 15


def test_single_sample_index():
    index = build_index([sample((1.0, 0.0))])

    assert len(index) == 1
    assert list(index.bins) == [bin_of((1.0, 0.0), 16, 8)]


def test_build_index_errors():
    with pytest.raises(EmptyPoolError):
        build_index([])
    with pytest.raises(ValueError):
        build_index([sample((1.0, 0.0))], angle_bins=3)
    with pytest.raises(ValueError):
        build_index([sample((1.0, 0.0))], dist_bins=1)
    with pytest.raises(TypeError):
        build_index([sample((1.0, 0.0)), "not a sample"])


def test_every_sample_is_in_its_own_bin(random_pool):
    index = build_index([random_pool])

    positions = np.sort(np.concatenate(list(index.bins.values())))
    np.testing.assert_array_equal(positions, np.arange(len(random_pool)))
    for key, members in index.bins.items():
        for position in members:
            assert index.bin_of(random_pool.labels[position]) == key


def test_draw_from_single_sample_bin():
    target = sample((1.0, 0.0), value=1.0)
    index = build_index([target, sample((-1.0, 0.0), value=2.0)])

    assert draw(index, (0.9, 0.0), np.random.default_rng(0)) == target


def test_draw_falls_back_to_nearest_bin():
    lonely = sample((0.0, 1.0), value=3.0)
    index = build_index([lonely])

    for query in [(1.0, 0.0), (-1.0, -1.0), (0.0, 0.0), (0.01, 0.0)]:
        assert draw(index, query, np.random.default_rng(1)) == lonely


def test_nearest_bin_tie_break():
    angle_two_away = sample((math.cos(2.5 * 2 * math.pi / 16), math.sin(2.5 * 2 * math.pi / 16)), 1.0)
    index = build_index([angle_two_away], angle_bins=16, dist_bins=8, max_dist=8.0)
    key_angle = index.bin_of(angle_two_away.label)

    assert key_angle == (2, 1)
    assert index.nearest_nonempty_bin((4, 1)) == (2, 1)

    near = LabeledSample(np.zeros(2), (3.5 * math.cos(4.5 * 2 * math.pi / 16), 3.5 * math.sin(4.5 * 2 * math.pi / 16)), 1, 0)
    far = LabeledSample(np.ones(2), (1.5 * math.cos(2.5 * 2 * math.pi / 16), 1.5 * math.sin(2.5 * 2 * math.pi / 16)), 1, 20)
    index = build_index([near, far], angle_bins=16, dist_bins=8, max_dist=8.0)

    assert index.bin_of(near.label) == (4, 3)
    assert index.bin_of(far.label) == (2, 1)
    # Both candidates are two bins away from (4, 1); the one with the smaller distance-bin gap wins.
    assert index.nearest_nonempty_bin((4, 1)) == (2, 1)


def test_nearest_bin_prefers_smaller_angle_bin_on_full_tie():
    first = sample((math.cos(3.5 * 2 * math.pi / 16), math.sin(3.5 * 2 * math.pi / 16)), 1.0)
    second = sample((math.cos(5.5 * 2 * math.pi / 16), math.sin(5.5 * 2 * math.pi / 16)), 2.0)
    index = build_index([first, second], angle_bins=16, dist_bins=8, max_dist=8.0)

    assert index.nearest_nonempty_bin((4, 1)) == (3, 1)


def test_draw_is_uniform_within_bin():
    a = sample((1.0, 0.0), value=1.0)
    b = sample((1.0, 0.001), value=2.0, tick_ms=20)
    index = build_index([a, b])
    assert len(index.bins) == 1

    rng = np.random.default_rng(2024)
    hits = sum(draw(index, (1.0, 0.0), rng) == a for _ in range(10_000))

    assert 0.47 <= hits / 10_000 <= 0.53


def test_draw_never_fabricates_features(random_pool):
    index = build_index([random_pool], angle_bins=8, dist_bins=4)
    rng = np.random.default_rng(5)

    for query in rng.uniform(-1.5, 1.5, size=(300, 2)):
        drawn = draw(index, query, rng)
        assert drawn == random_pool[drawn.tick_ms // 20]


def test_draw_is_deterministic(random_pool):
    index = build_index([random_pool])
    queries = np.random.default_rng(3).uniform(-1.0, 1.0, size=(50, 2))

    first_rng, second_rng = np.random.default_rng(77), np.random.default_rng(77)
    first = [draw(index, query, first_rng) for query in queries]
    second = [draw(index, query, second_rng) for query in queries]

    assert first == second


def test_index_from_samples_and_blocks_agree(random_pool):
    from_block = build_index([random_pool])
    from_samples = build_index(list(random_pool))

    assert {key: list(value) for key, value in from_block.bins.items()} == {
        key: list(value) for key, value in from_samples.bins.items()
    }
    np.testing.assert_array_equal(from_block.block_ids, np.ones(len(random_pool)))


def test_nearest_bin_does_not_depend_on_pool_order():
    closer = LabeledSample(np.zeros(2), (2.5, 0.0), 1, 0)
    farther = LabeledSample(np.ones(2), (4.5, 0.0), 1, 20)

    for pool in ([closer, farther], [farther, closer]):
        index = build_index(pool, angle_bins=16, dist_bins=8, max_dist=8.0)
        assert index.nearest_nonempty_bin((0, 3)) == (0, 2)


def test_nearest_bin_table_covers_every_bin(random_pool):
    index = build_index([random_pool], angle_bins=8, dist_bins=4)

    for angle_bin in range(8):
        for dist_bin in range(4):
            assert index.nearest_nonempty_bin((angle_bin, dist_bin)) in index.bins
