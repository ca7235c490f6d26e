"""
Angle x distance bin index over labeled samples, used by the simulator to draw recorded features whose
label resembles the simulated cursor-to-target vector.
"""

from __future__ import annotations

import logging
import math
import typing

import numpy as np

from . import utils
from .datamodel import Block, LabeledSample

logger = logging.getLogger(__name__)

DEFAULT_ANGLE_BINS = 16
DEFAULT_DIST_BINS = 8
DEFAULT_MAX_DIST = math.sqrt(2.0)

BinKey = typing.Tuple[int, int]


class EmptyPoolError(utils.RetrodecodeError):
    pass


def bin_of(label: typing.Sequence[float], angle_bins: int, dist_bins: int, max_dist: float = DEFAULT_MAX_DIST) -> BinKey:
    """
    The ``(angle_bin, dist_bin)`` of a cursor-to-target vector. Angles wrap around; distances past
    :attr:`max_dist` fall into the last distance bin; a zero vector goes to ``(0, 0)``.

    >>> bin_of((1.0, 0.0), 16, 8)
    (0, 5)
    >>> bin_of((0.0, 0.0), 16, 8)
    (0, 0)
    """
    dx, dy = float(label[0]), float(label[1])
    distance = math.hypot(dx, dy)
    if distance == 0.0:
        return 0, 0

    theta = math.atan2(dy, dx) % (2.0 * math.pi)
    angle_bin = int(math.floor(angle_bins * theta / (2.0 * math.pi))) % angle_bins
    dist_bin = min(dist_bins - 1, int(math.floor(dist_bins * distance / max_dist)))

    return angle_bin, dist_bin


class SampleIndex:
    """
    A pool of labeled samples binned by the polar coordinates of their labels.

    Built by :func:`build_index`. The nearest-bin table is resolved up front, so nothing changes after
    construction and one index can serve concurrent simulations.
    """

    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        block_ids: np.ndarray,
        tick_ms: np.ndarray,
        angle_bins: int,
        dist_bins: int,
        max_dist: float,
    ) -> None:
        self.__features = np.array(features, dtype=float)
        self.__labels = np.array(labels, dtype=float)
        self.__block_ids = np.array(block_ids, dtype=np.int64)
        self.__tick_ms = np.array(tick_ms, dtype=np.int64)
        for array in (self.__features, self.__labels, self.__block_ids, self.__tick_ms):
            array.setflags(write=False)

        self.__angle_bins = int(angle_bins)
        self.__dist_bins = int(dist_bins)
        self.__max_dist = float(max_dist)

        members: typing.Dict[BinKey, typing.List[int]] = {}
        for position, label in enumerate(self.__labels):
            members.setdefault(bin_of(label, self.__angle_bins, self.__dist_bins, self.__max_dist), []).append(
                position
            )
        self.__bins = {key: np.array(positions, dtype=np.int64) for key, positions in members.items()}
        self.__nearest = {
            (angle_bin, dist_bin): self.__resolve_nearest((angle_bin, dist_bin))
            for angle_bin in range(self.__angle_bins)
            for dist_bin in range(self.__dist_bins)
        }

    @property
    def angle_bins(self) -> int:
        return self.__angle_bins

    @property
    def dist_bins(self) -> int:
        return self.__dist_bins

    @property
    def max_dist(self) -> float:
        return self.__max_dist

    @property
    def feature_count(self) -> int:
        return int(self.__features.shape[1])

    @property
    def block_ids(self) -> np.ndarray:
        """
        :getter: Block id of every pooled sample.
        :type: numpy.ndarray
        """
        return self.__block_ids

    @property
    def bins(self) -> typing.Dict[BinKey, np.ndarray]:
        """
        :getter: Nonempty bins mapped to the pool positions of their samples.
        :type: dict[tuple[int, int], numpy.ndarray]
        """
        return dict(self.__bins)

    def __len__(self) -> int:
        return int(self.__features.shape[0])

    def sample(self, position: int) -> LabeledSample:
        return LabeledSample(
            self.__features[position],
            self.__labels[position],
            int(self.__block_ids[position]),
            int(self.__tick_ms[position]),
        )

    def features_at(self, position: int) -> np.ndarray:
        return self.__features[position]

    def bin_of(self, label: typing.Sequence[float]) -> BinKey:
        return bin_of(label, self.__angle_bins, self.__dist_bins, self.__max_dist)

    def nearest_nonempty_bin(self, key: BinKey) -> BinKey:
        """
        :attr:`key` itself when it holds samples, otherwise the nonempty bin minimizing
        circular angle-bin difference plus distance-bin difference, ties broken by smaller
        distance-bin difference, then smaller angle bin, then smaller distance bin.
        """
        nearest = self.__nearest.get(key)
        if nearest is None:
            return self.__resolve_nearest(key)
        return nearest

    def __resolve_nearest(self, key: BinKey) -> BinKey:
        if key in self.__bins:
            return key

        angle_bin, dist_bin = key

        def rank(candidate: BinKey) -> typing.Tuple[int, int, int, int]:
            angle_gap = abs(candidate[0] - angle_bin)
            angle_gap = min(angle_gap, self.__angle_bins - angle_gap)
            dist_gap = abs(candidate[1] - dist_bin)
            return angle_gap + dist_gap, dist_gap, candidate[0], candidate[1]

        return min(self.__bins, key=rank)

    def draw_position(self, cursor_to_target: typing.Sequence[float], rng: np.random.Generator) -> int:
        members = self.__bins[self.nearest_nonempty_bin(self.bin_of(cursor_to_target))]
        return int(members[rng.integers(members.shape[0])])

    def __repr__(self) -> str:
        return "SampleIndex(samples={}, bins={}x{}, nonempty={})".format(
            len(self), self.__angle_bins, self.__dist_bins, len(self.__bins)
        )


def build_index(
    pool: typing.Union[typing.Sequence[LabeledSample], typing.Sequence[Block]],
    angle_bins: int = DEFAULT_ANGLE_BINS,
    dist_bins: int = DEFAULT_DIST_BINS,
    max_dist: float = DEFAULT_MAX_DIST,
) -> SampleIndex:
    """
    Bins a pool of labeled samples by label angle and distance.

    :param pool: Labeled samples, or whole blocks whose samples are pooled.
    :param angle_bins: Number of angle bins, at least 4.
    :param dist_bins: Number of distance bins, at least 2.
    :param max_dist: Distance mapped to the upper edge of the last distance bin.

    :raise EmptyPoolError: If the pool holds no samples.
    :raise ValueError: If the bin counts are out of range.
    """
    if angle_bins < 4 or dist_bins < 2:
        raise ValueError("need angle_bins >= 4 and dist_bins >= 2, got {} and {}".format(angle_bins, dist_bins))
    if not max_dist > 0:
        raise ValueError("max_dist must be positive")
    if len(pool) == 0:
        raise EmptyPoolError("cannot index an empty pool")

    if all(isinstance(item, Block) for item in pool):
        blocks = typing.cast(typing.Sequence[Block], pool)
        features = np.concatenate([block.features for block in blocks], axis=0)
        labels = np.concatenate([block.labels for block in blocks], axis=0)
        block_ids = np.concatenate([np.full(len(block), block.block_id) for block in blocks])
        tick_ms = np.concatenate([block.tick_ms for block in blocks])
    else:
        samples = typing.cast(typing.Sequence[LabeledSample], pool)
        for sample in samples:
            utils.raise_type_error_if_not_type_of(sample, LabeledSample)
        features = np.stack([sample.features for sample in samples])
        labels = np.stack([sample.label for sample in samples])
        block_ids = np.array([sample.block_id for sample in samples])
        tick_ms = np.array([sample.tick_ms for sample in samples])

    index = SampleIndex(features, labels, block_ids, tick_ms, angle_bins, dist_bins, max_dist)
    logger.debug("Built %r", index)
    return index


def draw(index: SampleIndex, cursor_to_target: typing.Sequence[float], rng: np.random.Generator) -> LabeledSample:
    """
    Draws a uniformly random sample from the bin of :attr:`cursor_to_target`, falling back to the
    nearest nonempty bin. The returned sample is a copy of a pool sample; nothing is interpolated.

    The result depends only on the index, the query and the state of :attr:`rng`.
    """
    return index.sample(index.draw_position(cursor_to_target, rng))
