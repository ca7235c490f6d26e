"""
Session data: labeled 20 ms neural feature samples grouped into blocks and sessions, the session
CSV format, and the normalization pipeline applied before any decoder sees the data.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
import typing

import numpy as np

from . import utils

logger = logging.getLogger(__name__)

TICK_MS = 20
FLOAT_FORMAT = "%.9g"
LABEL_PERCENTILE = 99.0
_LABEL_COLUMNS = ["block_id", "tick_ms", "label_dx", "label_dy"]
_MANIFEST_COLUMNS = ["session_index", "calendar_day", "path"]


class SessionFormatError(utils.RetrodecodeError):
    pass


class DegenerateBlockError(utils.RetrodecodeError):
    pass


class IneligibleSessionError(utils.RetrodecodeError):
    pass


class SplitError(utils.RetrodecodeError):
    pass


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


class LabeledSample:
    """
    One 20 ms tick: a neural feature vector labeled with the cursor-to-target vector that was on
    screen when it was recorded.

    :class:`LabeledSample` is immutable and has its equivalence implemented.
    """

    def __init__(self, features: np.ndarray, label: typing.Sequence[float], block_id: int, tick_ms: int) -> None:
        self.__features = _frozen(features)
        self.__label = _frozen(label)
        self.__block_id = int(block_id)
        self.__tick_ms = int(tick_ms)

        if self.__features.ndim != 1:
            raise ValueError("features must be a vector")
        if self.__label.shape != (2,) or not np.all(np.isfinite(self.__label)):
            raise ValueError("label must be a finite 2-D vector, got {}".format(self.__label))
        if self.__tick_ms % TICK_MS != 0:
            raise ValueError("tick_ms must be a multiple of {}, got {}".format(TICK_MS, self.__tick_ms))

    @property
    def features(self) -> np.ndarray:
        """
        :getter: Z-scored (or raw, before normalization) neural features.
        :type: numpy.ndarray
        """
        return self.__features

    @property
    def label(self) -> np.ndarray:
        """
        :getter: Cursor-to-target vector ``(dx, dy)``.
        :type: numpy.ndarray
        """
        return self.__label

    @property
    def block_id(self) -> int:
        return self.__block_id

    @property
    def tick_ms(self) -> int:
        return self.__tick_ms

    def __repr__(self) -> str:
        return "LabeledSample(block={}, tick_ms={}, label=({:.4g}, {:.4g}), features={})".format(
            self.block_id, self.tick_ms, self.label[0], self.label[1], self.features.shape[0]
        )

    def __eq__(self, other) -> bool:
        return (
            self.block_id == other.block_id
            and self.tick_ms == other.tick_ms
            and np.array_equal(self.label, other.label)
            and np.array_equal(self.features, other.features)
        )


class Block:
    """
    A contiguous task recording: an ordered run of :class:`LabeledSample` ticks stored column-wise.

    Indexing and iteration yield :class:`LabeledSample` objects.
    """

    def __init__(self, block_id: int, features: np.ndarray, labels: np.ndarray, tick_ms: np.ndarray) -> None:
        self.__block_id = int(block_id)
        self.__features = _frozen(features)
        self.__labels = _frozen(labels)
        self.__tick_ms = np.array(tick_ms, dtype=np.int64)
        self.__tick_ms.setflags(write=False)

        if self.__features.ndim != 2 or self.__features.shape[0] == 0:
            raise ValueError("block {} needs a nonempty ticks x channels feature matrix".format(block_id))
        if self.__labels.shape != (self.__features.shape[0], 2):
            raise ValueError("block {} labels must be ticks x 2".format(block_id))
        if self.__tick_ms.shape != (self.__features.shape[0],):
            raise ValueError("block {} needs one tick_ms per row".format(block_id))
        if not np.all(np.isfinite(self.__labels)):
            raise ValueError("block {} has non-finite labels".format(block_id))
        if self.__tick_ms[0] % TICK_MS != 0 or np.any(np.diff(self.__tick_ms) != TICK_MS):
            raise ValueError("block {} ticks must advance by exactly {} ms".format(block_id, TICK_MS))

    @property
    def block_id(self) -> int:
        return self.__block_id

    @property
    def features(self) -> np.ndarray:
        """
        :getter: Feature matrix, ticks x channels.
        :type: numpy.ndarray
        """
        return self.__features

    @property
    def labels(self) -> np.ndarray:
        """
        :getter: Cursor-to-target labels, ticks x 2.
        :type: numpy.ndarray
        """
        return self.__labels

    @property
    def tick_ms(self) -> np.ndarray:
        return self.__tick_ms

    @property
    def feature_count(self) -> int:
        return int(self.__features.shape[1])

    def with_features(self, features: np.ndarray) -> Block:
        return Block(self.block_id, features, self.labels, self.tick_ms)

    def with_labels(self, labels: np.ndarray) -> Block:
        return Block(self.block_id, self.features, labels, self.tick_ms)

    def __len__(self) -> int:
        return int(self.__features.shape[0])

    def __getitem__(self, index: int) -> LabeledSample:
        return LabeledSample(self.__features[index], self.__labels[index], self.block_id, int(self.__tick_ms[index]))

    def __iter__(self) -> typing.Iterator[LabeledSample]:
        for index in range(len(self)):
            yield self[index]

    def __repr__(self) -> str:
        return "Block(id={}, ticks={}, features={})".format(self.block_id, len(self), self.feature_count)


class BlockRef(typing.NamedTuple):
    session_index: int
    block_id: int


class SessionData:
    """
    One recording day: ordered blocks of labeled samples plus the label scale that was applied.

    :class:`SessionData` is immutable; the normalization functions return new instances.
    """

    def __init__(
        self,
        session_index: int,
        calendar_day: int,
        blocks: typing.Sequence[Block],
        label_scale: float = 1.0,
    ) -> None:
        utils.raise_type_error_if_not_type_of_multiple(blocks, [list, tuple])
        if len(blocks) == 0:
            raise ValueError("session {} has no blocks".format(session_index))
        for block in blocks:
            utils.raise_type_error_if_not_type_of(block, Block)

        feature_counts = {block.feature_count for block in blocks}
        if len(feature_counts) != 1:
            raise ValueError("session {} mixes feature counts {}".format(session_index, sorted(feature_counts)))
        block_ids = [block.block_id for block in blocks]
        if len(set(block_ids)) != len(block_ids):
            raise ValueError("session {} has duplicate block ids".format(session_index))
        if not label_scale > 0:
            raise ValueError("label_scale must be positive, got {}".format(label_scale))

        self.__session_index = int(session_index)
        self.__calendar_day = int(calendar_day)
        self.__blocks = tuple(blocks)
        self.__feature_count = feature_counts.pop()
        self.__label_scale = float(label_scale)

    @property
    def session_index(self) -> int:
        return self.__session_index

    @property
    def calendar_day(self) -> int:
        return self.__calendar_day

    @property
    def blocks(self) -> typing.Tuple[Block, ...]:
        return self.__blocks

    @property
    def feature_count(self) -> int:
        return self.__feature_count

    @property
    def label_scale(self) -> float:
        """
        :getter: The divisor that was applied to the labels by :func:`normalize_labels`.
        :type: float
        """
        return self.__label_scale

    @property
    def block_ids(self) -> typing.List[int]:
        return [block.block_id for block in self.__blocks]

    @property
    def sample_count(self) -> int:
        return sum(len(block) for block in self.__blocks)

    def block(self, block_id: int) -> Block:
        """
        :raise KeyError: If the session has no block with :attr:`block_id`.
        """
        for block in self.__blocks:
            if block.block_id == block_id:
                return block
        raise KeyError("session {} has no block {}".format(self.session_index, block_id))

    def all_labels(self) -> np.ndarray:
        return np.concatenate([block.labels for block in self.__blocks], axis=0)

    def replace(
        self, blocks: typing.Optional[typing.Sequence[Block]] = None, label_scale: typing.Optional[float] = None
    ) -> SessionData:
        return SessionData(
            self.session_index,
            self.calendar_day,
            list(self.blocks if blocks is None else blocks),
            self.label_scale if label_scale is None else label_scale,
        )

    def __repr__(self) -> str:
        return "SessionData(index={}, day={}, blocks={}, features={})".format(
            self.session_index, self.calendar_day, len(self.blocks), self.feature_count
        )


class DataSplit:
    """
    Train, validation and test block references for one test session.

    The three lists are pairwise disjoint.
    """

    def __init__(
        self,
        train_blocks: typing.Sequence[BlockRef],
        validation_blocks: typing.Sequence[BlockRef],
        test_blocks: typing.Sequence[BlockRef],
    ) -> None:
        self.__train = tuple(BlockRef(*ref) for ref in train_blocks)
        self.__validation = tuple(BlockRef(*ref) for ref in validation_blocks)
        self.__test = tuple(BlockRef(*ref) for ref in test_blocks)

        train, validation, test = set(self.__train), set(self.__validation), set(self.__test)
        if train & validation or train & test or validation & test:
            raise SplitError("train, validation and test blocks must be disjoint")

    @property
    def train_blocks(self) -> typing.Tuple[BlockRef, ...]:
        return self.__train

    @property
    def validation_blocks(self) -> typing.Tuple[BlockRef, ...]:
        return self.__validation

    @property
    def test_blocks(self) -> typing.Tuple[BlockRef, ...]:
        return self.__test

    def __repr__(self) -> str:
        return "DataSplit(train={}, validation={}, test={})".format(
            list(self.__train), list(self.__validation), list(self.__test)
        )


class ManifestEntry(typing.NamedTuple):
    session_index: int
    calendar_day: int
    path: Path


# Files


def _format_float(value: float) -> str:
    return FLOAT_FORMAT % value


def load_session(path: typing.Union[str, Path], session_index: int = 0, calendar_day: int = 0) -> SessionData:
    """
    Reads a session CSV file.

    The header is ``block_id,tick_ms,label_dx,label_dy,f0,...,f{F-1}`` and every row is one 20 ms tick.
    Rows of one block are contiguous. Features are returned as stored; normalization is explicit.

    :param path: The session CSV file.
    :param session_index: Ordinal of the session in its dataset.
    :param calendar_day: Day offset of the recording.

    :raise SessionFormatError: On a malformed header, a row of the wrong length, an unparsable value or
                               ticks that do not advance by 20 ms. The message names the file row
                               (the header is row 1).
    """
    path = Path(path)
    blocks: typing.List[Block] = []

    with open(path, newline="", encoding="utf-8") as file:
        reader = csv.reader(file)
        try:
            header = next(reader)
        except StopIteration:
            raise SessionFormatError("{}: empty file".format(path))

        feature_count = len(header) - len(_LABEL_COLUMNS)
        expected = _LABEL_COLUMNS + ["f{}".format(index) for index in range(feature_count)]
        if feature_count < 1 or header != expected:
            raise SessionFormatError("{}: row 1: malformed header".format(path))

        current_id: typing.Optional[int] = None
        seen_ids: typing.Set[int] = set()
        rows: typing.List[typing.List[float]] = []
        ticks: typing.List[int] = []

        def close_block() -> None:
            if current_id is None:
                return
            matrix = np.array(rows, dtype=float)
            blocks.append(Block(current_id, matrix[:, 2:], matrix[:, :2], np.array(ticks, dtype=np.int64)))

        for row_number, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SessionFormatError(
                    "{}: row {}: expected {} fields ({} features), got {}".format(
                        path, row_number, len(header), feature_count, len(row)
                    )
                )
            try:
                block_id, tick_ms = int(row[0]), int(row[1])
                values = [float(value) for value in row[2:]]
            except ValueError as error:
                raise SessionFormatError("{}: row {}: {}".format(path, row_number, error))
            if not np.isfinite(values[0]) or not np.isfinite(values[1]):
                raise SessionFormatError("{}: row {}: non-finite label".format(path, row_number))
            if tick_ms % TICK_MS != 0:
                raise SessionFormatError(
                    "{}: row {}: tick_ms {} is not a multiple of {}".format(path, row_number, tick_ms, TICK_MS)
                )

            if block_id != current_id:
                if block_id in seen_ids:
                    raise SessionFormatError("{}: row {}: block {} is not contiguous".format(path, row_number, block_id))
                close_block()
                current_id = block_id
                seen_ids.add(block_id)
                rows, ticks = [], []
            elif tick_ms != ticks[-1] + TICK_MS:
                raise SessionFormatError(
                    "{}: row {}: tick_ms {} does not follow {}".format(path, row_number, tick_ms, ticks[-1])
                )

            rows.append(values)
            ticks.append(tick_ms)

        close_block()

    if len(blocks) == 0:
        raise SessionFormatError("{}: no data rows".format(path))

    logger.debug("Loaded %s: %d blocks, %d features", path, len(blocks), blocks[0].feature_count)
    return SessionData(session_index, calendar_day, blocks)


def write_session(session: SessionData, path: typing.Union[str, Path]) -> None:
    """
    Writes :attr:`session` in the session CSV format, floats with 9 significant digits.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _LABEL_COLUMNS + ["f{}".format(index) for index in range(session.feature_count)]

    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for block in session.blocks:
            for tick, label, features in zip(block.tick_ms, block.labels, block.features):
                writer.writerow(
                    [str(block.block_id), str(int(tick))]
                    + [_format_float(value) for value in label]
                    + [_format_float(value) for value in features]
                )


def load_manifest(path: typing.Union[str, Path]) -> typing.List[ManifestEntry]:
    """
    Reads a dataset manifest ``session_index,calendar_day,path``. Relative session paths are resolved
    against the manifest's directory.

    :raise SessionFormatError: If the manifest is malformed.
    """
    path = Path(path)
    entries = []

    with open(path, newline="", encoding="utf-8") as file:
        reader = csv.reader(file)
        if next(reader, None) != _MANIFEST_COLUMNS:
            raise SessionFormatError("{}: row 1: malformed manifest header".format(path))
        for row_number, row in enumerate(reader, start=2):
            if len(row) != len(_MANIFEST_COLUMNS):
                raise SessionFormatError("{}: row {}: expected 3 fields".format(path, row_number))
            try:
                session_path = Path(row[2])
                if not session_path.is_absolute():
                    session_path = path.parent / session_path
                entries.append(ManifestEntry(int(row[0]), int(row[1]), session_path))
            except ValueError as error:
                raise SessionFormatError("{}: row {}: {}".format(path, row_number, error))

    return entries


def write_manifest(entries: typing.Sequence[ManifestEntry], path: typing.Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(_MANIFEST_COLUMNS)
        for entry in entries:
            session_path = Path(entry.path)
            try:
                session_path = session_path.relative_to(path.parent)
            except ValueError:
                pass
            writer.writerow([entry.session_index, entry.calendar_day, session_path.as_posix()])


def load_dataset(manifest_path: typing.Union[str, Path]) -> typing.List[SessionData]:
    """
    Loads every session named by a manifest, ordered by session index.
    """
    sessions = [
        load_session(entry.path, entry.session_index, entry.calendar_day) for entry in load_manifest(manifest_path)
    ]
    logger.info("Loaded %d sessions from %s", len(sessions), manifest_path)
    return sorted(sessions, key=lambda session: session.session_index)


# Normalization


def zscore_block(features: np.ndarray) -> np.ndarray:
    """
    Z-scores every column with its population mean and standard deviation. Zero-variance columns map
    to zeros.

    :param features: Ticks x channels matrix.
    :raise DegenerateBlockError: If there are fewer than two rows.

    >>> zscore_block(np.array([[1.0], [2.0], [3.0]])).ravel().round(5)
    array([-1.22474,  0.     ,  1.22474])
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] < 2:
        raise DegenerateBlockError("z-scoring needs at least 2 rows, got shape {}".format(features.shape))

    mean = features.mean(axis=0)
    centered = features - mean
    std = np.sqrt(np.mean(centered * centered, axis=0))

    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(constant, 1.0, std)
    scored = centered / scale
    scored[:, constant] = 0.0

    return scored


def zscore_session(session: SessionData) -> SessionData:
    """
    Applies :func:`zscore_block` to every block of :attr:`session`.
    """
    return session.replace(blocks=[block.with_features(zscore_block(block.features)) for block in session.blocks])


def normalize_labels(session: SessionData) -> SessionData:
    """
    Divides every label by the 99th percentile of the absolute label components of the session.

    All-zero labels are left unchanged with ``label_scale = 1``.
    """
    magnitudes = np.abs(session.all_labels())
    scale = utils.percentile(magnitudes, LABEL_PERCENTILE)

    if scale == 0.0:
        return session.replace(label_scale=1.0)

    blocks = [block.with_labels(block.labels / scale) for block in session.blocks]
    return session.replace(blocks=blocks, label_scale=scale)


def prepare_sessions(sessions: typing.Sequence[SessionData]) -> typing.List[SessionData]:
    """
    The preprocessing every protocol starts from: per-block feature z-scoring, then per-session label
    normalization.
    """
    return [normalize_labels(zscore_session(session)) for session in sessions]


# Splits


def _find_session(sessions: typing.Sequence[SessionData], session_index: int) -> SessionData:
    for session in sessions:
        if session.session_index == session_index:
            return session
    raise SplitError("no session with index {}".format(session_index))


def make_split(sessions: typing.Sequence[SessionData], test_session: int, prior_sessions: int) -> DataSplit:
    """
    Splits a test session and its history into train, validation and test blocks.

    With ``b`` blocks in the test session, test = blocks ``{b-1, b}``, validation = ``{b-3, b-2}``
    and train = the remaining test-session blocks plus every block of the :attr:`prior_sessions`
    most recent earlier sessions (clipped to what exists).

    :param sessions: All sessions of the dataset.
    :param test_session: Session index of the test session.
    :param prior_sessions: The number ``D`` of earlier sessions added to the training set.

    :raise IneligibleSessionError: If the test session has fewer than 5 blocks.
    :raise SplitError: If there is no session with index :attr:`test_session`.
    """
    if prior_sessions < 0:
        raise ValueError("prior_sessions must be >= 0, got {}".format(prior_sessions))

    test = _find_session(sessions, test_session)
    block_ids = test.block_ids
    if len(block_ids) < 5:
        raise IneligibleSessionError(
            "session {} has {} blocks, test sessions need at least 5".format(test_session, len(block_ids))
        )

    refs = [BlockRef(test.session_index, block_id) for block_id in block_ids]
    train = refs[:-4]

    earlier = sorted(
        (session for session in sessions if session.session_index < test.session_index),
        key=lambda session: session.session_index,
        reverse=True,
    )
    for session in earlier[:prior_sessions]:
        train.extend(BlockRef(session.session_index, block_id) for block_id in session.block_ids)

    return DataSplit(train, refs[-4:-2], refs[-2:])


def select_blocks(sessions: typing.Sequence[SessionData], refs: typing.Sequence[BlockRef]) -> typing.List[Block]:
    """
    Resolves block references against :attr:`sessions`.
    """
    by_index = {session.session_index: session for session in sessions}
    return [by_index[ref.session_index].block(ref.block_id) for ref in refs]
