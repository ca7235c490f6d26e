"""
Synthetic multi-session datasets in the session CSV format.

Features follow a cosine tuning model of the cursor-to-target vector, optionally passed through a
nonlinearity a linear decoder cannot represent, plus Gaussian noise. Tuning drifts with calendar day.
"""

from __future__ import annotations

import enum
import logging
from pathlib import Path
import typing

import numpy as np

from . import utils
from .datamodel import TICK_MS, Block, ManifestEntry, SessionData, write_manifest, write_session

logger = logging.getLogger(__name__)


class SynthConfigError(utils.RetrodecodeError):
    pass


class Nonlinearity(enum.Enum):
    NONE = "none"
    SATURATION = "saturation"
    MULTIPLICATIVE_GAIN = "multiplicative-gain"


class PlantedTuning(typing.NamedTuple):
    """
    Generator parameters of one session, before noise.
    """

    baseline: np.ndarray
    depth: np.ndarray
    preferred_direction: np.ndarray

    def tuning_vectors(self) -> np.ndarray:
        """
        :return: channels x 2 matrix of ``depth * (cos pd, sin pd)``, the linear map from label to
                 modulation when there is no nonlinearity.
        """
        return self.depth[:, None] * np.stack(
            [np.cos(self.preferred_direction), np.sin(self.preferred_direction)], axis=1
        )


class SynthConfig:
    """
    Parameters of a synthetic dataset. Per-channel baselines, modulation depths and preferred
    directions are drawn from the given ranges with the dataset seed unless given explicitly.
    """

    def __init__(
        self,
        feature_count: int = 384,
        sessions: int = 6,
        blocks_per_session: int = 6,
        ticks_per_block: int = 9000,
        baseline_range: typing.Tuple[float, float] = (0.0, 2.0),
        depth_range: typing.Tuple[float, float] = (0.2, 1.0),
        baseline: typing.Optional[typing.Sequence[float]] = None,
        depth: typing.Optional[typing.Sequence[float]] = None,
        preferred_direction: typing.Optional[typing.Sequence[float]] = None,
        noise_std: float = 1.0,
        nonlinearity: typing.Union[Nonlinearity, str] = Nonlinearity.NONE,
        saturation_scale: float = 3.0,
        drift_rate: float = 0.0,
        pd_drift_rate: float = 0.0,
        day_spacing: int = 7,
        target_speed: float = 2.0,
        trial_ticks: int = 100,
        seed: int = 0,
    ) -> None:
        self.feature_count = int(feature_count)
        self.sessions = int(sessions)
        self.blocks_per_session = int(blocks_per_session)
        self.ticks_per_block = int(ticks_per_block)
        self.baseline_range = tuple(float(value) for value in baseline_range)
        self.depth_range = tuple(float(value) for value in depth_range)
        self.baseline = None if baseline is None else np.asarray(baseline, dtype=float)
        self.depth = None if depth is None else np.asarray(depth, dtype=float)
        self.preferred_direction = None if preferred_direction is None else np.asarray(preferred_direction, dtype=float)
        self.noise_std = float(noise_std)
        try:
            self.nonlinearity = Nonlinearity(nonlinearity)
        except ValueError:
            raise SynthConfigError("unknown nonlinearity {!r}".format(nonlinearity))
        self.saturation_scale = float(saturation_scale)
        self.drift_rate = float(drift_rate)
        self.pd_drift_rate = float(pd_drift_rate)
        self.day_spacing = int(day_spacing)
        self.target_speed = float(target_speed)
        self.trial_ticks = int(trial_ticks)
        self.seed = int(seed)

        self.validate()

    def validate(self) -> None:
        """
        :raise SynthConfigError: If any parameter is out of its domain.
        """
        if self.feature_count < 1:
            raise SynthConfigError("feature_count must be >= 1")
        if self.sessions < 1:
            raise SynthConfigError("sessions must be >= 1")
        if self.blocks_per_session < 5:
            raise SynthConfigError("blocks_per_session must be >= 5 so every session can be a test session")
        if self.ticks_per_block < 2:
            raise SynthConfigError("ticks_per_block must be >= 2")
        if self.noise_std < 0:
            raise SynthConfigError("noise_std must be >= 0")
        if self.day_spacing < 0 or self.trial_ticks < 1 or self.target_speed <= 0:
            raise SynthConfigError("day_spacing >= 0, trial_ticks >= 1 and target_speed > 0 are required")
        for name in ("baseline", "depth", "preferred_direction"):
            value = getattr(self, name)
            if value is not None and value.shape != (self.feature_count,):
                raise SynthConfigError("{} must have one value per channel".format(name))

    @classmethod
    def from_mapping(cls, mapping: typing.Mapping[str, typing.Any]) -> SynthConfig:
        """
        :raise SynthConfigError: On unknown keys or invalid values.
        """
        try:
            return cls(**dict(mapping))
        except TypeError as error:
            raise SynthConfigError(str(error))

    def to_mapping(self) -> typing.Dict[str, typing.Any]:
        mapping = dict(vars(self))
        mapping["nonlinearity"] = self.nonlinearity.value
        mapping["baseline_range"] = list(self.baseline_range)
        mapping["depth_range"] = list(self.depth_range)
        for name in ("baseline", "depth", "preferred_direction"):
            if mapping[name] is not None:
                mapping[name] = [float(value) for value in mapping[name]]
        return mapping


def _base_tuning(config: SynthConfig) -> PlantedTuning:
    rng = utils.make_rng(utils.derive_seed(config.seed, 0))
    count = config.feature_count

    baseline = rng.uniform(*config.baseline_range, size=count) if config.baseline is None else config.baseline
    depth = rng.uniform(*config.depth_range, size=count) if config.depth is None else config.depth
    if config.preferred_direction is None:
        preferred_direction = rng.uniform(0.0, 2.0 * np.pi, size=count)
    else:
        preferred_direction = config.preferred_direction

    return PlantedTuning(np.array(baseline), np.array(depth), np.array(preferred_direction))


def _drift_signs(config: SynthConfig) -> typing.Tuple[np.ndarray, np.ndarray]:
    rng = utils.make_rng(utils.derive_seed(config.seed, 1))
    mean_signs = rng.choice([-1.0, 1.0], size=config.feature_count)
    pd_signs = rng.choice([-1.0, 1.0], size=config.feature_count)
    return mean_signs, pd_signs


def session_day(config: SynthConfig, session_index: int) -> int:
    return session_index * config.day_spacing


def planted_tuning(config: SynthConfig, session_index: int) -> PlantedTuning:
    """
    The tuning the generator uses for one session: the base tuning with the channel means shifted by
    ``drift_rate * day`` and preferred directions rotated by ``pd_drift_rate * day``, each with a
    per-channel random sign.
    """
    base = _base_tuning(config)
    mean_signs, pd_signs = _drift_signs(config)
    day = session_day(config, session_index)

    return PlantedTuning(
        base.baseline + mean_signs * config.drift_rate * day,
        base.depth,
        base.preferred_direction + pd_signs * config.pd_drift_rate * day,
    )


def modulation(config: SynthConfig, tuning: PlantedTuning, labels: np.ndarray) -> np.ndarray:
    """
    Noise-free features for ticks x 2 raw labels.
    """
    distance = np.hypot(labels[:, 0], labels[:, 1])
    angle = np.arctan2(labels[:, 1], labels[:, 0])
    drive = distance[:, None] * np.cos(angle[:, None] - tuning.preferred_direction[None, :])

    if config.nonlinearity is Nonlinearity.SATURATION:
        drive = np.tanh(config.saturation_scale * drive)
    elif config.nonlinearity is Nonlinearity.MULTIPLICATIVE_GAIN:
        drive = drive * distance[:, None]

    return tuning.baseline[None, :] + tuning.depth[None, :] * drive


def simulate_labels(config: SynthConfig, ticks: int, rng: np.random.Generator) -> np.ndarray:
    """
    Cursor-to-target labels of a virtual point-to-target task.

    Targets are placed uniformly in ``[-1, 1]^2``. The cursor moves toward the target with a speed
    proportional to the remaining distance plus jitter; a new target appears every
    ``trial_ticks`` ticks. Long holds near the target give the label distribution its near-zero
    distances.
    """
    tick_s = TICK_MS / 1000.0
    labels = np.empty((ticks, 2))
    cursor = rng.uniform(-1.0, 1.0, size=2)
    target = rng.uniform(-1.0, 1.0, size=2)

    for tick in range(ticks):
        if tick > 0 and tick % config.trial_ticks == 0:
            target = rng.uniform(-1.0, 1.0, size=2)
        to_target = target - cursor
        labels[tick] = to_target
        jitter = rng.normal(0.0, 0.05, size=2)
        cursor = np.clip(cursor + (config.target_speed * to_target + jitter) * tick_s, -1.0, 1.0)

    return labels


def generate_session(config: SynthConfig, session_index: int) -> SessionData:
    rng = utils.make_rng(utils.derive_seed(config.seed, 2, session_index))
    tuning = planted_tuning(config, session_index)
    blocks = []

    for block_id in range(1, config.blocks_per_session + 1):
        labels = simulate_labels(config, config.ticks_per_block, rng)
        features = modulation(config, tuning, labels)
        if config.noise_std > 0:
            features = features + rng.normal(0.0, config.noise_std, size=features.shape)
        tick_ms = np.arange(config.ticks_per_block, dtype=np.int64) * TICK_MS
        blocks.append(Block(block_id, features, labels, tick_ms))

    return SessionData(session_index, session_day(config, session_index), blocks)


def generate_dataset(config: SynthConfig) -> typing.List[SessionData]:
    """
    Generates ``config.sessions`` raw (not normalized) sessions.

    Every session uses its own random stream derived from ``(seed, session_index)``, so the
    dataset depends only on :attr:`config`.

    :raise SynthConfigError: If :attr:`config` is invalid.
    """
    utils.raise_type_error_if_not_type_of(config, SynthConfig)
    config.validate()

    sessions = []
    for session_index in range(config.sessions):
        sessions.append(generate_session(config, session_index))
        logger.info("Generated session %d (day %d)", session_index, session_day(config, session_index))

    return sessions


def write_dataset(sessions: typing.Sequence[SessionData], directory: typing.Union[str, Path]) -> Path:
    """
    Writes one ``session_<index>.csv`` per session and a ``manifest.csv``.

    :return: The manifest path.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []

    for session in sessions:
        path = directory / "session_{:03d}.csv".format(session.session_index)
        write_session(session, path)
        entries.append(ManifestEntry(session.session_index, session.calendar_day, path))

    manifest = directory / "manifest.csv"
    write_manifest(entries, manifest)
    logger.info("Wrote %d sessions to %s", len(entries), directory)

    return manifest
