"""
Closed-loop Grid task driven by recorded neural features.

Every 20 ms tick the simulator turns the cursor-to-target vector into a feature draw from a
:class:`~retrodecode.sampler.SampleIndex`, lets the decoder-under-test turn it into a velocity and
moves the cursor. Targets are cells of an ``n x n`` grid over the ``[-1, 1]^2`` workspace and are
selected by dwelling on them.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import functools
import logging
import math
from concurrent.futures import Executor
from pathlib import Path
import typing

import numpy as np

from . import utils
from .decoders import DecoderModel
from .sampler import SampleIndex

logger = logging.getLogger(__name__)

RUN_DURATION_S = 120.0
TICK_S = 0.02
REPEATS = 30


class BitrateDomainError(utils.RetrodecodeError, ValueError):
    pass


class SimulationError(utils.RetrodecodeError):
    pass


class Outcome(enum.Enum):
    CORRECT = "correct"
    WRONG_SELECT = "wrong-select"
    TIMEOUT = "timeout"


@dataclasses.dataclass(frozen=True)
class GridTaskConfig:
    """
    A Grid task variant: ``n x n`` targets, the dwell needed to select one and the trial timeout.
    """

    n: int
    dwell_s: float
    timeout_s: float
    run_duration_s: float = RUN_DURATION_S
    tick_s: float = TICK_S
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("grid size must be >= 2, got {}".format(self.n))
        if not self.dwell_s > 0 or not self.timeout_s > self.dwell_s:
            raise ValueError("need 0 < dwell_s < timeout_s, got {} and {}".format(self.dwell_s, self.timeout_s))
        if not self.tick_s > 0 or not self.run_duration_s > 0:
            raise ValueError("tick_s and run_duration_s must be positive")

    @classmethod
    def high_accuracy(cls) -> GridTaskConfig:
        return cls(n=15, dwell_s=2.0, timeout_s=10.0, name="high-accuracy")

    @classmethod
    def high_speed(cls) -> GridTaskConfig:
        return cls(n=10, dwell_s=0.5, timeout_s=5.0, name="high-speed")

    @classmethod
    def sweep(cls, n: int) -> GridTaskConfig:
        return cls(n=n, dwell_s=1.0, timeout_s=5.0, name="sweep-{}".format(n))

    @classmethod
    def preset(cls, name: str, n: typing.Optional[int] = None) -> GridTaskConfig:
        """
        :raise ValueError: If :attr:`name` is not ``high-accuracy``, ``high-speed`` or ``sweep``.
        """
        if name == "high-accuracy":
            return cls.high_accuracy()
        if name == "high-speed":
            return cls.high_speed()
        if name == "sweep":
            return cls.sweep(10 if n is None else n)
        raise ValueError("unknown task preset {!r}".format(name))

    @property
    def dwell_ticks(self) -> int:
        return max(1, int(round(self.dwell_s / self.tick_s)))

    @property
    def timeout_ticks(self) -> int:
        return max(1, int(round(self.timeout_s / self.tick_s)))

    @property
    def run_ticks(self) -> int:
        return max(1, int(round(self.run_duration_s / self.tick_s)))

    @property
    def symbol_count(self) -> int:
        return self.n * self.n


# Grid geometry


def cell_of(position: typing.Sequence[float], n: int) -> int:
    """
    The cell under a workspace position, numbered ``row * n + column`` from the lower left. Every
    point of ``[-1, 1]^2`` maps to exactly one cell; cell edges belong to the cell above/right.

    >>> cell_of((-1.0, -1.0), 2), cell_of((0.0, 0.0), 2), cell_of((1.0, 1.0), 2)
    (0, 3, 3)
    """
    column = min(n - 1, max(0, int(math.floor((float(position[0]) + 1.0) * n / 2.0))))
    row = min(n - 1, max(0, int(math.floor((float(position[1]) + 1.0) * n / 2.0))))
    return row * n + column


def cell_center(cell: int, n: int) -> np.ndarray:
    if not 0 <= cell < n * n:
        raise ValueError("cell {} outside a {}x{} grid".format(cell, n, n))
    row, column = divmod(cell, n)
    size = 2.0 / n
    return np.array([-1.0 + (column + 0.5) * size, -1.0 + (row + 0.5) * size])


# Results


class TrialRecord(typing.NamedTuple):
    target_cell: int
    outcome: Outcome
    duration_s: float
    selected_cell: typing.Optional[int]


class SimulationResult:
    """
    The trial log of one simulated run and the metrics derived from it.
    """

    def __init__(self, trials: typing.Sequence[TrialRecord], grid_size: int, elapsed_s: float, seed: int) -> None:
        self.__trials = tuple(trials)
        self.__grid_size = int(grid_size)
        self.__elapsed_s = float(elapsed_s)
        self.__seed = int(seed)

    @property
    def trials(self) -> typing.Tuple[TrialRecord, ...]:
        return self.__trials

    @property
    def grid_size(self) -> int:
        return self.__grid_size

    @property
    def elapsed_s(self) -> float:
        return self.__elapsed_s

    @property
    def seed(self) -> int:
        return self.__seed

    @property
    def S_c(self) -> int:
        return sum(1 for trial in self.__trials if trial.outcome is Outcome.CORRECT)

    @property
    def S_i(self) -> int:
        return sum(1 for trial in self.__trials if trial.outcome is Outcome.WRONG_SELECT)

    @property
    def timeouts(self) -> int:
        return sum(1 for trial in self.__trials if trial.outcome is Outcome.TIMEOUT)

    @property
    def bitrate_bps(self) -> float:
        return bitrate(self.__grid_size * self.__grid_size, self.S_c, self.S_i, self.__elapsed_s)

    @property
    def mean_acq_time_s(self) -> typing.Optional[float]:
        return acquisition_time(self)

    def __eq__(self, other) -> bool:
        return (
            self.trials == other.trials
            and self.grid_size == other.grid_size
            and self.elapsed_s == other.elapsed_s
            and self.seed == other.seed
        )

    def __repr__(self) -> str:
        return "SimulationResult(n={}, trials={}, S_c={}, S_i={}, bitrate={:.4f} bps)".format(
            self.grid_size, len(self.trials), self.S_c, self.S_i, self.bitrate_bps
        )


class TrajectoryRow(typing.NamedTuple):
    trial: int
    tick: int
    cursor_x: float
    cursor_y: float
    target_cell: int
    event: str


def bitrate(N: int, S_c: int, S_i: int, t: float) -> float:
    """
    ``log2(N - 1) * max(S_c - S_i, 0) / t`` bits per second.

    :param N: Number of selectable symbols.
    :param S_c: Correct selections.
    :param S_i: Incorrect selections.
    :param t: Total task time in seconds.

    :raise BitrateDomainError: If ``t <= 0``, ``N < 2`` or a count is negative.

    >>> round(bitrate(100, 20, 0, 120.0), 6)
    1.104893
    """
    if not t > 0:
        raise BitrateDomainError("task time must be positive, got {}".format(t))
    if N < 2 or S_c < 0 or S_i < 0:
        raise BitrateDomainError("need N >= 2 and nonnegative counts, got N={} S_c={} S_i={}".format(N, S_c, S_i))

    return math.log2(N - 1) * max(S_c - S_i, 0) / t


def acquisition_time(result: SimulationResult) -> typing.Optional[float]:
    """
    Mean duration of the correctly selected trials; ``None`` when there are none. Wrong selections
    and timeouts count as failed trials.
    """
    durations = [trial.duration_s for trial in result.trials if trial.outcome is Outcome.CORRECT]
    if len(durations) == 0:
        return None

    return float(np.mean(durations))


def run_grid_simulation(
    decoder: DecoderModel,
    index: SampleIndex,
    config: GridTaskConfig,
    seed: int,
    trajectory: typing.Optional[typing.List[TrajectoryRow]] = None,
) -> SimulationResult:
    """
    Simulates one run of the Grid task.

    The cursor starts at the workspace center and persists across trials. Each trial spawns a
    uniformly random target other than the cell under the cursor. Per tick: draw features for the
    current cursor-to-target vector, decode a velocity, move and clamp the cursor, then update the dwell
    clock, which restarts whenever the cursor changes cell. A full dwell selects the cell under the
    cursor; reaching the timeout fails the trial. The trial running when the run time is up is
    discarded, but its time counts toward the elapsed time. The decoder state is reset at run start only.

    :param trajectory: When given, one :class:`TrajectoryRow` per tick is appended to it.

    :raise SimulationError: If the decoder does not accept the index features, or a decoder or sampler
                            error aborts the run.
    """
    if decoder.feature_count is not None and decoder.feature_count != index.feature_count:
        raise SimulationError(
            "decoder expects {} features, index holds {}".format(decoder.feature_count, index.feature_count)
        )

    n = config.n
    rng = utils.make_rng(seed)
    state = decoder.initial_state()
    position = np.zeros(2)
    trials: typing.List[TrialRecord] = []
    tick = 0

    while tick < config.run_ticks:
        start_cell = cell_of(position, n)
        offset = int(rng.integers(n * n - 1))
        target = offset if offset < start_cell else offset + 1
        center = cell_center(target, n)

        dwell_cell, dwell_ticks, trial_ticks = start_cell, 0, 0
        record: typing.Optional[TrialRecord] = None

        while record is None and tick < config.run_ticks:
            cursor_to_target = center - position
            try:
                features = index.features_at(index.draw_position(cursor_to_target, rng))
                velocity, state = decoder.step(state, features, cursor_to_target)
            except utils.RetrodecodeError as error:
                raise SimulationError("run seed {}, tick {}, trial {}: {}".format(seed, tick, len(trials), error)) from error

            position = np.clip(position + np.asarray(velocity, dtype=float) * config.tick_s, -1.0, 1.0)
            tick += 1
            trial_ticks += 1

            cell = cell_of(position, n)
            if cell == dwell_cell:
                dwell_ticks += 1
            else:
                dwell_cell, dwell_ticks = cell, 0

            if dwell_ticks >= config.dwell_ticks:
                outcome = Outcome.CORRECT if cell == target else Outcome.WRONG_SELECT
                record = TrialRecord(target, outcome, trial_ticks * config.tick_s, cell)
            elif trial_ticks >= config.timeout_ticks:
                record = TrialRecord(target, Outcome.TIMEOUT, trial_ticks * config.tick_s, None)

            if trajectory is not None:
                event = "move" if record is None else record.outcome.value
                trajectory.append(TrajectoryRow(len(trials), tick, position[0], position[1], target, event))

        if record is not None:
            trials.append(record)
        elif trajectory is not None and len(trajectory) > 0:
            trajectory[-1] = trajectory[-1]._replace(event="discarded")

    return SimulationResult(trials, n, tick * config.tick_s, seed)


def write_trajectory_log(rows: typing.Sequence[TrajectoryRow], path: typing.Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(TrajectoryRow._fields)
        for row in rows:
            writer.writerow([row.trial, row.tick, "%.9g" % row.cursor_x, "%.9g" % row.cursor_y, row.target_cell, row.event])


# Repeats


class RepeatResult(typing.NamedTuple):
    results: typing.Tuple[SimulationResult, ...]
    median_bitrate: float

    @property
    def bitrates(self) -> typing.List[float]:
        return [result.bitrate_bps for result in self.results]

    @property
    def failed(self) -> bool:
        """
        :getter: Whether every repeat scored 0 bps.
        """
        return all(value == 0.0 for value in self.bitrates)

    @property
    def mean_acq_time_s(self) -> typing.Optional[float]:
        """
        :getter: Mean duration of the correct trials pooled over all repeats.
        """
        durations = [
            trial.duration_s for result in self.results for trial in result.trials if trial.outcome is Outcome.CORRECT
        ]
        return float(np.mean(durations)) if durations else None


def _run_seeded(decoder: DecoderModel, index: SampleIndex, config: GridTaskConfig, seed: int) -> SimulationResult:
    return run_grid_simulation(decoder, index, config, seed)


def repeat_seeds(master_seed: int, repeats: int) -> typing.List[int]:
    return [utils.derive_seed(master_seed, repeat) for repeat in range(repeats)]


def repeat_simulations(
    decoder: DecoderModel,
    index: SampleIndex,
    config: GridTaskConfig,
    master_seed: int,
    repeats: int = REPEATS,
    executor: typing.Optional[Executor] = None,
) -> RepeatResult:
    """
    Runs :attr:`repeats` simulations with seeds derived from ``(master_seed, repeat)`` and reports
    their median bitrate. Results are in repeat order whatever the executor.

    :raise ValueError: If :attr:`repeats` is below 1.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1, got {}".format(repeats))

    run = functools.partial(_run_seeded, decoder, index, config)
    results = tuple(utils.parallel_map(run, repeat_seeds(master_seed, repeats), executor))
    median_bitrate = utils.median([result.bitrate_bps for result in results])
    logger.debug("%r on %s: median %.4f bps over %d repeats", decoder, config.name, median_bitrate, repeats)

    return RepeatResult(results, median_bitrate)
