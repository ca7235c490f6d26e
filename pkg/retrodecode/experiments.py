"""
Study protocols: gain/smoothing optimization on validation blocks, the training-set-size study over
the number of prior sessions, the grid-size sweep and the head-to-head comparison with its
exclusion rule. Report CSV writers live here too.

Every protocol is split into independent cells (one test session and decoder kind, plus ``D`` for
the training-size study). Cells only read shared immutable inputs and derive their seeds from the
master seed and their keys, so the optional executor changes speed, never results.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import functools
import itertools
import logging
from concurrent.futures import Executor
from pathlib import Path
import typing

import numpy as np

from . import utils
from .datamodel import DataSplit, SessionData, make_split, select_blocks
from .decoders import DecoderModel, KalmanDecoder, NullDecoder, OracleDecoder, RnnDecoder
from .kalman import ALPHA_VALUES, RIDGE_LAMBDAS, fit_kalman
from .rnn import TrainConfig, make_sequences, train_rnn
from .sampler import DEFAULT_ANGLE_BINS, DEFAULT_DIST_BINS, SampleIndex, build_index
from .simulator import REPEATS, RUN_DURATION_S, GridTaskConfig, RepeatResult, repeat_simulations

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"


class DecoderKind(enum.Enum):
    KALMAN = "kalman"
    RNN = "rnn"
    ORACLE = "oracle"
    NULL = "null"


_KIND_CODES = {kind: code for code, kind in enumerate(DecoderKind)}


class SweepSpec:
    """
    Parameter grids and repeat counts shared by the protocols.

    The gain grid is ``gain_count`` log-spaced values over ``[gain_min, gain_max]``; smoothing values
    only apply to the Kalman decoder, which is optimized over the full gain x smoothing product.
    """

    def __init__(
        self,
        gain_min: float = 0.05,
        gain_max: float = 20.0,
        gain_count: int = 150,
        alpha_values: typing.Sequence[float] = ALPHA_VALUES,
        d_range: typing.Sequence[int] = tuple(range(0, 31)),
        grid_range: typing.Sequence[int] = tuple(range(2, 26)),
        repeats: int = REPEATS,
        optimization_repeats: int = REPEATS,
        run_duration_s: float = RUN_DURATION_S,
        angle_bins: int = DEFAULT_ANGLE_BINS,
        dist_bins: int = DEFAULT_DIST_BINS,
        ridge_lambdas: typing.Sequence[float] = RIDGE_LAMBDAS,
    ) -> None:
        if not 0 < gain_min <= gain_max:
            raise ValueError("need 0 < gain_min <= gain_max")
        if gain_count < 1 or len(alpha_values) < 1 or len(d_range) < 1 or len(grid_range) < 1:
            raise ValueError("parameter grids must be nonempty")
        if repeats < 1 or optimization_repeats < 1:
            raise ValueError("repeat counts must be >= 1")
        if min(d_range) < 0 or min(grid_range) < 2:
            raise ValueError("D values must be >= 0 and grid sizes >= 2")

        self.gain_min = float(gain_min)
        self.gain_max = float(gain_max)
        self.gain_count = int(gain_count)
        self.alpha_values = tuple(sorted(float(alpha) for alpha in alpha_values))
        self.d_range = tuple(sorted(int(value) for value in d_range))
        self.grid_range = tuple(sorted(int(value) for value in grid_range))
        self.repeats = int(repeats)
        self.optimization_repeats = int(optimization_repeats)
        self.run_duration_s = float(run_duration_s)
        self.angle_bins = int(angle_bins)
        self.dist_bins = int(dist_bins)
        self.ridge_lambdas = tuple(float(value) for value in ridge_lambdas)

    @property
    def gain_values(self) -> np.ndarray:
        return np.geomspace(self.gain_min, self.gain_max, self.gain_count)

    def candidates(self, decoder: DecoderModel) -> typing.List[typing.Tuple[float, typing.Optional[float]]]:
        """
        ``(gain, alpha)`` candidates in tie-break order: ascending gain, then ascending alpha.
        """
        gains = [float(gain) for gain in self.gain_values]
        if decoder.alpha is None:
            return [(gain, None) for gain in gains]
        return list(itertools.product(gains, self.alpha_values))

    def comparison_tasks(self) -> typing.Tuple[GridTaskConfig, GridTaskConfig]:
        return (
            dataclasses.replace(GridTaskConfig.high_accuracy(), run_duration_s=self.run_duration_s),
            dataclasses.replace(GridTaskConfig.high_speed(), run_duration_s=self.run_duration_s),
        )

    def sweep_task(self, n: int) -> GridTaskConfig:
        return dataclasses.replace(GridTaskConfig.sweep(n), run_duration_s=self.run_duration_s)

    def __repr__(self) -> str:
        return "SweepSpec(gains={}x[{}, {}], alphas={}, repeats={}/{})".format(
            self.gain_count, self.gain_min, self.gain_max, self.alpha_values, self.optimization_repeats, self.repeats
        )


# Decoders per split


def build_decoder(
    kind: typing.Union[DecoderKind, str],
    sessions: typing.Sequence[SessionData],
    split: DataSplit,
    train_config: TrainConfig = TrainConfig(),
    ridge_lambdas: typing.Sequence[float] = RIDGE_LAMBDAS,
) -> DecoderModel:
    """
    Fits or trains a decoder of :attr:`kind` on the training blocks of :attr:`split`. The RNN picks
    its epoch on the validation blocks. Reference decoders need no data.
    """
    kind = DecoderKind(kind)

    if kind is DecoderKind.KALMAN:
        blocks = select_blocks(sessions, split.train_blocks)
        features = np.concatenate([block.features for block in blocks], axis=0)
        labels = np.concatenate([block.labels for block in blocks], axis=0)
        return KalmanDecoder(fit_kalman(features, labels, ridge_lambdas=ridge_lambdas))
    if kind is DecoderKind.RNN:
        train = make_sequences(select_blocks(sessions, split.train_blocks), train_config.unroll_steps)
        valid = make_sequences(select_blocks(sessions, split.validation_blocks), train_config.unroll_steps)
        return RnnDecoder(train_rnn(train, valid, train_config))
    if kind is DecoderKind.ORACLE:
        return OracleDecoder()
    return NullDecoder()


def build_split_index(
    sessions: typing.Sequence[SessionData], refs: typing.Sequence[typing.Any], spec: SweepSpec
) -> SampleIndex:
    return build_index(select_blocks(sessions, refs), spec.angle_bins, spec.dist_bins)


# Optimization


class OptimizationResult(typing.NamedTuple):
    gain: float
    alpha: typing.Optional[float]
    score: float
    zero_score: bool
    task_medians: typing.Tuple[float, ...]


def _score_candidate(
    decoder: DecoderModel,
    index: SampleIndex,
    tasks: typing.Sequence[GridTaskConfig],
    master_seed: int,
    repeats: int,
    candidate: typing.Tuple[float, typing.Optional[float]],
) -> typing.Tuple[float, ...]:
    gain, alpha = candidate
    tuned = decoder.with_params(gain=gain, alpha=alpha)
    return tuple(
        repeat_simulations(tuned, index, task, utils.derive_seed(master_seed, position), repeats).median_bitrate
        for position, task in enumerate(tasks)
    )


def optimize_parameters(
    decoder: DecoderModel,
    validation_index: SampleIndex,
    spec: SweepSpec,
    tasks: typing.Optional[typing.Sequence[GridTaskConfig]] = None,
    master_seed: int = 0,
    executor: typing.Optional[Executor] = None,
) -> OptimizationResult:
    """
    Picks the gain (and, for decoders with smoothing, alpha) maximizing the mean over :attr:`tasks`
    of the median bitrate on validation data. Ties go to the smaller gain, then the smaller alpha.
    Every candidate is scored with the same simulation seeds.

    :param validation_index: Index over the validation blocks only.
    :param tasks: Task variants to combine; defaults to the high-accuracy and high-speed tasks.
    :return: The selection, flagged ``zero_score`` when every candidate scored 0 on every task.
    """
    tasks = tuple(spec.comparison_tasks() if tasks is None else tasks)
    candidates = spec.candidates(decoder)
    score = functools.partial(_score_candidate, decoder, validation_index, tasks, master_seed, spec.optimization_repeats)
    medians = utils.parallel_map(score, candidates, executor)

    best = 0
    combined = [float(np.mean(values)) for values in medians]
    for position, value in enumerate(combined):
        if value > combined[best]:
            best = position

    gain, alpha = candidates[best]
    zero_score = combined[best] == 0.0
    if zero_score:
        logger.warning("%r scored 0 bps for every candidate; falling back to gain %.4g", decoder, gain)
    else:
        logger.info("Selected gain %.4g, alpha %s for %r (%.4f bps)", gain, alpha, decoder, combined[best])

    return OptimizationResult(gain, alpha, combined[best], zero_score, tuple(medians[best]))


def evaluate_decoder(
    decoder: DecoderModel,
    index: SampleIndex,
    tasks: typing.Sequence[GridTaskConfig],
    master_seed: int,
    repeats: int,
) -> typing.Dict[str, RepeatResult]:
    return {
        task.name: repeat_simulations(decoder, index, task, utils.derive_seed(master_seed, position), repeats)
        for position, task in enumerate(tasks)
    }


# Session cells


@dataclasses.dataclass
class TaskOutcome:
    median_bitrate: float
    bitrates: typing.List[float]
    acq_time_s: typing.Optional[float]
    failed: bool
    gain: typing.Optional[float] = None
    alpha: typing.Optional[float] = None

    @classmethod
    def from_repeats(
        cls, result: RepeatResult, gain: typing.Optional[float] = None, alpha: typing.Optional[float] = None
    ) -> TaskOutcome:
        return cls(result.median_bitrate, result.bitrates, result.mean_acq_time_s, result.failed, gain, alpha)


@dataclasses.dataclass
class CellResult:
    """
    Outcome of the full pipeline (split, fit, optimize, test) for one session and decoder.
    ``error`` is set when the cell failed before producing task outcomes.
    """

    session_index: int
    kind: DecoderKind
    prior_sessions: int
    gain: typing.Optional[float] = None
    alpha: typing.Optional[float] = None
    tasks: typing.Dict[str, TaskOutcome] = dataclasses.field(default_factory=dict)
    error: typing.Optional[str] = None

    @property
    def combined_bitrate(self) -> typing.Optional[float]:
        if self.error is not None or len(self.tasks) == 0:
            return None
        return float(np.mean([outcome.median_bitrate for outcome in self.tasks.values()]))

    def failed(self, task: typing.Optional[str] = None) -> bool:
        """
        Whether the cell errored or scored 0 bps on every repeat of :attr:`task` (of any task when
        ``None``).
        """
        if self.error is not None:
            return True
        if task is None:
            return any(outcome.failed for outcome in self.tasks.values())
        return self.tasks[task].failed


class CellRequest(typing.NamedTuple):
    session_index: int
    kind: DecoderKind
    prior_sessions: int
    tasks: typing.Tuple[GridTaskConfig, ...]
    optimize_per_task: bool


def _cell_seed(master_seed: int, session_index: int, kind: DecoderKind, prior_sessions: int) -> int:
    return utils.derive_seed(master_seed, session_index, _KIND_CODES[kind], prior_sessions)


def run_cell(
    sessions: typing.Sequence[SessionData],
    spec: SweepSpec,
    train_config: TrainConfig,
    master_seed: int,
    request: CellRequest,
) -> CellResult:
    """
    Runs one cell. Decoders are built from the training blocks, optimized against an index over the
    validation blocks and evaluated against an index over the test blocks; test blocks are never
    used before the final evaluation.

    With ``optimize_per_task`` every task gets its own optimization (the grid-size sweep); otherwise
    one parameter set is optimized over all tasks combined. Domain errors are recorded in the result.
    """
    cell = CellResult(request.session_index, request.kind, request.prior_sessions)
    seed = _cell_seed(master_seed, request.session_index, request.kind, request.prior_sessions)
    # Shared by all decoder kinds so that decoders face the same simulated draws.
    evaluation_seed = utils.derive_seed(master_seed, request.session_index, 1_000_003)

    try:
        split = make_split(sessions, request.session_index, request.prior_sessions)
        config = dataclasses.replace(train_config, seed=utils.derive_seed(seed, 0))
        decoder = build_decoder(request.kind, sessions, split, config, spec.ridge_lambdas)
        validation_index = build_split_index(sessions, split.validation_blocks, spec)

        groups = [(task,) for task in request.tasks] if request.optimize_per_task else [request.tasks]
        test_index = build_split_index(sessions, split.test_blocks, spec)
        for position, group in enumerate(groups):
            selection = optimize_parameters(
                decoder, validation_index, spec, group, utils.derive_seed(seed, 1, position)
            )
            tuned = decoder.with_params(gain=selection.gain, alpha=selection.alpha)
            cell.gain, cell.alpha = selection.gain, selection.alpha
            evaluated = evaluate_decoder(tuned, test_index, group, evaluation_seed, spec.repeats)
            for name, result in evaluated.items():
                cell.tasks[name] = TaskOutcome.from_repeats(result, selection.gain, selection.alpha)
    except utils.RetrodecodeError as error:
        cell.error = "{}: {}".format(error.__class__.__name__, error)
        logger.warning("Cell session=%d kind=%s D=%d failed: %s", request.session_index, request.kind.value, request.prior_sessions, cell.error)
    else:
        logger.info(
            "Cell session=%d kind=%s D=%d done: %s",
            request.session_index,
            request.kind.value,
            request.prior_sessions,
            ", ".join("{} {:.4f} bps".format(name, outcome.median_bitrate) for name, outcome in cell.tasks.items()),
        )

    return cell


def run_cells(
    sessions: typing.Sequence[SessionData],
    requests: typing.Sequence[CellRequest],
    spec: SweepSpec,
    train_config: TrainConfig,
    master_seed: int,
    executor: typing.Optional[Executor] = None,
) -> typing.List[CellResult]:
    run = functools.partial(run_cell, list(sessions), spec, train_config, master_seed)
    return utils.parallel_map(run, list(requests), executor)


# Training-size study


class CurvePoint(typing.NamedTuple):
    kind: DecoderKind
    prior_sessions: int
    mean_bitrate: float
    sem: float
    sessions: int


class TaskCurvePoint(typing.NamedTuple):
    kind: DecoderKind
    task: str
    prior_sessions: int
    mean_bitrate: float
    sem: float
    sessions: int


class TrainingSizeStudy(typing.NamedTuple):
    """
    ``curve`` averages the combined bitrate of both tasks; ``task_curves`` holds one curve per task.
    """

    cells: typing.List[CellResult]
    curve: typing.List[CurvePoint]
    optimal_d: typing.Dict[DecoderKind, int]
    task_curves: typing.List[TaskCurvePoint]

    def curve_for(self, kind: DecoderKind) -> typing.Dict[int, float]:
        return {point.prior_sessions: point.mean_bitrate for point in self.curve if point.kind is kind}


def optimal_prior_sessions(curve: typing.Mapping[int, float]) -> int:
    """
    The smallest ``D`` attaining the maximum of the curve. Undefined (NaN) points are ignored.

    >>> optimal_prior_sessions({0: 1.0, 1: 1.2, 7: 1.2})
    1
    """
    defined = {d: value for d, value in curve.items() if not np.isnan(value)}
    if len(defined) == 0:
        raise ValueError("the curve has no defined points")

    best = max(defined.values())
    return min(d for d, value in defined.items() if value == best)


def _mean_and_sem(values: typing.Sequence[float]) -> typing.Tuple[float, float]:
    mean = float(np.mean(values)) if values else float("nan")
    sem = float(np.std(values, ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, sem


def training_size_study(
    sessions: typing.Sequence[SessionData],
    test_sessions: typing.Sequence[int],
    kinds: typing.Sequence[typing.Union[DecoderKind, str]],
    spec: SweepSpec = SweepSpec(),
    train_config: TrainConfig = TrainConfig(),
    master_seed: int = 0,
    executor: typing.Optional[Executor] = None,
) -> TrainingSizeStudy:
    """
    Runs the full pipeline for every test session, decoder kind and ``D`` in ``spec.d_range`` and
    averages the combined (high-accuracy, high-speed) bitrate over sessions.

    Failed cells are recorded and left out of the averages.
    """
    kinds = [DecoderKind(kind) for kind in kinds]
    tasks = spec.comparison_tasks()
    requests = [
        CellRequest(session, kind, d, tasks, False) for kind in kinds for d in spec.d_range for session in test_sessions
    ]
    cells = run_cells(sessions, requests, spec, train_config, master_seed, executor)

    curve = []
    task_curves = []
    optimal = {}
    for kind in kinds:
        for d in spec.d_range:
            matching = [cell for cell in cells if cell.kind is kind and cell.prior_sessions == d]
            values = [cell.combined_bitrate for cell in matching if cell.combined_bitrate is not None]
            curve.append(CurvePoint(kind, d, *_mean_and_sem(values), len(values)))
            for task in tasks:
                per_task = [cell.tasks[task.name].median_bitrate for cell in matching if cell.combined_bitrate is not None]
                task_curves.append(TaskCurvePoint(kind, task.name, d, *_mean_and_sem(per_task), len(per_task)))
        try:
            optimal[kind] = optimal_prior_sessions({point.prior_sessions: point.mean_bitrate for point in curve if point.kind is kind})
        except ValueError:
            logger.warning("Every cell failed for %s; no optimal D", kind.value)

    return TrainingSizeStudy(cells, curve, optimal, task_curves)


# Grid-size sweep


class GridSweepRow(typing.NamedTuple):
    n: int
    kind: DecoderKind
    median_bitrate: float
    median_acq_time_s: float
    failures: int


def grid_size_sweep(
    sessions: typing.Sequence[SessionData],
    test_sessions: typing.Sequence[int],
    optimal_d: typing.Mapping[typing.Union[DecoderKind, str], int],
    spec: SweepSpec = SweepSpec(),
    train_config: TrainConfig = TrainConfig(),
    master_seed: int = 0,
    executor: typing.Optional[Executor] = None,
) -> typing.Tuple[typing.List[GridSweepRow], typing.List[CellResult]]:
    """
    For every grid size in ``spec.grid_range`` (dwell 1 s, timeout 5 s) and every test session, each
    decoder trained at its optimal ``D`` is optimized at that grid size and evaluated on the test
    blocks.

    ``failures`` counts the sessions where a decoder scored 0 bps on every repeat (or failed to
    build). Medians over sessions leave out every session that failed for any decoder at that size.
    """
    kinds = {DecoderKind(kind): int(d) for kind, d in optimal_d.items()}
    tasks = tuple(spec.sweep_task(n) for n in spec.grid_range)
    requests = [CellRequest(session, kind, d, tasks, True) for kind, d in kinds.items() for session in test_sessions]
    cells = run_cells(sessions, requests, spec, train_config, master_seed, executor)

    rows = []
    for n, task in zip(spec.grid_range, tasks):
        failed_sessions = {cell.session_index for cell in cells if cell.error is not None or cell.failed(task.name)}
        for kind in kinds:
            kind_cells = [cell for cell in cells if cell.kind is kind]
            failures = sum(1 for cell in kind_cells if cell.error is not None or cell.failed(task.name))
            included = [cell.tasks[task.name] for cell in kind_cells if cell.session_index not in failed_sessions]
            bitrates = [outcome.median_bitrate for outcome in included]
            acq_times = [outcome.acq_time_s for outcome in included if outcome.acq_time_s is not None]
            rows.append(
                GridSweepRow(
                    n,
                    kind,
                    utils.median(bitrates) if bitrates else float("nan"),
                    utils.median(acq_times) if acq_times else float("nan"),
                    failures,
                )
            )

    return rows, cells


class GridRankSum(typing.NamedTuple):
    n: int
    first: DecoderKind
    second: DecoderKind
    statistic: float
    p_value: float


def grid_sweep_rank_sums(
    cells: typing.Sequence[CellResult], spec: SweepSpec, kinds: typing.Sequence[typing.Union[DecoderKind, str]]
) -> typing.List[GridRankSum]:
    """
    Wilcoxon rank-sum test between two decoders at every grid size, over the repeat bitrates of the
    sessions where neither decoder failed at that size. Sizes without such sessions are skipped.
    """
    first, second = (DecoderKind(kind) for kind in kinds)
    results = []
    for n in spec.grid_range:
        name = spec.sweep_task(n).name
        failed_sessions = {cell.session_index for cell in cells if cell.failed(name)}
        pooled = {
            kind: [
                value
                for cell in sorted(cells, key=lambda cell: cell.session_index)
                if cell.kind is kind and cell.session_index not in failed_sessions
                for value in cell.tasks[name].bitrates
            ]
            for kind in (first, second)
        }
        if len(pooled[first]) == 0 or len(pooled[second]) == 0:
            continue
        statistic, p_value = utils.rank_sum_test(pooled[first], pooled[second])
        results.append(GridRankSum(n, first, second, statistic, p_value))
    return results


# Head-to-head comparison


class ComparisonRow(typing.NamedTuple):
    session_index: int
    task: str
    kind: DecoderKind
    median_bitrate: float
    acq_time_s: typing.Optional[float]
    excluded: bool
    cause: str


class ComparisonReport(typing.NamedTuple):
    """
    Per-session, per-task medians of both decoders, the exclusion of sessions where a decoder could not
    complete a task, and aggregates over the included sessions.
    """

    rows: typing.List[ComparisonRow]
    kinds: typing.Tuple[DecoderKind, DecoderKind]
    exclusions: typing.Dict[int, str]
    aggregate_medians: typing.Dict[typing.Tuple[str, DecoderKind], float]
    rank_sum: typing.Dict[str, typing.Tuple[float, float]]
    cells: typing.List[CellResult]

    @property
    def included_sessions(self) -> typing.List[int]:
        return sorted({row.session_index for row in self.rows if not row.excluded})


def exclusion_cause(failed_kinds: typing.Sequence[DecoderKind]) -> str:
    """
    >>> exclusion_cause([DecoderKind.RNN])
    'rnn-failed'
    >>> exclusion_cause([DecoderKind.RNN, DecoderKind.KALMAN])
    'both-failed'
    """
    if len(failed_kinds) == 0:
        return ""
    if len(failed_kinds) > 1:
        return "both-failed"
    return "{}-failed".format(failed_kinds[0].value)


def head_to_head(
    sessions: typing.Sequence[SessionData],
    test_sessions: typing.Sequence[int],
    optimal_d: typing.Mapping[typing.Union[DecoderKind, str], int],
    spec: SweepSpec = SweepSpec(),
    train_config: TrainConfig = TrainConfig(),
    master_seed: int = 0,
    executor: typing.Optional[Executor] = None,
) -> ComparisonReport:
    """
    Compares two decoders, each trained at its own ``D`` with one session-optimized parameter set for
    both tasks. A session is excluded when either decoder scores 0 bps on all repeats of either task.
    """
    kinds = tuple(DecoderKind(kind) for kind in optimal_d)
    if len(kinds) != 2:
        raise ValueError("head-to-head compares exactly two decoders, got {}".format(len(kinds)))
    depth = {DecoderKind(kind): int(d) for kind, d in optimal_d.items()}
    tasks = spec.comparison_tasks()

    requests = [CellRequest(session, kind, depth[kind], tasks, False) for session in test_sessions for kind in kinds]
    cells = run_cells(sessions, requests, spec, train_config, master_seed, executor)
    by_key = {(cell.session_index, cell.kind): cell for cell in cells}

    rows = []
    exclusions = {}
    for session in sorted(set(test_sessions)):
        failed = [kind for kind in kinds if by_key[(session, kind)].failed()]
        cause = exclusion_cause(failed)
        if cause:
            exclusions[session] = cause
        for task in tasks:
            for kind in kinds:
                cell = by_key[(session, kind)]
                outcome = cell.tasks.get(task.name)
                rows.append(
                    ComparisonRow(
                        session,
                        task.name,
                        kind,
                        outcome.median_bitrate if outcome is not None else float("nan"),
                        outcome.acq_time_s if outcome is not None else None,
                        bool(cause),
                        cause,
                    )
                )

    aggregates = {}
    rank_sum = {}
    for task in tasks:
        pooled = {}
        for kind in kinds:
            included = [row.median_bitrate for row in rows if row.task == task.name and row.kind is kind and not row.excluded]
            aggregates[(task.name, kind)] = utils.median(included) if included else float("nan")
            pooled[kind] = [
                value
                for (session, cell_kind), cell in sorted(by_key.items(), key=lambda item: (item[0][0], item[0][1].value))
                if cell_kind is kind and session not in exclusions
                for value in cell.tasks[task.name].bitrates
            ]
        if all(len(values) > 0 for values in pooled.values()):
            rank_sum[task.name] = utils.rank_sum_test(pooled[kinds[0]], pooled[kinds[1]])

    logger.info("Head-to-head: %d sessions included, %d excluded", len(set(test_sessions)) - len(exclusions), len(exclusions))
    return ComparisonReport(rows, (kinds[0], kinds[1]), exclusions, aggregates, rank_sum, cells)


# Report files


def _format(value: typing.Optional[float]) -> str:
    if value is None:
        return "nan"
    return FLOAT_FORMAT % value


def _write_rows(path: typing.Union[str, Path], header: typing.Sequence[str], rows: typing.Iterable[typing.Sequence[typing.Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    logger.info("Wrote %s", path)
    return path


def write_training_size_curve(study: TrainingSizeStudy, path: typing.Union[str, Path]) -> Path:
    points = sorted(study.curve, key=lambda point: (point.kind.value, point.prior_sessions))
    return _write_rows(
        path,
        ["decoder", "D", "mean_bitrate", "sem"],
        ([point.kind.value, point.prior_sessions, _format(point.mean_bitrate), _format(point.sem)] for point in points),
    )


def write_training_size_task_curves(study: TrainingSizeStudy, path: typing.Union[str, Path]) -> Path:
    points = sorted(study.task_curves, key=lambda point: (point.kind.value, point.task, point.prior_sessions))
    return _write_rows(
        path,
        ["decoder", "task", "D", "mean_bitrate", "sem", "sessions"],
        (
            [point.kind.value, point.task, point.prior_sessions, _format(point.mean_bitrate), _format(point.sem), point.sessions]
            for point in points
        ),
    )


def write_grid_sweep(rows: typing.Sequence[GridSweepRow], path: typing.Union[str, Path]) -> Path:
    ordered = sorted(rows, key=lambda row: (row.n, row.kind.value))
    return _write_rows(
        path,
        ["n", "decoder", "median_bitrate", "median_acq_time", "failures"],
        (
            [row.n, row.kind.value, _format(row.median_bitrate), _format(row.median_acq_time_s), row.failures]
            for row in ordered
        ),
    )


def write_grid_rank_sum(results: typing.Sequence[GridRankSum], path: typing.Union[str, Path]) -> Path:
    return _write_rows(
        path,
        ["n", "first", "second", "statistic", "p_value"],
        (
            [result.n, result.first.value, result.second.value, _format(result.statistic), _format(result.p_value)]
            for result in sorted(results, key=lambda result: result.n)
        ),
    )


def write_head_to_head(report: ComparisonReport, path: typing.Union[str, Path]) -> Path:
    ordered = sorted(report.rows, key=lambda row: (row.session_index, row.task, row.kind.value))
    return _write_rows(
        path,
        ["session", "task", "decoder", "median_bitrate", "excluded", "cause"],
        (
            [row.session_index, row.task, row.kind.value, _format(row.median_bitrate), str(row.excluded).lower(), row.cause]
            for row in ordered
        ),
    )


def write_cells(cells: typing.Sequence[CellResult], path: typing.Union[str, Path]) -> Path:
    """
    One row per cell and task with the selected parameters, or a single row carrying the error of a
    failed cell.
    """
    rows = []
    for cell in sorted(cells, key=lambda cell: (cell.session_index, cell.kind.value, cell.prior_sessions)):
        prefix = [cell.session_index, cell.kind.value, cell.prior_sessions]
        if cell.error is not None:
            rows.append(prefix + ["", "nan", "nan", "", "true", cell.error])
            continue
        for name, outcome in sorted(cell.tasks.items()):
            alpha = "" if outcome.alpha is None else _format(outcome.alpha)
            failed = str(outcome.failed).lower()
            rows.append(prefix + [name, _format(outcome.median_bitrate), _format(outcome.gain), alpha, failed, ""])

    return _write_rows(
        path, ["session", "decoder", "D", "task", "median_bitrate", "gain", "alpha", "failed", "error"], rows
    )


def write_comparison_acq_times(report: ComparisonReport, path: typing.Union[str, Path]) -> Path:
    ordered = sorted(report.rows, key=lambda row: (row.session_index, row.task, row.kind.value))
    return _write_rows(
        path,
        ["session", "task", "decoder", "median_acq_time", "excluded"],
        (
            [row.session_index, row.task, row.kind.value, _format(row.acq_time_s), str(row.excluded).lower()]
            for row in ordered
        ),
    )


def write_rank_sum(report: ComparisonReport, path: typing.Union[str, Path]) -> Path:
    first, second = report.kinds
    return _write_rows(
        path,
        ["task", "first", "second", "statistic", "p_value"],
        (
            [task, first.value, second.value, _format(statistic), _format(p_value)]
            for task, (statistic, p_value) in sorted(report.rank_sum.items())
        ),
    )


def _read_rows(path: Path) -> typing.List[typing.Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as file:
        return list(csv.DictReader(file))


def summarize_reports(directory: typing.Union[str, Path]) -> typing.List[typing.Tuple[str, str, str, str]]:
    """
    Condenses whichever report CSVs exist in :attr:`directory` into ``(metric, decoder, task, value)``
    rows: the optimal ``D`` per decoder, the comparison medians over included sessions, the number of
    excluded sessions, rank-sum p-values (per comparison task and per grid size) and the largest grid size without failures per decoder.
    """
    directory = Path(directory)
    summary: typing.List[typing.Tuple[str, str, str, str]] = []

    curve_path = directory / "training_size_curve.csv"
    if curve_path.exists():
        curves: typing.Dict[str, typing.Dict[int, float]] = {}
        for row in _read_rows(curve_path):
            curves.setdefault(row["decoder"], {})[int(row["D"])] = float(row["mean_bitrate"])
        for decoder, curve in sorted(curves.items()):
            try:
                summary.append(("optimal_d", decoder, "", str(optimal_prior_sessions(curve))))
            except ValueError:
                summary.append(("optimal_d", decoder, "", "nan"))

    comparison_path = directory / "head_to_head.csv"
    if comparison_path.exists():
        rows = _read_rows(comparison_path)
        excluded = {row["session"] for row in rows if row["excluded"] == "true"}
        summary.append(("excluded_sessions", "", "", str(len(excluded))))
        groups: typing.Dict[typing.Tuple[str, str], typing.List[float]] = {}
        for row in rows:
            if row["excluded"] != "true":
                groups.setdefault((row["decoder"], row["task"]), []).append(float(row["median_bitrate"]))
        for (decoder, task), values in sorted(groups.items()):
            summary.append(("median_bitrate", decoder, task, _format(utils.median(values))))

    rank_sum_path = directory / "rank_sum.csv"
    if rank_sum_path.exists():
        for row in _read_rows(rank_sum_path):
            summary.append(("rank_sum_p", "{}-vs-{}".format(row["first"], row["second"]), row["task"], row["p_value"]))

    grid_rank_sum_path = directory / "grid_rank_sum.csv"
    if grid_rank_sum_path.exists():
        for row in _read_rows(grid_rank_sum_path):
            summary.append(("grid_rank_sum_p", "{}-vs-{}".format(row["first"], row["second"]), "sweep-{}".format(row["n"]), row["p_value"]))

    sweep_path = directory / "grid_sweep.csv"
    if sweep_path.exists():
        completed: typing.Dict[str, int] = {}
        for row in _read_rows(sweep_path):
            completed.setdefault(row["decoder"], 0)
            if int(row["failures"]) == 0:
                completed[row["decoder"]] = max(completed[row["decoder"]], int(row["n"]))
        for decoder, n in sorted(completed.items()):
            summary.append(("largest_grid_without_failures", decoder, "", str(n)))

    return summary


def write_summary(summary: typing.Sequence[typing.Sequence[str]], path: typing.Union[str, Path]) -> Path:
    return _write_rows(path, ["metric", "decoder", "task", "value"], summary)
