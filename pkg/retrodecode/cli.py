"""
Command-line entry point: ``retrodecode <subcommand> [--config file.yaml] [flags]``.

Every subcommand resolves an :class:`ExperimentConfig` from an optional YAML file and flag
overrides (flags win), writes its CSV outputs and a ``run_metadata.yaml`` snapshot of the resolved
configuration to the output directory. Exit codes: 0 on success, 1 on runtime failure and 2 on usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import logging
import os
from concurrent.futures import Executor, ProcessPoolExecutor
from pathlib import Path
import sys
import typing

import yaml

from . import __version__, utils
from .datamodel import SessionData, load_dataset, make_split, prepare_sessions
from .decoders import DecoderModel, KalmanDecoder, RnnDecoder
from .experiments import (
    DecoderKind,
    SweepSpec,
    build_decoder,
    build_split_index,
    grid_size_sweep,
    grid_sweep_rank_sums,
    head_to_head,
    optimal_prior_sessions,
    optimize_parameters,
    summarize_reports,
    training_size_study,
    write_cells,
    write_comparison_acq_times,
    write_grid_rank_sum,
    write_grid_sweep,
    write_head_to_head,
    write_rank_sum,
    write_summary,
    write_training_size_curve,
    write_training_size_task_curves,
)
from .kalman import ALPHA_VALUES, save_kalman
from .rnn import TrainConfig, save_rnn
from .simulator import GridTaskConfig, TrajectoryRow, repeat_seeds, run_grid_simulation, write_trajectory_log
from .synthdata import SynthConfig, SynthConfigError, generate_dataset, write_dataset

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
METADATA_FILE = "run_metadata.yaml"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# Small dataset synthesized by ``simulate`` when neither a manifest nor synth parameters are given.
QUICK_SYNTH = {"feature_count": 96, "sessions": 1, "blocks_per_session": 5, "ticks_per_block": 1500}


class ConfigError(utils.RetrodecodeError, ValueError):
    pass


@dataclasses.dataclass
class ExperimentConfig:
    """
    Resolved configuration of one CLI run. The YAML file holds flat ``key: value`` pairs named like
    these fields, plus an optional ``synth:`` mapping of :class:`~retrodecode.synthdata.SynthConfig`
    parameters.
    """

    manifest: typing.Optional[str] = None
    synth: typing.Optional[typing.Dict[str, typing.Any]] = None
    decoders: typing.List[str] = dataclasses.field(default_factory=lambda: ["rnn", "kalman"])
    preset: str = "high-speed"
    grid_size: typing.Optional[int] = None
    dwell_s: typing.Optional[float] = None
    timeout_s: typing.Optional[float] = None
    run_duration_s: float = 120.0
    gain: typing.Optional[float] = None
    alpha: typing.Optional[float] = None
    gain_min: float = 0.05
    gain_max: float = 20.0
    gain_count: int = 150
    alpha_values: typing.List[float] = dataclasses.field(default_factory=lambda: list(ALPHA_VALUES))
    repeats: int = 30
    optimization_repeats: int = 30
    d_range: typing.List[int] = dataclasses.field(default_factory=lambda: list(range(0, 31)))
    grid_range: typing.List[int] = dataclasses.field(default_factory=lambda: list(range(2, 26)))
    optimal_d: typing.Optional[typing.Dict[str, int]] = None
    session: typing.Optional[int] = None
    prior_sessions: int = 0
    test_sessions: typing.Optional[typing.List[int]] = None
    seed: typing.Optional[int] = None
    out: str = "results"
    workers: int = dataclasses.field(default_factory=lambda: os.cpu_count() or 1)
    epochs: int = 10
    hidden_units: int = 50
    batch_size: int = 512
    learning_rate: float = 0.001
    dropout: float = 0.5
    max_batches_per_epoch: typing.Optional[int] = None

    @classmethod
    def from_mapping(cls, mapping: typing.Mapping[str, typing.Any]) -> ExperimentConfig:
        """
        :raise ConfigError: On unknown keys or values of the wrong type.
        """
        fields = {field.name: field for field in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - set(fields))
        if unknown:
            raise ConfigError("unknown config keys: {}".format(", ".join(unknown)))

        config = cls()
        for key, value in mapping.items():
            setattr(config, key, _coerce(key, value))
        config.validate()
        return config

    def to_mapping(self) -> typing.Dict[str, typing.Any]:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        for kind in self.decoders:
            try:
                DecoderKind(kind)
            except ValueError:
                raise ConfigError("unknown decoder {!r}".format(kind))
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.manifest is not None and not Path(self.manifest).is_file():
            raise ConfigError("manifest {} does not exist".format(self.manifest))
        if self.prior_sessions < 0:
            raise ConfigError("prior_sessions must be >= 0")
        if self.synth is not None:
            try:
                SynthConfig.from_mapping(self.synth)
            except (SynthConfigError, ValueError) as error:
                raise ConfigError("invalid synth parameters: {}".format(error))
        try:
            self.sweep_spec()
            self.train_config()
            self.task()
        except ValueError as error:
            raise ConfigError(str(error))
        if self.optimal_d is not None:
            for kind in self.optimal_d:
                if kind not in {member.value for member in DecoderKind}:
                    raise ConfigError("unknown decoder {!r} in optimal_d".format(kind))

    def sweep_spec(self) -> SweepSpec:
        return SweepSpec(
            gain_min=self.gain_min,
            gain_max=self.gain_max,
            gain_count=self.gain_count,
            alpha_values=self.alpha_values,
            d_range=self.d_range,
            grid_range=self.grid_range,
            repeats=self.repeats,
            optimization_repeats=self.optimization_repeats,
            run_duration_s=self.run_duration_s,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            hidden_units=self.hidden_units,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            dropout=self.dropout,
            epochs=self.epochs,
            seed=0 if self.seed is None else self.seed,
            max_batches_per_epoch=self.max_batches_per_epoch,
        )

    def task(self) -> GridTaskConfig:
        task = GridTaskConfig.preset(self.preset, self.grid_size)
        overrides: typing.Dict[str, typing.Any] = {"run_duration_s": self.run_duration_s}
        if self.grid_size is not None and self.preset != "sweep":
            overrides["n"] = self.grid_size
        if self.dwell_s is not None:
            overrides["dwell_s"] = self.dwell_s
        if self.timeout_s is not None:
            overrides["timeout_s"] = self.timeout_s
        if set(overrides) - {"run_duration_s"}:
            overrides["name"] = "custom"
        return dataclasses.replace(task, **overrides)


def _coerce(key: str, value: typing.Any) -> typing.Any:
    if value is None:
        return None

    expected = {
        "manifest": str,
        "synth": dict,
        "decoders": list,
        "preset": str,
        "out": str,
        "alpha_values": list,
        "d_range": list,
        "grid_range": list,
        "test_sessions": list,
        "optimal_d": dict,
    }
    floats = {"dwell_s", "timeout_s", "run_duration_s", "gain", "alpha", "gain_min", "gain_max", "learning_rate", "dropout"}

    if key in expected:
        if not isinstance(value, expected[key]):
            raise ConfigError("{} must be a {}, got {!r}".format(key, expected[key].__name__, value))
        if key in ("d_range", "grid_range", "test_sessions") and not all(_is_int(item) for item in value):
            raise ConfigError("{} must list integers".format(key))
        if key == "alpha_values" and not all(_is_number(item) for item in value):
            raise ConfigError("alpha_values must list numbers")
        if key == "optimal_d" and not all(_is_int(item) for item in value.values()):
            raise ConfigError("optimal_d must map decoders to integers")
        return value
    if key in floats:
        if not _is_number(value):
            raise ConfigError("{} must be a number, got {!r}".format(key, value))
        return float(value)
    if not _is_int(value):
        raise ConfigError("{} must be an integer, got {!r}".format(key, value))
    return int(value)


def _is_int(value: typing.Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: typing.Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def load_config_file(path: typing.Union[str, Path]) -> typing.Dict[str, typing.Any]:
    """
    Reads a YAML config. A ``run_metadata.yaml`` written by an earlier run is accepted too; its
    ``config`` section is used.

    :raise ConfigError: If the file is missing, unparsable or not a mapping.
    """
    path = Path(path)
    try:
        mapping = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as error:
        raise ConfigError("cannot read config {}: {}".format(path, error))
    except yaml.YAMLError as error:
        raise ConfigError("cannot parse config {}: {}".format(path, error))

    if not isinstance(mapping, dict):
        raise ConfigError("config {} must be a mapping".format(path))
    if "command" in mapping and isinstance(mapping.get("config"), dict):
        mapping = mapping["config"]
    return mapping


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    mapping = load_config_file(args.config) if args.config is not None else {}
    for key in (field.name for field in dataclasses.fields(ExperimentConfig)):
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = value
    return ExperimentConfig.from_mapping(mapping)


def write_run_metadata(config: ExperimentConfig, command: str, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / METADATA_FILE
    metadata = {"command": command, "version": __version__, "seed": config.seed, "config": config.to_mapping()}
    path.write_text(yaml.safe_dump(metadata, sort_keys=True), encoding="utf-8")
    return path


# Shared plumbing


def _require_seed(config: ExperimentConfig) -> int:
    if config.seed is None:
        raise ConfigError("a seed is required for runs that write results")
    return config.seed


def _load_sessions(config: ExperimentConfig, quick: bool = False) -> typing.List[SessionData]:
    if config.manifest is not None:
        sessions = load_dataset(config.manifest)
    elif config.synth is not None:
        sessions = generate_dataset(SynthConfig.from_mapping(config.synth))
    elif quick:
        sessions = generate_dataset(SynthConfig.from_mapping(dict(QUICK_SYNTH, seed=_require_seed(config))))
    else:
        raise ConfigError("either a manifest or synth parameters are required")
    return prepare_sessions(sessions)


def _test_sessions(config: ExperimentConfig, sessions: typing.Sequence[SessionData]) -> typing.List[int]:
    if config.test_sessions is not None:
        return sorted(config.test_sessions)
    return [session.session_index for session in sessions]


def _session(config: ExperimentConfig, sessions: typing.Sequence[SessionData]) -> int:
    return sessions[-1].session_index if config.session is None else config.session


def _optimal_d(config: ExperimentConfig, out: Path) -> typing.Dict[str, int]:
    """
    Optimal ``D`` per decoder: from the config when given, otherwise from a training-size curve in the
    output directory.
    """
    if config.optimal_d is not None:
        return {kind: config.optimal_d[kind] for kind in config.decoders if kind in config.optimal_d}

    curve_path = out / "training_size_curve.csv"
    if not curve_path.exists():
        raise ConfigError("optimal_d is not configured and {} does not exist".format(curve_path))
    curves: typing.Dict[str, typing.Dict[int, float]] = {}
    with open(curve_path, newline="", encoding="utf-8") as file:
        for row in csv.DictReader(file):
            curves.setdefault(row["decoder"], {})[int(row["D"])] = float(row["mean_bitrate"])
    return {kind: optimal_prior_sessions(curves[kind]) for kind in config.decoders if kind in curves}


@contextlib.contextmanager
def _executor(config: ExperimentConfig) -> typing.Iterator[typing.Optional[Executor]]:
    if config.workers == 1:
        yield None
        return
    with ProcessPoolExecutor(max_workers=config.workers) as executor:
        yield executor


def _trained_decoder(config: ExperimentConfig, sessions: typing.Sequence[SessionData], kind: str, session: int):
    split = make_split(sessions, session, config.prior_sessions)
    decoder = build_decoder(kind, sessions, split, config.train_config(), config.sweep_spec().ridge_lambdas)
    return split, decoder


def _with_configured_params(config: ExperimentConfig, decoder: DecoderModel) -> DecoderModel:
    alpha = config.alpha if decoder.alpha is not None else None
    return decoder.with_params(gain=config.gain, alpha=alpha)


# Subcommands


def run_synth(config: ExperimentConfig, out: Path) -> None:
    synth = dict(config.synth or {})
    synth.setdefault("seed", _require_seed(config))
    manifest = write_dataset(generate_dataset(SynthConfig.from_mapping(synth)), out)
    logger.info("Synthetic dataset manifest: %s", manifest)


def run_train(config: ExperimentConfig, out: Path) -> None:
    _require_seed(config)
    sessions = _load_sessions(config)
    session = _session(config, sessions)

    for kind in config.decoders:
        _, decoder = _trained_decoder(config, sessions, kind, session)
        path = out / "{}_session{}_D{}.npz".format(kind, session, config.prior_sessions)
        if isinstance(decoder, KalmanDecoder):
            save_kalman(decoder.model, path)
        elif isinstance(decoder, RnnDecoder):
            save_rnn(decoder.weights, path)
        else:
            logger.info("%s has nothing to save", kind)
            continue
        logger.info("Saved %s decoder to %s", kind, path)


def run_simulate(config: ExperimentConfig, out: Path) -> None:
    seed = _require_seed(config)
    sessions = _load_sessions(config, quick=True)
    session = _session(config, sessions)
    task = config.task()
    spec = config.sweep_spec()

    rows = []
    for kind in config.decoders:
        split, decoder = _trained_decoder(config, sessions, kind, session)
        decoder = _with_configured_params(config, decoder)
        index = build_split_index(sessions, split.test_blocks, spec)

        for repeat, repeat_seed in enumerate(repeat_seeds(utils.derive_seed(seed, session), config.repeats)):
            trajectory: typing.Optional[typing.List[TrajectoryRow]] = [] if repeat == 0 else None
            result = run_grid_simulation(decoder, index, task, repeat_seed, trajectory)
            if trajectory is not None:
                write_trajectory_log(trajectory, out / "trajectory_{}.csv".format(kind))
            acq = result.mean_acq_time_s
            rows.append(
                [
                    kind,
                    task.name,
                    repeat,
                    repeat_seed,
                    "%.9g" % result.bitrate_bps,
                    result.S_c,
                    result.S_i,
                    result.timeouts,
                    "nan" if acq is None else "%.9g" % acq,
                ]
            )

    path = out / "simulation.csv"
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(["decoder", "task", "repeat", "seed", "bitrate", "S_c", "S_i", "timeouts", "mean_acq_time"])
        writer.writerows(rows)
    logger.info("Wrote %s", path)


def run_optimize(config: ExperimentConfig, out: Path) -> None:
    seed = _require_seed(config)
    sessions = _load_sessions(config)
    session = _session(config, sessions)
    spec = config.sweep_spec()

    rows = []
    with _executor(config) as executor:
        for kind in config.decoders:
            split, decoder = _trained_decoder(config, sessions, kind, session)
            index = build_split_index(sessions, split.validation_blocks, spec)
            selection = optimize_parameters(
                decoder, index, spec, master_seed=utils.derive_seed(seed, session), executor=executor
            )
            rows.append(
                [
                    kind,
                    session,
                    config.prior_sessions,
                    "%.9g" % selection.gain,
                    "" if selection.alpha is None else "%.9g" % selection.alpha,
                    "%.9g" % selection.score,
                    str(selection.zero_score).lower(),
                ]
            )

    path = out / "optimization.csv"
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(["decoder", "session", "D", "gain", "alpha", "score", "zero_score"])
        writer.writerows(rows)
    logger.info("Wrote %s", path)


def run_study_d(config: ExperimentConfig, out: Path) -> None:
    seed = _require_seed(config)
    sessions = _load_sessions(config)
    with _executor(config) as executor:
        study = training_size_study(
            sessions,
            _test_sessions(config, sessions),
            config.decoders,
            config.sweep_spec(),
            config.train_config(),
            seed,
            executor,
        )
    write_training_size_curve(study, out / "training_size_curve.csv")
    write_training_size_task_curves(study, out / "training_size_task_curves.csv")
    write_cells(study.cells, out / "training_size_cells.csv")
    for kind, d in sorted(study.optimal_d.items(), key=lambda item: item[0].value):
        logger.info("Optimal D for %s: %d", kind.value, d)


def run_sweep_grid(config: ExperimentConfig, out: Path) -> None:
    seed = _require_seed(config)
    optimal_d = _optimal_d(config, out)
    sessions = _load_sessions(config)
    with _executor(config) as executor:
        rows, cells = grid_size_sweep(
            sessions, _test_sessions(config, sessions), optimal_d, config.sweep_spec(), config.train_config(), seed, executor
        )
    write_grid_sweep(rows, out / "grid_sweep.csv")
    write_cells(cells, out / "grid_sweep_cells.csv")
    if len(optimal_d) == 2:
        write_grid_rank_sum(grid_sweep_rank_sums(cells, config.sweep_spec(), list(optimal_d)), out / "grid_rank_sum.csv")


def run_compare(config: ExperimentConfig, out: Path) -> None:
    seed = _require_seed(config)
    optimal_d = _optimal_d(config, out)
    sessions = _load_sessions(config)
    with _executor(config) as executor:
        report = head_to_head(
            sessions, _test_sessions(config, sessions), optimal_d, config.sweep_spec(), config.train_config(), seed, executor
        )
    write_head_to_head(report, out / "head_to_head.csv")
    write_comparison_acq_times(report, out / "head_to_head_acq_time.csv")
    write_rank_sum(report, out / "rank_sum.csv")
    write_cells(report.cells, out / "head_to_head_cells.csv")


def run_report(config: ExperimentConfig, out: Path) -> None:
    summary = summarize_reports(out)
    if len(summary) == 0:
        raise ConfigError("no report files found in {}".format(out))
    write_summary(summary, out / "summary.csv")


# Commands whose optimal D is read from an earlier training-size curve and recorded in the metadata.
RESOLVES_OPTIMAL_D = frozenset({"sweep-grid", "compare"})

COMMANDS: typing.Dict[str, typing.Callable[[ExperimentConfig, Path], None]] = {
    "synth": run_synth,
    "train": run_train,
    "simulate": run_simulate,
    "optimize": run_optimize,
    "study-d": run_study_d,
    "sweep-grid": run_sweep_grid,
    "compare": run_compare,
    "report": run_report,
}


def _int_list(text: str) -> typing.List[int]:
    """
    Parses ``"0:30"`` (inclusive range) or ``"1,3,5"``.

    >>> _int_list("2:4")
    [2, 3, 4]
    """
    try:
        if ":" in text:
            start, stop = text.split(":")
            return list(range(int(start), int(stop) + 1))
        return [int(item) for item in text.split(",") if item]
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'start:stop' or a comma separated list, got {!r}".format(text))


def _decoder_list(text: str) -> typing.List[str]:
    return [item for item in text.split(",") if item]


def _optimal_d_arg(text: str) -> typing.Dict[str, int]:
    """
    >>> _optimal_d_arg("rnn=3,kalman=1")
    {'rnn': 3, 'kalman': 1}
    """
    try:
        return {kind: int(d) for kind, d in (item.split("=") for item in text.split(",") if item)}
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'kind=D,...', got {!r}".format(text))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retrodecode", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version="%(prog)s {}".format(__version__))
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML experiment config")
    common.add_argument("--out", type=str, default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--workers", type=int, default=None, help="worker processes; 1 runs serially")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--manifest", type=str, default=None, help="dataset manifest CSV")
    data.add_argument("--decoders", type=_decoder_list, default=None, help="comma separated decoder kinds")
    data.add_argument("--test-sessions", dest="test_sessions", type=_int_list, default=None)
    data.add_argument("--session", type=int, default=None, help="test session (default: the last one)")
    data.add_argument("--prior-sessions", dest="prior_sessions", type=int, default=None, help="D")

    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--gain-min", dest="gain_min", type=float, default=None)
    sweep.add_argument("--gain-max", dest="gain_max", type=float, default=None)
    sweep.add_argument("--gain-count", dest="gain_count", type=int, default=None)
    sweep.add_argument("--repeats", type=int, default=None)
    sweep.add_argument("--optimization-repeats", dest="optimization_repeats", type=int, default=None)
    sweep.add_argument("--run-duration", dest="run_duration_s", type=float, default=None, help="seconds per run")
    sweep.add_argument("--epochs", type=int, default=None)
    sweep.add_argument("--hidden-units", dest="hidden_units", type=int, default=None)
    sweep.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    sweep.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    sweep.add_argument("--dropout", type=float, default=None)
    sweep.add_argument("--max-batches-per-epoch", dest="max_batches_per_epoch", type=int, default=None)

    subparsers.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    subparsers.add_parser("train", parents=[common, data, sweep], help="fit decoders and save them")

    simulate = subparsers.add_parser("simulate", parents=[common, data, sweep], help="simulate the Grid task")
    simulate.add_argument("--decoder", dest="decoders", type=_decoder_list, default=None)
    simulate.add_argument("--preset", choices=["high-accuracy", "high-speed", "sweep"], default=None)
    simulate.add_argument("--grid-size", dest="grid_size", type=int, default=None)
    simulate.add_argument("--dwell", dest="dwell_s", type=float, default=None)
    simulate.add_argument("--timeout", dest="timeout_s", type=float, default=None)
    simulate.add_argument("--gain", type=float, default=None)
    simulate.add_argument("--alpha", type=float, default=None)

    subparsers.add_parser("optimize", parents=[common, data, sweep], help="optimize gain and smoothing")

    study = subparsers.add_parser("study-d", parents=[common, data, sweep], help="training-set-size study")
    study.add_argument("--d-range", dest="d_range", type=_int_list, default=None)

    grid = subparsers.add_parser("sweep-grid", parents=[common, data, sweep], help="grid-size sweep")
    grid.add_argument("--grid-range", dest="grid_range", type=_int_list, default=None)
    grid.add_argument("--optimal-d", dest="optimal_d", type=_optimal_d_arg, default=None)

    compare = subparsers.add_parser("compare", parents=[common, data, sweep], help="head-to-head comparison")
    compare.add_argument("--optimal-d", dest="optimal_d", type=_optimal_d_arg, default=None)

    subparsers.add_parser("report", parents=[common], help="summarize report files")

    return parser


def cli_main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit:
        return EXIT_OK if exit.code in (0, None) else EXIT_USAGE

    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)

    try:
        config = resolve_config(args)
    except ConfigError as error:
        logger.error("Invalid configuration: %s", error)
        return EXIT_USAGE

    out = Path(config.out)
    try:
        if args.command in RESOLVES_OPTIMAL_D and config.optimal_d is None:
            config.optimal_d = _optimal_d(config, out)
        write_run_metadata(config, args.command, out)
        COMMANDS[args.command](config, out)
    except ConfigError as error:
        logger.error("Invalid configuration: %s", error)
        return EXIT_USAGE
    except (utils.RetrodecodeError, OSError, ValueError) as error:
        logger.error("%s failed: %s", args.command, error)
        return EXIT_FAILURE

    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())
