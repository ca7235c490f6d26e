"""
Available Classes
=================

:class:`SessionData`
    One recording session: z-scorable blocks of features and cursor-to-target labels.
:class:`DataSplit`
    Train, validation and test block references of one test session.
:class:`SynthConfig`
    Parameters of a synthetic cosine-tuned dataset.
:class:`SampleIndex`
    Angle x distance bins over labeled samples, drawn from by the simulator.
:class:`KalmanModel`
    Steady-state Kalman velocity decoder.
:class:`LstmWeights`
    Single-layer LSTM decoder with direction and distance heads.
:class:`GridTaskConfig`
    A Grid task variant.
:class:`SweepSpec`
    Parameter grids and repeat counts of the study protocols.

--------------------------------------------------
"""

__version__ = "0.1.0"

from .datamodel import (
    Block,
    BlockRef,
    DataSplit,
    DegenerateBlockError,
    IneligibleSessionError,
    LabeledSample,
    SessionData,
    SessionFormatError,
    SplitError,
)
from .decoders import DecoderModel, KalmanDecoder, NullDecoder, OracleDecoder, RnnDecoder
from .experiments import ComparisonReport, DecoderKind, SweepSpec
from .kalman import DecodeError, KalmanConvergenceError, KalmanFitError, KalmanModel, ModelFormatError
from .rnn import LstmWeights, TrainConfig, TrainError
from .sampler import EmptyPoolError, SampleIndex
from .simulator import BitrateDomainError, GridTaskConfig, SimulationError, SimulationResult
from .synthdata import SynthConfig, SynthConfigError
from .utils import RetrodecodeError

__all__ = [
    "Block",
    "BlockRef",
    "BitrateDomainError",
    "ComparisonReport",
    "DataSplit",
    "DecodeError",
    "DecoderKind",
    "DecoderModel",
    "DegenerateBlockError",
    "EmptyPoolError",
    "GridTaskConfig",
    "IneligibleSessionError",
    "KalmanConvergenceError",
    "KalmanDecoder",
    "KalmanFitError",
    "KalmanModel",
    "LabeledSample",
    "LstmWeights",
    "ModelFormatError",
    "NullDecoder",
    "OracleDecoder",
    "RetrodecodeError",
    "RnnDecoder",
    "SampleIndex",
    "SessionData",
    "SessionFormatError",
    "SimulationError",
    "SimulationResult",
    "SplitError",
    "SweepSpec",
    "SynthConfig",
    "SynthConfigError",
    "TrainConfig",
    "TrainError",
]
