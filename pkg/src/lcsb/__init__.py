"""Simulator for 1-bit feedback acquisition and reconstruction of spectrum-sparse signals."""
from .bench import ExperimentConfig, RunResult, load_config, run_offgrid, run_single, run_table1
from .channel import ChannelSpec, corrupt
from .core import (
    FrequencyGrid,
    SignStream,
    SignSymbol,
    SpectralState,
    Window,
    build_vandermonde,
    csgn,
    predict_level,
    predict_state,
    predictor,
)
from .decoder import DecodeResult, EcParams, ErrorVector, decode, ec_step, slide_error, stochastic_round
from .encoder import EncodeResult, StreamHeader, encode, read_stream, write_stream
from .estimator import EstimatorParams, EstimatorState, solve_magnitude, update
from .metrics import mse_db
from .siggen import GeneratedSignal, OffGridComponent, SignalSpec, generate

__version__ = "0.1.0"
