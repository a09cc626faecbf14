"""
Receiver: the estimator driven by received signs, with optional sparse
bit-flip correction over the sliding window.

For each axis the flip indicators of the current window are modeled as a
sparse binary vector ``e``. One projected gradient step on a relaxed, l1
weighted consistency objective is followed by stochastic rounding, and the
signs fed to the estimator become ``received * (1 - 2*e)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import SignStream, SpectralState, predict_level
from .encoder import EstimationError, StreamHeader
from .estimator import initial_state, linearization_point, observe, update
from .metrics import mse_db
from .siggen import GeneratedSignal

__all__ = [
    "AXES",
    "EcParams",
    "ErrorVector",
    "DecodeResult",
    "DivergenceError",
    "slide_error",
    "stochastic_round",
    "ec_gradient",
    "ec_step",
    "correct_signs",
    "decode",
]

AXES = ("real", "imag")


@dataclass(frozen=True)
class EcParams:
    """Bit-flip correction settings.

    ``theta`` is the l1 weight that keeps the flip estimate sparse and
    ``epsilon`` the length of each gradient step.
    """

    theta: float = 7.0
    epsilon: float = 0.02
    seed: Union[int, np.random.SeedSequence] = 0
    enabled: bool = True
    steps_per_sample: int = 1

    def __post_init__(self):
        if self.enabled and not (self.theta > 0 and self.epsilon > 0):
            raise ValueError("theta and epsilon must be positive when correction is enabled")
        if self.steps_per_sample < 1:
            raise ValueError("steps_per_sample must be >= 1")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype).ravel()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ErrorVector:
    """Relaxed and rounded flip indicators for one axis, newest first."""

    relaxed: np.ndarray
    binary: np.ndarray
    axis: str = "real"

    def __post_init__(self):
        rel = _frozen(self.relaxed, float)
        bin_ = _frozen(self.binary, np.uint8)
        if rel.shape != bin_.shape:
            raise ValueError("relaxed and binary parts differ in length")
        if np.any((rel < 0) | (rel > 1)) or not np.all(np.isfinite(rel)):
            raise ValueError("relaxed entries must lie in [0, 1]")
        if np.any(bin_ > 1):
            raise ValueError("binary entries must be 0 or 1")
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        object.__setattr__(self, "relaxed", rel)
        object.__setattr__(self, "binary", bin_)

    @classmethod
    def zeros(cls, length: int, axis: str = "real") -> "ErrorVector":
        return cls(np.zeros(length), np.zeros(length, dtype=np.uint8), axis)

    def __len__(self) -> int:
        return self.binary.size


def slide_error(e: ErrorVector, capacity: Optional[int] = None) -> ErrorVector:
    """Shift toward the oldest end and insert 0 at the newest position.

    The vector grows by one until it reaches ``capacity`` (defaults to its
    current length), then the oldest entry is dropped.
    """
    cap = len(e) if capacity is None else capacity
    keep = max(min(len(e), cap - 1), 0)
    return ErrorVector(
        np.concatenate(([0.0], e.relaxed[:keep])),
        np.concatenate(([0], e.binary[:keep])),
        e.axis,
    )


def stochastic_round(t, rng: np.random.Generator) -> np.ndarray:
    """Round each entry of ``t`` in [0, 1] up with probability ``t``."""
    t = np.asarray(t, dtype=float)
    return (t > rng.random(t.shape)).astype(np.uint8)


def _axis(v: np.ndarray, axis: str) -> np.ndarray:
    return v.real if axis == "real" else v.imag


def ec_gradient(binary, received_axis, residual_axis, theta: float) -> np.ndarray:
    """Gradient of the relaxed flip objective on one axis.

    ``residual_axis`` is one axis of ``Phi @ S - L``; its sign is the bit the
    current estimate predicts.
    """
    b = np.asarray(received_axis, dtype=float)
    predicted = np.where(np.asarray(residual_axis) >= 0, 1.0, -1.0)
    e = np.asarray(binary, dtype=float)
    return -4.0 * b * (b * (1.0 - 2.0 * e) - predicted) + theta


def ec_step(
    e_prev: ErrorVector,
    received_axis,
    s_hat,
    levels,
    phi,
    params: EcParams,
    rng: np.random.Generator,
) -> ErrorVector:
    """One projected, normalized gradient step followed by stochastic rounding.

    ``s_hat`` is the state the window is compared against (a
    :class:`SpectralState` or array), ``levels`` the level window and ``phi``
    the matching rows of the Vandermonde matrix. ``e_prev`` must already be
    slid for the current sample. A zero gradient leaves ``e_prev`` unchanged.
    """
    w = len(e_prev)
    b = np.asarray(received_axis, dtype=float)
    lv = np.asarray(levels, dtype=complex)
    if b.shape != (w,) or lv.shape != (w,):
        raise ValueError(f"window length mismatch: error vector {w}, signs {b.shape}, levels {lv.shape}")
    amps = s_hat.amps if isinstance(s_hat, SpectralState) else np.asarray(s_hat, dtype=complex)
    residual = np.asarray(phi)[:w] @ amps - lv
    grad = ec_gradient(e_prev.binary, b, _axis(residual, e_prev.axis), params.theta)
    norm = np.linalg.norm(grad)
    if norm == 0:
        return e_prev
    relaxed = np.clip(e_prev.binary - params.epsilon * grad / norm, 0.0, 1.0)
    return ErrorVector(relaxed, stochastic_round(relaxed, rng), e_prev.axis)


def correct_signs(signs, e_re: ErrorVector, e_im: ErrorVector) -> np.ndarray:
    """Undo the estimated flips: ``received * (1 - 2*e)`` on each axis."""
    signs = np.asarray(signs, dtype=complex)
    return signs.real * (1 - 2.0 * e_re.binary) + 1j * (signs.imag * (1 - 2.0 * e_im.binary))


@dataclass
class DecodeResult:
    """Per-sample traces of a decoding run.

    ``flips_re`` / ``flips_im`` hold the rounded flip estimates used at each
    sample, shape ``(T, M)`` newest first, zero-padded during warm-up.
    ``mse_trace`` is filled only when ground truth was supplied.
    """

    level_trace: np.ndarray
    state_trace: Optional[np.ndarray]
    flips_re: np.ndarray
    flips_im: np.ndarray
    mse_trace: Optional[np.ndarray] = None
    final_state: Optional[SpectralState] = None
    sigma_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def num_flips_estimated(self) -> np.ndarray:
        return self.flips_re.sum(axis=1, dtype=np.int64) + self.flips_im.sum(axis=1, dtype=np.int64)


class DivergenceError(EstimationError):
    """Decoding hit a non-finite value; ``partial`` holds the traces up to that sample."""

    def __init__(self, message: str, sample_index: int, partial: DecodeResult):
        super().__init__(message, sample_index)
        self.partial = partial


def decode(
    stream: SignStream,
    header: StreamHeader,
    ec: EcParams = EcParams(enabled=False),
    truth: Optional[GeneratedSignal] = None,
    keep_states: bool = True,
) -> DecodeResult:
    """Reconstruct the state sequence from a received sign stream."""
    grid, params = header.grid, header.params
    T, M = len(stream), grid.window_len
    if T != header.sample_count:
        raise ValueError(f"header announces {header.sample_count} samples, stream has {T}")
    if truth is not None and truth.true_states.shape != (T, grid.n):
        raise ValueError("ground truth does not match stream length and grid size")

    rng = np.random.default_rng(ec.seed)
    received = stream.as_complex()
    state = initial_state(grid, params)
    level = 0j
    e_re, e_im = ErrorVector.zeros(0, "real"), ErrorVector.zeros(0, "imag")

    levels = np.empty(T, dtype=complex)
    states = np.empty((T, grid.n), dtype=complex) if keep_states else None
    flips_re = np.zeros((T, M), dtype=np.uint8)
    flips_im = np.zeros((T, M), dtype=np.uint8)
    sigmas = np.empty(T)
    mse = np.empty(T) if truth is not None else None

    def partial(upto):
        return DecodeResult(
            levels[:upto], None if states is None else states[:upto], flips_re[:upto],
            flips_im[:upto], None if mse is None else mse[:upto], state.s_hat, sigmas[:upto],
        )

    for m in range(T):
        levels[m] = level
        state = observe(state, received[m], level)
        e_re, e_im = slide_error(e_re, M), slide_error(e_im, M)
        signs = state.window.signs
        if ec.enabled:
            w = len(state.window)
            for _ in range(ec.steps_per_sample):
                ref = linearization_point(state)
                e_re = ec_step(e_re, signs.real, ref, state.window.levels, state.phi[:w], ec, rng)
                e_im = ec_step(e_im, signs.imag, ref, state.window.levels, state.phi[:w], ec, rng)
        corrected = correct_signs(signs, e_re, e_im)
        flips_re[m, : len(e_re)] = e_re.binary
        flips_im[m, : len(e_im)] = e_im.binary
        try:
            state = update(state, corrected)
            level = predict_level(state.s_hat, state.p)
        except (ValueError, ArithmeticError) as exc:
            raise DivergenceError(str(exc), m, partial(m)) from exc
        if not np.isfinite(level):
            raise DivergenceError("non-finite level", m, partial(m + 1))
        sigmas[m] = state.sigma
        if states is not None:
            states[m] = state.s_hat.amps
        if mse is not None:
            mse[m] = mse_db(truth.true_states[m], state.s_hat.amps)

    return partial(T)
