"""
Transmitter-side feedback loop and the LCSB sign-stream file format.

Stream layout (little-endian)::

    magic        4s   b"LCSB"
    version      u16  1
    N            u32
    M            u32
    tau          f64
    grid tag     u8   0 = uniform imaginary grid, 1 = explicit exponents
      tag 0:     omega0 f64, count u32
      tag 1:     N x (re f64, im f64)
    lambda1, lambda2, sigma0, delta0, sigma_growth, delta_growth   6 x f64
    sample_count u64
    payload      ceil(sample_count / 4) bytes, 2 bits per sample, LSB first
                 (bit0 = real sign, bit1 = imaginary sign, 1 => +1)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .core import FrequencyGrid, SignStream, csgn, predict_level
from .estimator import EstimatorParams, initial_state, observe, update
from .siggen import GeneratedSignal

__all__ = [
    "EstimationError",
    "EncodeResult",
    "StreamHeader",
    "StreamFormatError",
    "encode",
    "write_stream",
    "read_stream",
    "pack_signs",
    "unpack_signs",
]

MAGIC = b"LCSB"
VERSION = 1
_HEAD = struct.Struct("<4sHIIdB")
_UNIFORM = struct.Struct("<dI")
_PARAMS = struct.Struct("<6d")
_COUNT = struct.Struct("<Q")


class EstimationError(RuntimeError):
    """The feedback loop failed at a given sample."""

    def __init__(self, message: str, sample_index: int):
        super().__init__(f"sample {sample_index}: {message}")
        self.sample_index = sample_index


class StreamFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EncodeResult:
    stream: SignStream
    level_trace: np.ndarray
    state_trace: Optional[np.ndarray] = None


@dataclass(frozen=True)
class StreamHeader:
    """Everything a receiver needs besides the payload.

    Only the fields listed in the file layout are stored; the remaining
    estimator settings (caps, alignment, escalation rule) come from
    ``params`` defaults on read.
    """

    grid: FrequencyGrid
    params: EstimatorParams
    sample_count: int


def encode(signal: GeneratedSignal, params: EstimatorParams, keep_states: bool = False) -> EncodeResult:
    """Run the acquisition loop over every sample of ``signal``.

    The estimator sees the error-free signs. Deterministic: no randomness.
    """
    grid = signal.spec.grid
    x = signal.samples
    T = x.size
    state = initial_state(grid, params)
    level = 0j
    re = np.empty(T, dtype=np.int8)
    im = np.empty(T, dtype=np.int8)
    levels = np.empty(T, dtype=complex)
    states = np.empty((T, grid.n), dtype=complex) if keep_states else None
    for m in range(T):
        try:
            sym = csgn(x[m] - level)
            levels[m] = level
            re[m], im[m] = sym.re, sym.im
            state = observe(state, sym.value, level)
            state = update(state, state.window.signs)
            level = predict_level(state.s_hat, state.p)
        except (ValueError, ArithmeticError) as exc:
            raise EstimationError(str(exc), m) from exc
        if states is not None:
            states[m] = state.s_hat.amps
    return EncodeResult(SignStream(re, im), levels, states)


# --- packing ----------------------------------------------------------------------

def pack_signs(stream: SignStream) -> bytes:
    codes = (stream.re > 0).astype(np.uint8) | ((stream.im > 0).astype(np.uint8) << 1)
    pad = (-codes.size) % 4
    codes = np.concatenate([codes, np.zeros(pad, dtype=np.uint8)]).reshape(-1, 4)
    packed = codes[:, 0] | (codes[:, 1] << 2) | (codes[:, 2] << 4) | (codes[:, 3] << 6)
    return packed.astype(np.uint8).tobytes()


def unpack_signs(payload: bytes, count: int) -> SignStream:
    if len(payload) != (count + 3) // 4:
        raise StreamFormatError(f"payload has {len(payload)} bytes, expected {(count + 3) // 4}")
    b = np.frombuffer(payload, dtype=np.uint8)
    codes = np.stack([(b >> s) & 3 for s in (0, 2, 4, 6)], axis=1).ravel()
    if np.any(codes[count:]):
        raise StreamFormatError("non-zero padding bits in final payload byte")
    codes = codes[:count]
    re = np.where(codes & 1, 1, -1)
    im = np.where(codes & 2, 1, -1)
    return SignStream(re, im)


def write_stream(result, header: StreamHeader) -> bytes:
    """Serialize a stream (an :class:`EncodeResult` or a bare :class:`SignStream`)."""
    stream = result.stream if isinstance(result, EncodeResult) else result
    if len(stream) != header.sample_count:
        raise ValueError(f"header says {header.sample_count} samples, stream has {len(stream)}")
    g, p = header.grid, header.params
    parts = [_HEAD.pack(MAGIC, VERSION, g.n, g.window_len, g.tau, 0 if g.is_uniform else 1)]
    if g.is_uniform:
        parts.append(_UNIFORM.pack(g.omega0, g.n))
    else:
        parts.append(np.stack([g.exponents.real, g.exponents.imag], axis=1).astype("<f8").tobytes())
    parts.append(
        _PARAMS.pack(p.lambda1, p.lambda2, p.sigma0, p.delta0, p.sigma_growth, p.delta_growth)
    )
    parts.append(_COUNT.pack(header.sample_count))
    parts.append(pack_signs(stream))
    return b"".join(parts)


def read_stream(data: bytes, base_params: EstimatorParams = EstimatorParams()) -> Tuple[StreamHeader, SignStream]:
    """Parse an LCSB byte string. Settings absent from the file come from ``base_params``."""
    data = bytes(data)
    try:
        magic, version, n, m, tau, tag = _HEAD.unpack_from(data, 0)
    except struct.error as exc:
        raise StreamFormatError("truncated header") from exc
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StreamFormatError(f"unsupported version {version}")
    off = _HEAD.size
    try:
        if tag == 0:
            omega0, count = _UNIFORM.unpack_from(data, off)
            off += _UNIFORM.size
            if count != n:
                raise StreamFormatError(f"grid count {count} does not match N={n}")
            grid = FrequencyGrid.uniform(n, omega0, tau, m)
        elif tag == 1:
            raw = np.frombuffer(data, dtype="<f8", count=2 * n, offset=off)
            off += 16 * n
            grid = FrequencyGrid(raw[0::2] + 1j * raw[1::2], tau, m)
        else:
            raise StreamFormatError(f"unknown grid tag {tag}")
        l1, l2, s0, d0, sg, dg = _PARAMS.unpack_from(data, off)
        off += _PARAMS.size
        (count,) = _COUNT.unpack_from(data, off)
        off += _COUNT.size
    except (struct.error, ValueError) as exc:
        if isinstance(exc, StreamFormatError):
            raise
        raise StreamFormatError(f"malformed header: {exc}") from exc
    params = replace(
        base_params, lambda1=l1, lambda2=l2, sigma0=s0, delta0=d0, sigma_growth=sg, delta_growth=dg
    )
    stream = unpack_signs(data[off:], count)
    return StreamHeader(grid, params, count), stream
