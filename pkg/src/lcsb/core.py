"""
Domain types and elementary operators shared by the encoder and decoder.

Conventions
-----------
* Windows are stored newest-first: index 0 is sample ``m``, index ``k`` is
  sample ``m - k``.
* A frequency grid holds complex exponents ``z_i`` (1/s). The imaginary part is
  the angular frequency, the real part a decay rate (never positive).
* Sign symbols live on the four points ``±1 ± 1j``. ``sgn(0) = +1`` on both axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

__all__ = [
    "FrequencyGrid",
    "SpectralState",
    "SignSymbol",
    "SignStream",
    "Window",
    "csgn",
    "csgn_array",
    "build_vandermonde",
    "predictor",
    "predict_state",
    "predict_level",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FrequencyGrid:
    """Candidate exponent set, sampling period and window length.

    ``omega0`` is set only for uniform imaginary grids built with
    :meth:`uniform`; it lets the stream header store the grid compactly.
    """

    exponents: np.ndarray
    tau: float
    window_len: int
    omega0: Optional[float] = None

    def __post_init__(self):
        z = np.asarray(self.exponents, dtype=complex).ravel()
        if z.size < 1:
            raise ValueError("grid needs at least one exponent")
        if int(self.window_len) < 1:
            raise ValueError("window_len must be >= 1")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError("tau must be positive and finite")
        if not np.all(np.isfinite(z)):
            raise ValueError("exponents must be finite")
        if np.any(z.real > 0):
            raise ValueError("exponents must have Re(z) <= 0")
        if np.unique(z).size != z.size:
            raise ValueError("exponents must be distinct")
        object.__setattr__(self, "exponents", _frozen(z))
        object.__setattr__(self, "window_len", int(self.window_len))
        object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def uniform(cls, n: int, omega0: float, tau: float, window_len: int) -> "FrequencyGrid":
        """Grid ``{1j, 2j, ..., n*1j} * omega0``."""
        z = 1j * float(omega0) * np.arange(1, n + 1)
        return cls(z, tau, window_len, omega0=float(omega0))

    @property
    def n(self) -> int:
        return self.exponents.size

    @property
    def is_uniform(self) -> bool:
        return self.omega0 is not None

    def __eq__(self, other):
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return (
            self.tau == other.tau
            and self.window_len == other.window_len
            and self.omega0 == other.omega0
            and np.array_equal(self.exponents, other.exponents)
        )

    __hash__ = None


@dataclass(frozen=True)
class SpectralState:
    """Complex component amplitudes ``S_m`` at sample index ``time_index``."""

    amps: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=complex).ravel()
        if not np.all(np.isfinite(a)):
            raise ValueError("state amplitudes must be finite")
        object.__setattr__(self, "amps", _frozen(a))

    @classmethod
    def zeros(cls, n: int, time_index: int = 0) -> "SpectralState":
        return cls(np.zeros(n, dtype=complex), time_index)

    @property
    def n(self) -> int:
        return self.amps.size

    def __eq__(self, other):
        if not isinstance(other, SpectralState):
            return NotImplemented
        return self.time_index == other.time_index and np.array_equal(self.amps, other.amps)

    __hash__ = None


@dataclass(frozen=True)
class SignSymbol:
    re: int
    im: int

    def __post_init__(self):
        if self.re not in (1, -1) or self.im not in (1, -1):
            raise ValueError(f"sign components must be +1 or -1, got ({self.re}, {self.im})")

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)

    @classmethod
    def from_complex(cls, v: complex) -> "SignSymbol":
        return csgn(v)


def csgn(v: complex) -> SignSymbol:
    """Complex sign: ``sgn(Re v) + 1j*sgn(Im v)`` with ``sgn(0) = +1``."""
    v = complex(v)
    if not (math.isfinite(v.real) and math.isfinite(v.imag)):
        raise ValueError(f"csgn of non-finite value {v!r}")
    return SignSymbol(1 if v.real >= 0 else -1, 1 if v.imag >= 0 else -1)


def csgn_array(v: np.ndarray) -> np.ndarray:
    """Vectorized :func:`csgn`, returning complex values in ``{±1±1j}``."""
    v = np.asarray(v, dtype=complex)
    if not np.all(np.isfinite(v)):
        raise ValueError("csgn of non-finite values")
    return np.where(v.real >= 0, 1.0, -1.0) + 1j * np.where(v.imag >= 0, 1.0, -1.0)


@dataclass(frozen=True)
class SignStream:
    """A sequence of sign symbols held as two ``int8`` arrays of ``±1``."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.asarray(self.re, dtype=np.int8).ravel()
        im = np.asarray(self.im, dtype=np.int8).ravel()
        if re.shape != im.shape:
            raise ValueError("real and imaginary sign arrays differ in length")
        if not (np.all(np.abs(re) == 1) and np.all(np.abs(im) == 1)):
            raise ValueError("sign values must be +1 or -1")
        object.__setattr__(self, "re", _frozen(re))
        object.__setattr__(self, "im", _frozen(im))

    @classmethod
    def from_complex(cls, values: np.ndarray) -> "SignStream":
        v = np.asarray(values, dtype=complex)
        return cls(np.sign(v.real), np.sign(v.imag))

    @classmethod
    def from_symbols(cls, symbols: Iterable[SignSymbol]) -> "SignStream":
        syms = list(symbols)
        return cls([s.re for s in syms], [s.im for s in syms])

    def as_complex(self) -> np.ndarray:
        return self.re.astype(float) + 1j * self.im.astype(float)

    def __len__(self) -> int:
        return self.re.size

    def __getitem__(self, m: int) -> SignSymbol:
        return SignSymbol(int(self.re[m]), int(self.im[m]))

    def __iter__(self) -> Iterator[SignSymbol]:
        for r, i in zip(self.re, self.im):
            yield SignSymbol(int(r), int(i))

    def __eq__(self, other):
        if not isinstance(other, SignStream):
            return NotImplemented
        return np.array_equal(self.re, other.re) and np.array_equal(self.im, other.im)

    __hash__ = None


@dataclass(frozen=True)
class Window:
    """The last ``capacity`` sign values and levels, newest first."""

    capacity: int
    signs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    levels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        s = np.asarray(self.signs, dtype=complex).ravel()
        l = np.asarray(self.levels, dtype=complex).ravel()
        if s.shape != l.shape:
            raise ValueError("signs and levels must have equal length")
        if s.size > self.capacity:
            raise ValueError("window holds more entries than its capacity")
        object.__setattr__(self, "signs", _frozen(s))
        object.__setattr__(self, "levels", _frozen(l))

    def push(self, sign: complex, level: complex) -> "Window":
        keep = self.capacity - 1
        return Window(
            self.capacity,
            np.concatenate(([sign], self.signs[:keep])),
            np.concatenate(([level], self.levels[:keep])),
        )

    def __len__(self) -> int:
        return self.signs.size


def build_vandermonde(grid: FrequencyGrid) -> np.ndarray:
    """``M x N`` matrix with entry ``[k, i] = exp(-z_i * k * tau)``."""
    k = np.arange(grid.window_len)
    with np.errstate(over="ignore", invalid="ignore"):
        phi = np.exp(-np.outer(k, grid.exponents) * grid.tau)
    if not np.all(np.isfinite(phi)):
        raise OverflowError("Vandermonde entries overflow")
    phi.setflags(write=False)
    return phi


def predictor(grid: FrequencyGrid) -> np.ndarray:
    """One-step predictor ``P = exp(z * tau)``."""
    p = np.exp(grid.exponents * grid.tau)
    p.setflags(write=False)
    return p


def predict_state(state: SpectralState, p: np.ndarray) -> SpectralState:
    if state.n != np.size(p):
        raise ValueError(f"state length {state.n} does not match predictor length {np.size(p)}")
    return SpectralState(p * state.amps, state.time_index + 1)


def predict_level(state: SpectralState, p: np.ndarray) -> complex:
    """Next comparison level: the sum of the one-step predicted components."""
    return complex(np.sum(predict_state(state, p).amps))
