"""
Sliding-window sparse component estimator.

One update per incoming sample. The data term is linearized at the prior
estimate, which turns the stationarity condition into independent per-element
equations: the phase of each component follows ``Y`` and its magnitude is the
smallest non-negative root of

    2*l1*s^2 * r^3 - a*s^2 * r^2 + 2*l1 * r + (b - a) = 0

with ``a = |Y_i|``, ``s = sigma`` and ``b = l2 / arctan(sigma)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .core import (
    FrequencyGrid,
    SpectralState,
    Window,
    build_vandermonde,
    predictor,
)
from .cubic import smallest_nonnegative_root

__all__ = [
    "EstimatorParams",
    "EstimatorState",
    "MagnitudeSolution",
    "g_sigma",
    "f_delta",
    "f_delta_prime",
    "cf",
    "cf_prime",
    "axis_product",
    "initial_state",
    "observe",
    "linearization_point",
    "window_residual",
    "compute_y",
    "solve_magnitude",
    "solve_magnitudes",
    "solve_magnitudes_independent",
    "update",
    "cost",
    "cost_gradient",
    "magnitude_polynomial",
]

CASE2_RULES = ("corrected", "printed")


@dataclass(frozen=True)
class EstimatorParams:
    """Tuning knobs of the estimator.

    ``lambda1`` weighs the smooth-update term and sets the inverse step size of
    the data fit; ``lambda2`` weighs the sparsity surrogate. ``sigma`` and
    ``delta`` grow geometrically per sample up to their caps.

    ``propagate_first`` linearizes the data term at ``P * S_prev`` (the prior
    estimate moved to the current sample) instead of at ``S_prev``.
    ``case2_rule`` selects the sigma escalation test for the one-real-root
    case: ``"corrected"`` requires ``lambda2 / arctan(sigma) < alpha``;
    ``"printed"`` only requires ``sigma > arctan(lambda2 / alpha)``.
    """

    lambda1: float = 5000.0
    lambda2: float = 10.0
    sigma0: float = 1.0
    sigma_growth: float = 1.1
    delta0: float = 1.0
    delta_growth: float = 1.01
    sigma_cap: float = 1e6
    delta_cap: float = 7.0
    propagate_first: bool = True
    case2_rule: str = "corrected"

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "sigma0", "delta0"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        for name in ("sigma_growth", "delta_growth"):
            if not getattr(self, name) > 1:
                raise ValueError(f"{name} must exceed 1")
        if self.sigma_cap < self.sigma0:
            raise ValueError("sigma_cap must be >= sigma0")
        if self.delta_cap < self.delta0:
            raise ValueError("delta_cap must be >= delta0")
        if self.case2_rule not in CASE2_RULES:
            raise ValueError(f"case2_rule must be one of {CASE2_RULES}")


@dataclass(frozen=True)
class EstimatorState:
    s_hat: SpectralState
    sigma: float
    delta: float
    window: Window
    phi: np.ndarray
    p: np.ndarray
    params: EstimatorParams
    # components forced to zero in the last update because no feasible root existed
    inactive: int = 0

    def __post_init__(self):
        prm = self.params
        if not (prm.sigma0 <= self.sigma <= prm.sigma_cap):
            raise ValueError("sigma outside [sigma0, sigma_cap]")
        if not (prm.delta0 <= self.delta <= prm.delta_cap):
            raise ValueError("delta outside [delta0, delta_cap]")


class MagnitudeSolution(NamedTuple):
    r: float
    sigma: float
    inactive: bool


# --- surrogates ---------------------------------------------------------------

def g_sigma(s, sigma):
    """Smoothed l0 surrogate ``arctan(sigma*|s|) / arctan(sigma)``."""
    return np.arctan(sigma * np.abs(s)) / np.arctan(sigma)


def f_delta(s, delta):
    """Smooth sign ``(2/pi) * arctan(delta*s)``."""
    return (2.0 / np.pi) * np.arctan(delta * np.asarray(s, dtype=float))


def f_delta_prime(s, delta):
    s = np.asarray(s, dtype=float)
    return (2.0 / np.pi) * delta / (1.0 + (delta * s) ** 2)


def cf(v, delta):
    v = np.asarray(v, dtype=complex)
    return f_delta(v.real, delta) + 1j * f_delta(v.imag, delta)


def cf_prime(v, delta):
    v = np.asarray(v, dtype=complex)
    return f_delta_prime(v.real, delta) + 1j * f_delta_prime(v.imag, delta)


def axis_product(u, v):
    """Per-axis product ``Re(u)Re(v) + 1j*Im(u)Im(v)`` (not complex multiplication)."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    return u.real * v.real + 1j * (u.imag * v.imag)


# --- state handling -------------------------------------------------------------

def initial_state(grid: FrequencyGrid, params: EstimatorParams) -> EstimatorState:
    """Zero estimate before the first sample, so the first level is 0."""
    return EstimatorState(
        s_hat=SpectralState.zeros(grid.n, time_index=-1),
        sigma=params.sigma0,
        delta=params.delta0,
        window=Window(grid.window_len),
        phi=build_vandermonde(grid),
        p=predictor(grid),
        params=params,
    )


def observe(state: EstimatorState, sign: complex, level: complex) -> EstimatorState:
    """Push the newest (sign, level) pair into the window."""
    return replace(state, window=state.window.push(sign, level))


def linearization_point(state: EstimatorState) -> np.ndarray:
    if state.params.propagate_first:
        return state.p * state.s_hat.amps
    return state.s_hat.amps


def window_residual(state: EstimatorState) -> np.ndarray:
    """``Phi @ S - L`` over the filled part of the window."""
    w = len(state.window)
    return state.phi[:w] @ linearization_point(state) - state.window.levels


def compute_y(state: EstimatorState, corrected_signs) -> np.ndarray:
    b = np.asarray(corrected_signs, dtype=complex)
    w = len(state.window)
    if b.shape != (w,):
        raise ValueError(f"expected {w} corrected signs, got shape {b.shape}")
    u = window_residual(state)
    data = axis_product(cf_prime(u, state.delta), cf(u, state.delta) - b)
    return 2.0 * state.params.lambda1 * (state.p * state.s_hat.amps) - 2.0 * (
        state.phi[:w].conj().T @ data
    )


# --- magnitude equation -----------------------------------------------------------

def magnitude_polynomial(alpha, lambda1, lambda2, sigma):
    """Coefficients ``(c3, c2, c1, c0)`` of the cubic in ``r``."""
    alpha = np.asarray(alpha, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    zero = np.zeros(np.broadcast(alpha, sigma).shape)
    beta = lambda2 / np.arctan(sigma)
    s2 = sigma * sigma
    return (2.0 * lambda1 * s2 + zero, -alpha * s2 + zero, 2.0 * lambda1 + zero, beta - alpha + zero)


def solve_magnitudes(
    alpha,
    lambda1: float,
    lambda2: float,
    sigma: float,
    sigma_growth: float = 1.1,
    sigma_cap: float = 1e6,
    case2_rule: str = "corrected",
):
    """Solve the magnitude cubic for every element of ``alpha`` at a shared sigma.

    While any element has no non-negative root, sigma is multiplied by
    ``sigma_growth`` (up to ``sigma_cap``) and all elements are re-solved, so the
    result corresponds to a single sigma. Elements still without a root are set
    to 0 and reported in the ``inactive`` mask.

    Returns ``(r, sigma_out, inactive)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
        raise ValueError("alpha must be finite and non-negative")
    if case2_rule not in CASE2_RULES:
        raise ValueError(f"case2_rule must be one of {CASE2_RULES}")
    live = alpha > 0
    sigma = float(sigma)
    r, found = smallest_nonnegative_root(*magnitude_polynomial(alpha, lambda1, lambda2, sigma))
    if np.any(_missing(live & ~found, alpha, lambda2, sigma, case2_rule)) and sigma < sigma_cap:
        checked = live & (alpha < lambda2 / np.arctan(sigma))
        sigma, r[checked], found[checked] = _escalate(
            alpha[checked], lambda1, lambda2, sigma, sigma_growth, sigma_cap, case2_rule
        )
        rest = live & ~checked
        if np.any(rest):
            r[rest], found[rest] = smallest_nonnegative_root(*magnitude_polynomial(alpha[rest], lambda1, lambda2, sigma))
    r = np.where(live & found, r, 0.0)
    return r, sigma, live & ~found


def _missing(missing, alpha, lambda2, sigma, case2_rule):
    if case2_rule == "printed":
        with np.errstate(divide="ignore", over="ignore"):
            target = np.arctan(lambda2 / np.where(missing, alpha, 1.0))
        missing = missing & ~(sigma > target)
    return missing


def _escalate(alpha, lambda1, lambda2, sigma, growth, cap, case2_rule, batch=64):
    """First sigma of the ladder ``sigma * growth**j`` (capped) at which no element is missing.

    Elements with ``alpha >= beta`` always have a root and ``beta`` shrinks as
    sigma grows, so callers may pass only the others. Rungs are tested in
    batches that double in size.
    Returns ``(sigma, r, found)`` for the chosen rung.
    """
    while True:
        ladder = []
        s = sigma
        while len(ladder) < batch and s < cap:
            s = min(s * growth, cap)
            ladder.append(s)
        rungs = np.array(ladder)[:, None]
        r, found = smallest_nonnegative_root(*magnitude_polynomial(alpha[None, :], lambda1, lambda2, rungs))
        ok = ~np.any(_missing(~found, alpha[None, :], lambda2, rungs, case2_rule), axis=1)
        if np.any(ok) or ladder[-1] >= cap:
            j = int(np.argmax(ok)) if np.any(ok) else len(ladder) - 1
            return float(ladder[j]), r[j], found[j]
        sigma = ladder[-1]
        batch *= 2


def solve_magnitudes_independent(
    alpha,
    lambda1,
    lambda2,
    sigma,
    sigma_growth: float = 1.1,
    sigma_cap: float = 1e6,
    case2_rule: str = "corrected",
    batch: int = 64,
):
    """Solve many unrelated magnitude problems, each escalating its own sigma.

    All arguments except the schedule broadcast together. Element ``i`` gets the
    same result as :func:`solve_magnitudes` called on it alone. Returns
    ``(r, sigma_out, inactive)`` as arrays.
    """
    alpha, lambda1, lambda2, sigma = (
        np.array(v, dtype=float) for v in np.broadcast_arrays(alpha, lambda1, lambda2, sigma)
    )
    if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
        raise ValueError("alpha must be finite and non-negative")
    if case2_rule not in CASE2_RULES:
        raise ValueError(f"case2_rule must be one of {CASE2_RULES}")
    shape = alpha.shape
    alpha, lambda1, lambda2, sigma = (v.ravel() for v in (alpha, lambda1, lambda2, sigma))
    r = np.zeros(alpha.size)
    found = np.zeros(alpha.size, dtype=bool)
    sig_out = sigma.copy()
    pending = np.flatnonzero(alpha > 0)
    cur = sigma[pending]
    ladder = [cur]
    while pending.size:
        while len(ladder) < batch:
            cur = np.minimum(cur * sigma_growth, sigma_cap)
            ladder.append(cur)
        rungs = np.stack(ladder)
        a, l2 = alpha[pending][None, :], lambda2[pending][None, :]
        rr, ff = smallest_nonnegative_root(*magnitude_polynomial(a, lambda1[pending][None, :], l2, rungs))
        stop = ~_missing(~ff, a, l2, rungs, case2_rule) | (rungs >= sigma_cap)
        done = stop.any(axis=0)
        j, cols = np.argmax(stop, axis=0)[done], np.flatnonzero(done)
        idx = pending[cols]
        r[idx], found[idx], sig_out[idx] = rr[j, cols], ff[j, cols], rungs[j, cols]
        pending, cur = pending[~done], rungs[-1, ~done]
        ladder = []
        batch *= 2
    live = alpha > 0
    r = np.where(live & found, r, 0.0)
    return r.reshape(shape), sig_out.reshape(shape), (live & ~found).reshape(shape)


def solve_magnitude(
    alpha: float,
    lambda1: float,
    lambda2: float,
    sigma: float,
    sigma_growth: float = 1.1,
    sigma_cap: float = 1e6,
    case2_rule: str = "corrected",
) -> MagnitudeSolution:
    r, s, inactive = solve_magnitudes_independent(
        alpha, lambda1, lambda2, sigma, sigma_growth, sigma_cap, case2_rule
    )
    return MagnitudeSolution(float(r), float(s), bool(inactive))


def update(state: EstimatorState, corrected_signs) -> EstimatorState:
    """One estimation step for the window ending at the newest sample."""
    prm = state.params
    y = compute_y(state, corrected_signs)
    alpha = np.abs(y)
    r, sigma, inactive = solve_magnitudes(
        alpha, prm.lambda1, prm.lambda2, state.sigma, prm.sigma_growth, prm.sigma_cap, prm.case2_rule
    )
    unit = np.divide(y, alpha, out=np.zeros_like(y), where=alpha > 0)
    s_new = SpectralState(r * unit, state.s_hat.time_index + 1)
    return replace(
        state,
        s_hat=s_new,
        sigma=min(sigma * prm.sigma_growth, prm.sigma_cap),
        delta=min(state.delta * prm.delta_growth, prm.delta_cap),
        inactive=int(np.count_nonzero(inactive)),
    )


# --- cost and its gradient (for verification) -----------------------------------

def cost(state: EstimatorState, corrected_signs, s) -> float:
    """Smoothed objective for candidate ``s`` given the current window."""
    s = np.asarray(s, dtype=complex)
    b = np.asarray(corrected_signs, dtype=complex)
    prm = state.params
    w = len(state.window)
    u = state.phi[:w] @ s - state.window.levels
    fit = np.sum(np.abs(b - cf(u, state.delta)) ** 2)
    smooth = prm.lambda1 * np.sum(np.abs(s - state.p * state.s_hat.amps) ** 2)
    sparse = prm.lambda2 * np.sum(g_sigma(s, state.sigma))
    return float(fit + smooth + sparse)


def cost_gradient(state: EstimatorState, corrected_signs, s) -> np.ndarray:
    """Gradient of :func:`cost` over the ``2N`` real coordinates, packed as
    ``d/dRe + 1j*d/dIm``.

    The sparsity term carries the chain-rule factor ``sigma``; the per-element
    magnitude equation solved by :func:`update` omits it, which amounts to a
    sparsity weight of ``lambda2 / sigma``.
    """
    s = np.asarray(s, dtype=complex)
    b = np.asarray(corrected_signs, dtype=complex)
    prm = state.params
    w = len(state.window)
    u = state.phi[:w] @ s - state.window.levels
    data = 2.0 * state.phi[:w].conj().T @ axis_product(cf_prime(u, state.delta), cf(u, state.delta) - b)
    smooth = 2.0 * prm.lambda1 * (s - state.p * state.s_hat.amps)
    mag = np.abs(s)
    sig = state.sigma
    weight = np.divide(sig, mag * (1.0 + (sig * mag) ** 2), out=np.zeros_like(mag), where=mag > 0)
    sparse = prm.lambda2 / np.arctan(sig) * weight * s
    return data + smooth + sparse
