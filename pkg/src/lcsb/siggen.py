"""Random spectrum-sparse test signals on a frequency grid."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .core import FrequencyGrid, SpectralState, predictor

__all__ = ["OffGridComponent", "SignalSpec", "GeneratedSignal", "generate", "save_signal", "load_signal"]


@dataclass(frozen=True)
class OffGridComponent:
    """A component ``amplitude * exp((z_K + gamma + 1j*delta_omega) * t)``.

    It is carried by grid bin ``base_grid_index`` (0-based position in the
    grid's exponent list) as a slowly varying amplitude.
    """

    gamma: float
    delta_omega: float
    base_grid_index: int
    amplitude: complex = 1.0

    def __post_init__(self):
        if self.gamma > 0:
            raise ValueError("off-grid gamma must be <= 0")
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(self, "base_grid_index", int(self.base_grid_index))

    @classmethod
    def nearest(cls, grid: FrequencyGrid, exponent: complex, amplitude: complex = 1.0) -> "OffGridComponent":
        """Fold ``exponent`` onto the grid bin with the closest frequency."""
        exponent = complex(exponent)
        k = int(np.argmin(np.abs(grid.exponents.imag - exponent.imag)))
        z = grid.exponents[k]
        return cls(exponent.real - z.real, exponent.imag - z.imag, k, amplitude)


@dataclass(frozen=True)
class SignalSpec:
    grid: FrequencyGrid
    sparsity_factor: float
    num_samples: int
    seed: int = 0
    offgrid_components: Tuple[OffGridComponent, ...] = ()
    noise_std: float = 0.0
    real_amplitudes: bool = False

    def __post_init__(self):
        object.__setattr__(self, "offgrid_components", tuple(self.offgrid_components))
        if not 0 < self.sparsity_factor <= 1:
            raise ValueError("sparsity_factor must lie in (0, 1]")
        if self.num_active < 1:
            raise ValueError("sparsity_factor * N rounds to zero active components")
        if self.num_samples < 0:
            raise ValueError("num_samples must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        for c in self.offgrid_components:
            if not 0 <= c.base_grid_index < self.grid.n:
                raise ValueError(f"off-grid base index {c.base_grid_index} outside grid of size {self.grid.n}")

    @property
    def num_active(self) -> int:
        return int(round(self.sparsity_factor * self.grid.n))


@dataclass(frozen=True)
class GeneratedSignal:
    """Samples ``x(m*tau)`` and the ground-truth states behind them.

    ``true_states`` is a ``(T, N)`` array; row ``m`` is ``S_m``.
    """

    samples: np.ndarray
    true_states: np.ndarray
    spec: SignalSpec

    def state(self, m: int) -> SpectralState:
        return SpectralState(self.true_states[m], m)

    def __len__(self) -> int:
        return self.samples.size


def generate(spec: SignalSpec) -> GeneratedSignal:
    grid = spec.grid
    rng = np.random.default_rng(spec.seed)
    n, T = grid.n, spec.num_samples

    reserved = {c.base_grid_index for c in spec.offgrid_components}
    pool = np.array([i for i in range(n) if i not in reserved])
    if pool.size < spec.num_active:
        raise ValueError("not enough free grid bins for the requested sparsity")
    support = np.sort(rng.choice(pool, size=spec.num_active, replace=False))
    if spec.real_amplitudes:
        amps = rng.standard_normal(support.size).astype(complex)
    else:
        amps = (rng.standard_normal(support.size) + 1j * rng.standard_normal(support.size)) / np.sqrt(2.0)

    s0 = np.zeros(n, dtype=complex)
    s0[support] = amps
    p = predictor(grid)
    states = np.empty((T, n), dtype=complex)
    cur = s0
    for m in range(T):
        if m:
            cur = p * cur
        states[m] = cur

    t = np.arange(T) * grid.tau
    for c in spec.offgrid_components:
        z = grid.exponents[c.base_grid_index] + c.gamma + 1j * c.delta_omega
        states[:, c.base_grid_index] += c.amplitude * np.exp(z * t)

    samples = states.sum(axis=1)
    if spec.noise_std > 0:
        samples = samples + spec.noise_std * (rng.standard_normal(T) + 1j * rng.standard_normal(T))
    samples.setflags(write=False)
    states.setflags(write=False)
    return GeneratedSignal(samples, states, spec)


# --- JSON document --------------------------------------------------------------

def _pairs(z) -> list:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1).tolist()


def _unpairs(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros(a.shape[:-1] if a.ndim > 1 else (0,), dtype=complex)
    return a[..., 0] + 1j * a[..., 1]


def grid_to_dict(grid: FrequencyGrid) -> dict:
    d = {"tau": grid.tau, "window_len": grid.window_len}
    if grid.is_uniform:
        d.update(n=grid.n, omega0=grid.omega0)
    else:
        d["exponents"] = _pairs(grid.exponents)
    return d


def grid_from_dict(d: dict) -> FrequencyGrid:
    if "exponents" in d:
        return FrequencyGrid(_unpairs(d["exponents"]), d["tau"], d["window_len"])
    return FrequencyGrid.uniform(d["n"], d["omega0"], d["tau"], d["window_len"])


def spec_to_dict(spec: SignalSpec) -> dict:
    return {
        "grid": grid_to_dict(spec.grid),
        "sparsity_factor": spec.sparsity_factor,
        "num_samples": spec.num_samples,
        "seed": spec.seed,
        "noise_std": spec.noise_std,
        "real_amplitudes": spec.real_amplitudes,
        "offgrid_components": [
            {
                "gamma": c.gamma,
                "delta_omega": c.delta_omega,
                "base_grid_index": c.base_grid_index,
                "amplitude": [c.amplitude.real, c.amplitude.imag],
            }
            for c in spec.offgrid_components
        ],
    }


def spec_from_dict(d: dict) -> SignalSpec:
    comps = tuple(
        OffGridComponent(c["gamma"], c["delta_omega"], c["base_grid_index"], complex(*c["amplitude"]))
        for c in d.get("offgrid_components", [])
    )
    return SignalSpec(
        grid=grid_from_dict(d["grid"]),
        sparsity_factor=d["sparsity_factor"],
        num_samples=d["num_samples"],
        seed=d["seed"],
        offgrid_components=comps,
        noise_std=d.get("noise_std", 0.0),
        real_amplitudes=d.get("real_amplitudes", False),
    )


def save_signal(signal: GeneratedSignal, path: Union[str, Path]) -> None:
    """Write the signal as JSON; true states are stored on their support only."""
    support = np.flatnonzero(np.any(signal.true_states != 0, axis=0))
    doc = {
        "spec": spec_to_dict(signal.spec),
        "samples": _pairs(signal.samples),
        "true_states": {
            "support": support.tolist(),
            "values": _pairs(signal.true_states[:, support]),
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_signal(path: Union[str, Path]) -> GeneratedSignal:
    doc = json.loads(Path(path).read_text())
    spec = spec_from_dict(doc["spec"])
    samples = _unpairs(doc["samples"]).reshape(-1)
    support = np.asarray(doc["true_states"]["support"], dtype=int)
    states = np.zeros((samples.size, spec.grid.n), dtype=complex)
    if support.size:
        states[:, support] = _unpairs(doc["true_states"]["values"]).reshape(samples.size, support.size)
    return GeneratedSignal(samples, states, spec)
