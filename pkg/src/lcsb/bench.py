"""
Monte Carlo experiment harness: configuration, per-run pipeline
(generate, encode, corrupt, decode), Table-I-style sweeps and the off-grid
tracking trace.

Configuration is TOML::

    runs = 20
    master_seed = 0

    [grid]            # n + omega0, or exponents = [[re, im], ...]
    n = 100
    omega0 = 10.0
    tau = 5e-4
    window_len = 50

    [signal]
    sparsity = [0.025, 0.05, 0.1, 0.2]
    num_samples = 3000
    noise_std = 0.0
    real_amplitudes = false
    offgrid = [{ exponent = [-1.5, 4421.0] }]   # or gamma/delta_omega/base_grid_index

    [estimator]       # any EstimatorParams field
    [channel]
    p = [0.0, 0.025, 0.05]
    [ec]              # theta, epsilon, steps_per_sample
    modes = [false, true]

Unknown keys raise :class:`ConfigError`.
"""
from __future__ import annotations

import csv
import io
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel import ChannelSpec, corrupt
from .core import FrequencyGrid
from .decoder import DivergenceError, EcParams, decode
from .encoder import StreamHeader, encode
from .estimator import EstimatorParams
from .metrics import is_divergent, mse_db
from .siggen import OffGridComponent, SignalSpec, generate

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunResult",
    "CellSummary",
    "mse_db",
    "load_config",
    "parse_config",
    "desk_profile",
    "paper_profile",
    "offgrid_profile",
    "run_seeds",
    "run_single",
    "run_table1",
    "run_offgrid",
    "summarize",
    "table_csv",
    "trace_csv",
]

# frequencies of the off-grid experiment, as exponents (decay, angular frequency)
PAPER_OFFGRID = ((0.0, 2148.0), (-1.5, 4421.0))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OffGridEntry:
    """Off-grid component as given in a config: an absolute exponent, folded on use."""

    exponent: complex
    amplitude: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "exponent", complex(self.exponent))

    def fold(self, grid: FrequencyGrid) -> OffGridComponent:
        comp = OffGridComponent.nearest(grid, self.exponent, self.amplitude)
        freqs = np.sort(grid.exponents.imag)
        spacing = np.max(np.diff(freqs)) if freqs.size > 1 else np.inf
        if abs(comp.delta_omega) > spacing:
            raise ConfigError(
                f"off-grid frequency {self.exponent.imag} rad/s lies outside the grid "
                f"[{freqs[0]}, {freqs[-1]}] rad/s"
            )
        return comp


@dataclass(frozen=True)
class ExperimentConfig:
    grid: FrequencyGrid
    sparsity: Tuple[float, ...] = (0.05,)
    num_samples: int = 3000
    noise_std: float = 0.0
    real_amplitudes: bool = False
    offgrid: Tuple[Union[OffGridEntry, OffGridComponent], ...] = ()
    estimator: EstimatorParams = EstimatorParams()
    flip_rates: Tuple[float, ...] = (0.0,)
    ec: EcParams = EcParams()
    ec_modes: Tuple[bool, ...] = (False, True)
    runs: int = 20
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sparsity", tuple(float(k) for k in self.sparsity))
        object.__setattr__(self, "flip_rates", tuple(float(p) for p in self.flip_rates))
        object.__setattr__(self, "ec_modes", tuple(bool(e) for e in self.ec_modes))
        object.__setattr__(self, "offgrid", tuple(self.offgrid))
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        if not self.sparsity or not self.flip_rates or not self.ec_modes:
            raise ConfigError("sparsity, channel p and ec modes must be non-empty")
        for p in self.flip_rates:
            ChannelSpec(p)
        for k in self.sparsity:
            self.signal_spec(k, 0)

    def offgrid_components(self) -> Tuple[OffGridComponent, ...]:
        return tuple(c.fold(self.grid) if isinstance(c, OffGridEntry) else c for c in self.offgrid)

    def signal_spec(self, k: float, seed: int) -> SignalSpec:
        return SignalSpec(
            self.grid, k, self.num_samples, seed, self.offgrid_components(), self.noise_std, self.real_amplitudes
        )


# --- config parsing -------------------------------------------------------------

_TOP = {"runs", "master_seed", "grid", "signal", "estimator", "channel", "ec"}
_GRID = {"n", "omega0", "exponents", "tau", "window_len"}
_SIGNAL = {"sparsity", "num_samples", "noise_std", "real_amplitudes", "offgrid"}
_OFFGRID = {"exponent", "gamma", "delta_omega", "base_grid_index", "amplitude"}
_EST = {f.name for f in fields(EstimatorParams)}
_EC = {"theta", "epsilon", "steps_per_sample", "modes"}
_CHANNEL = {"p"}


def _check_keys(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"[{where}] must be a table")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(extra))}")


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _complex(v, what: str) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise ConfigError(f"{what} must be a number or a [re, im] pair")


def parse_config(doc: dict) -> ExperimentConfig:
    _check_keys(doc, _TOP, "top level")
    if "grid" not in doc:
        raise ConfigError("missing [grid] table")
    g = doc["grid"]
    _check_keys(g, _GRID, "grid")
    try:
        tau, m = float(g["tau"]), int(g["window_len"])
        if "exponents" in g:
            if "omega0" in g or "n" in g:
                raise ConfigError("[grid] takes either exponents or n + omega0, not both")
            z = np.array([_complex(v, "grid exponent") for v in g["exponents"]])
            grid = FrequencyGrid(z, tau, m)
        else:
            grid = FrequencyGrid.uniform(int(g["n"]), float(g["omega0"]), tau, m)
    except KeyError as exc:
        raise ConfigError(f"missing [grid] key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc

    kw = {"grid": grid}
    s = doc.get("signal", {})
    _check_keys(s, _SIGNAL, "signal")
    if "sparsity" in s:
        kw["sparsity"] = _as_list(s["sparsity"])
    for key in ("num_samples", "noise_std", "real_amplitudes"):
        if key in s:
            kw[key] = s[key]
    comps = []
    for i, c in enumerate(s.get("offgrid", [])):
        _check_keys(c, _OFFGRID, f"signal.offgrid[{i}]")
        amp = _complex(c.get("amplitude", 1.0), "amplitude")
        if "exponent" in c:
            if set(c) - {"exponent", "amplitude"}:
                raise ConfigError("off-grid entry takes either exponent or gamma/delta_omega/base_grid_index")
            comps.append(OffGridEntry(_complex(c["exponent"], "exponent"), amp))
        else:
            try:
                comps.append(OffGridComponent(c["gamma"], c["delta_omega"], c["base_grid_index"], amp))
            except KeyError as exc:
                raise ConfigError(f"off-grid entry {i} misses {exc}") from exc
    kw["offgrid"] = comps

    est = doc.get("estimator", {})
    _check_keys(est, _EST, "estimator")
    ecd = dict(doc.get("ec", {}))
    _check_keys(ecd, _EC, "ec")
    if "modes" in ecd:
        kw["ec_modes"] = _as_list(ecd.pop("modes"))
    ch = doc.get("channel", {})
    _check_keys(ch, _CHANNEL, "channel")
    if "p" in ch:
        kw["flip_rates"] = _as_list(ch["p"])
    for key in ("runs", "master_seed"):
        if key in doc:
            kw[key] = int(doc[key])
    try:
        kw["estimator"] = EstimatorParams(**est)
        kw["ec"] = EcParams(**ecd)
        return ExperimentConfig(**kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc)


# --- profiles -------------------------------------------------------------------

def desk_profile(**overrides) -> ExperimentConfig:
    """Small grid for quick checks: N=100, M=50, T=3000, 20 runs."""
    kw = dict(
        grid=FrequencyGrid.uniform(100, 10.0, 5e-4, 50),
        sparsity=(0.025, 0.05, 0.1, 0.2),
        num_samples=3000,
        flip_rates=(0.0, 0.025, 0.05),
        runs=20,
    )
    kw.update(overrides)
    return ExperimentConfig(**kw)


def paper_profile(**overrides) -> ExperimentConfig:
    """Full grid: N=500, M=50, T=5000, 100 runs."""
    kw = dict(
        grid=FrequencyGrid.uniform(500, 10.0, 5e-4, 50),
        sparsity=(0.025, 0.05, 0.1, 0.2),
        num_samples=5000,
        flip_rates=(0.0, 0.025, 0.05),
        runs=100,
    )
    kw.update(overrides)
    return ExperimentConfig(**kw)


def offgrid_profile(**overrides) -> ExperimentConfig:
    """Two off-grid tones on top of a 5% sparse on-grid signal, N=500."""
    kw = dict(
        grid=FrequencyGrid.uniform(500, 10.0, 5e-4, 50),
        sparsity=(0.05,),
        num_samples=5000,
        offgrid=tuple(OffGridEntry(complex(*z)) for z in PAPER_OFFGRID),
        flip_rates=(0.0,),
        ec_modes=(False,),
        runs=1,
    )
    kw.update(overrides)
    return ExperimentConfig(**kw)


# --- runs -----------------------------------------------------------------------

@dataclass
class RunResult:
    k: float
    p: float
    ec: bool
    run: int
    final_mse_db: float
    mse_trace: np.ndarray
    wall_time: float
    num_flips: int = 0

    @property
    def diverged(self) -> bool:
        return is_divergent(self.final_mse_db)


def _key(x: float) -> int:
    return int(round(x * 1e9))


def run_seeds(master_seed: int, run: int, k: float, p: float) -> Tuple[int, int, int]:
    """Integer seeds for the signal, channel and correction streams of one run.

    Each stream is keyed by its own purpose and the parameters it depends on,
    so a run's signal is shared by every (p, ec) cell and results do not
    depend on the order cells are executed in.
    """

    def derive(*key):
        ss = np.random.SeedSequence(master_seed, spawn_key=key)
        return int(ss.generate_state(1, np.uint64)[0])

    return derive(0, run, _key(k)), derive(1, run, _key(k), _key(p)), derive(2, run, _key(k), _key(p))


def _decode_run(signal, enc, header, cfg, k, p, use_ec, run) -> RunResult:
    _, ch_seed, ec_seed = run_seeds(cfg.master_seed, run, k, p)
    t0 = time.perf_counter()
    received, (er, ei) = corrupt(enc.stream, ChannelSpec(p, ch_seed))
    ec = EcParams(cfg.ec.theta, cfg.ec.epsilon, ec_seed, use_ec, cfg.ec.steps_per_sample)
    try:
        res = decode(received, header, ec, truth=signal, keep_states=False)
        trace = res.mse_trace
    except DivergenceError as exc:
        trace = exc.partial.mse_trace
        trace = np.concatenate([trace, np.full(len(signal) - trace.size, np.inf)])
    final = float(trace[-1])
    return RunResult(k, p, use_ec, run, final, trace, time.perf_counter() - t0, int(er.sum() + ei.sum()))


def _encode_run(cfg: ExperimentConfig, k: float, run: int):
    sig_seed = run_seeds(cfg.master_seed, run, k, 0.0)[0]
    signal = generate(cfg.signal_spec(k, sig_seed))
    t0 = time.perf_counter()
    enc = encode(signal, cfg.estimator)
    header = StreamHeader(cfg.grid, cfg.estimator, len(signal))
    return signal, enc, header, time.perf_counter() - t0


def run_single(cfg: ExperimentConfig, k: float, p: float, use_ec: bool, run: int) -> RunResult:
    """Generate, encode, corrupt and decode one Monte Carlo run."""
    signal, enc, header, t_enc = _encode_run(cfg, k, run)
    res = _decode_run(signal, enc, header, cfg, k, p, use_ec, run)
    res.wall_time += t_enc
    return res


def _sweep(cfg: ExperimentConfig, progress=None) -> List[RunResult]:
    out = []
    for k in cfg.sparsity:
        for run in range(cfg.runs):
            signal, enc, header, t_enc = _encode_run(cfg, k, run)
            for p in cfg.flip_rates:
                for use_ec in cfg.ec_modes:
                    res = _decode_run(signal, enc, header, cfg, k, p, use_ec, run)
                    res.wall_time += t_enc
                    out.append(res)
                    if progress is not None:
                        progress(res)
    return out


@dataclass(frozen=True)
class CellSummary:
    k: float
    p: float
    ec: bool
    runs: int
    mean_mse_db: float
    std_mse_db: float
    num_divergent: int


def summarize(results: Iterable[RunResult]) -> List[CellSummary]:
    """Mean and spread of the final MSE per (k, p, ec) cell. Divergent runs are included."""
    cells = {}
    for r in results:
        cells.setdefault((r.k, r.p, r.ec), []).append(r)
    out = []
    for (k, p, e), rs in cells.items():
        v = np.array([r.final_mse_db for r in rs])
        out.append(CellSummary(k, p, e, len(rs), float(v.mean()), float(v.std()), sum(r.diverged for r in rs)))
    return out


def run_table1(cfg: ExperimentConfig, progress=None) -> Tuple[List[CellSummary], List[RunResult]]:
    results = _sweep(cfg, progress)
    return summarize(results), results


def run_offgrid(cfg: ExperimentConfig, progress=None) -> Tuple[np.ndarray, List[RunResult]]:
    """Mean MSE trace over runs for the first (k, p, ec) cell of ``cfg``."""
    if not cfg.offgrid:
        cfg = replace(cfg, offgrid=tuple(OffGridEntry(complex(*z)) for z in PAPER_OFFGRID))
    k, p, e = cfg.sparsity[0], cfg.flip_rates[0], cfg.ec_modes[0]
    results = []
    for run in range(cfg.runs):
        res = run_single(cfg, k, p, e, run)
        results.append(res)
        if progress is not None:
            progress(res)
    return np.mean([r.mse_trace for r in results], axis=0), results


# --- CSV ------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def table_csv(cells: Sequence[CellSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "p", "ec", "runs", "mean_mse_db", "std_mse_db", "num_divergent"])
    for c in cells:
        w.writerow([_fmt(c.k), _fmt(c.p), int(c.ec), c.runs, _fmt(c.mean_mse_db), _fmt(c.std_mse_db), c.num_divergent])
    return buf.getvalue()


def trace_csv(trace: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "mse_db"])
    for i, v in enumerate(trace):
        w.writerow([i, _fmt(v)])
    return buf.getvalue()
