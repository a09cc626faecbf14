import json

import numpy as np
import pytest

from lcsb.core import FrequencyGrid, build_vandermonde
from lcsb.siggen import OffGridComponent, SignalSpec, generate, load_signal, save_signal
from oracles import direct_sum_signal


@pytest.fixture
def grid():
    return FrequencyGrid.uniform(500, 10.0, 5e-4, 50)


def test_support_size_matches_sparsity(grid):
    sig = generate(SignalSpec(grid, 0.05, 10, seed=1))
    active = np.flatnonzero(sig.true_states[0])
    assert active.size == 25


def test_samples_equal_sum_of_states(grid):
    sig = generate(SignalSpec(grid, 0.1, 200, seed=2))
    sums = sig.true_states.sum(axis=1)
    l1 = np.abs(sig.true_states).sum(axis=1)
    assert np.all(np.abs(sig.samples - sums) < 1e-9 * l1)


def test_states_follow_direct_synthesis():
    g = FrequencyGrid.uniform(40, 10.0, 5e-4, 8)
    sig = generate(SignalSpec(g, 0.1, 300, seed=3))
    amps = sig.true_states[0]
    for m in (1, 57, 299):
        assert sig.samples[m] == pytest.approx(direct_sum_signal(g.exponents, amps, g.tau, m), rel=1e-10)
    m = 120
    window = sig.samples[m - np.arange(g.window_len)]
    assert np.allclose(build_vandermonde(g) @ sig.true_states[m], window, rtol=1e-10, atol=0)


def test_determinism(grid):
    spec = SignalSpec(grid, 0.05, 50, seed=9, noise_std=0.1)
    a, b = generate(spec), generate(spec)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert a.true_states.tobytes() == b.true_states.tobytes()


def test_unit_expected_power(grid):
    powers = []
    for s in range(40):
        state = generate(SignalSpec(grid, 0.2, 1, seed=s)).true_states[0]
        powers.append(np.mean(np.abs(state[state != 0]) ** 2))
    assert np.mean(powers) == pytest.approx(1.0, abs=0.05)


def test_noise_only_touches_samples(grid):
    clean = generate(SignalSpec(grid, 0.05, 400, seed=5))
    noisy = generate(SignalSpec(grid, 0.05, 400, seed=5, noise_std=0.3))
    assert np.array_equal(clean.true_states, noisy.true_states)
    resid = noisy.samples - clean.samples
    assert np.std(resid.real) == pytest.approx(0.3, rel=0.15)
    assert np.std(resid.imag) == pytest.approx(0.3, rel=0.15)


def test_offgrid_decay_per_step(grid):
    comp = OffGridComponent.nearest(grid, complex(-1.5, 4421.0))
    assert comp.base_grid_index == 441  # bin 442 (1-based), 4420 rad/s
    assert comp.delta_omega == pytest.approx(1.0)
    sig = generate(SignalSpec(grid, 0.05, 100, seed=0, offgrid_components=(comp,)))
    col = sig.true_states[:, comp.base_grid_index]
    ratio = np.abs(col[1:] / col[:-1])
    assert np.allclose(ratio, np.exp(-1.5 * grid.tau))
    assert np.allclose(np.angle(col[1:] / col[:-1]), 4421.0 * grid.tau)


def test_identity_fold_matches_on_grid(grid):
    base = generate(SignalSpec(grid, 0.05, 60, seed=4))
    k = int(np.flatnonzero(base.true_states[0] == 0)[0])
    comp = OffGridComponent(0.0, 0.0, k, 0.7 - 0.2j)
    folded = generate(SignalSpec(grid, 0.05, 60, seed=4, offgrid_components=(comp,)))
    p = np.exp(grid.exponents[k] * grid.tau)
    assert np.allclose(folded.true_states[:, k], (0.7 - 0.2j) * p ** np.arange(60), rtol=1e-12)


def test_spec_validation(grid):
    with pytest.raises(ValueError):
        SignalSpec(grid, 0.0005, 10)  # rounds to zero components
    with pytest.raises(ValueError):
        SignalSpec(grid, 0.05, 10, noise_std=-1)
    with pytest.raises(ValueError):
        SignalSpec(grid, 0.05, 10, offgrid_components=(OffGridComponent(0.0, 0.0, 500),))
    with pytest.raises(ValueError):
        OffGridComponent(0.5, 0.0, 0)


def test_json_roundtrip(tmp_path, grid):
    comp = OffGridComponent.nearest(grid, complex(0, 2148.0), 0.5j)
    sig = generate(SignalSpec(grid, 0.025, 30, seed=7, offgrid_components=(comp,), noise_std=0.01))
    path = tmp_path / "sig.json"
    save_signal(sig, path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"spec", "samples", "true_states"}
    back = load_signal(path)
    assert back.spec == sig.spec
    assert np.array_equal(back.samples, sig.samples)
    assert np.array_equal(back.true_states, sig.true_states)
