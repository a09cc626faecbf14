"""Reconstruction error metric."""
from __future__ import annotations

import numpy as np

from .core import SpectralState

__all__ = ["MSE_FLOOR_DB", "DIVERGENCE_DB", "mse_db", "is_divergent"]

MSE_FLOOR_DB = -120.0
# final MSE above this counts as a failed reconstruction
DIVERGENCE_DB = -5.0


def _amps(s) -> np.ndarray:
    return s.amps if isinstance(s, SpectralState) else np.asarray(s, dtype=complex)


def mse_db(truth, estimate) -> float:
    """Normalized squared error ``10*log10(|S - S_hat|^2 / |S|^2)``, floored at -120 dB.

    Accepts :class:`SpectralState` objects or plain complex arrays.
    """
    s, s_hat = _amps(truth), _amps(estimate)
    if s.shape != s_hat.shape:
        raise ValueError(f"shape mismatch {s.shape} vs {s_hat.shape}")
    ref = float(np.sum(np.abs(s) ** 2))
    if ref == 0.0:
        raise ValueError("MSE is undefined for an all-zero reference state")
    err = float(np.sum(np.abs(s - s_hat) ** 2))
    if err == 0.0:
        return MSE_FLOOR_DB
    return max(10.0 * np.log10(err / ref), MSE_FLOOR_DB)


def is_divergent(final_mse_db: float) -> bool:
    return not final_mse_db <= DIVERGENCE_DB
