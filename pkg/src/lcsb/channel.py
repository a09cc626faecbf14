"""Memoryless binary symmetric channel on the real and imaginary sign bits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .core import SignStream

__all__ = ["ChannelSpec", "corrupt"]


@dataclass(frozen=True)
class ChannelSpec:
    """Each real bit flips independently with probability ``p``.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`.
    """

    p: float
    seed: Union[int, np.random.SeedSequence] = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 0.5:
            raise ValueError(f"flip probability must lie in [0, 0.5], got {self.p}")


def corrupt(stream: SignStream, spec: ChannelSpec) -> Tuple[SignStream, Tuple[np.ndarray, np.ndarray]]:
    """Flip bits of ``stream``.

    Returns the corrupted stream and the flip indicators ``(e_re, e_im)`` as
    ``uint8`` arrays, so that ``sent = received * (1 - 2*e)`` on each axis.
    """
    rng = np.random.default_rng(spec.seed)
    n = len(stream)
    e_re = (rng.random(n) < spec.p).astype(np.uint8)
    e_im = (rng.random(n) < spec.p).astype(np.uint8)
    re = stream.re * (1 - 2 * e_re.astype(np.int8))
    im = stream.im * (1 - 2 * e_im.astype(np.int8))
    return SignStream(re, im), (e_re, e_im)
