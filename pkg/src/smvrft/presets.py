"""Worked-example plants, reference models and test profiles.

These presets are shared by the CLI (builtin ``example`` selector in config
files) and by the test suite.  Both plants share the denominator
``(s+10)(s^2+1.6s+16)`` sampled at 0.125 s; the second has a right-half-plane
zero, so its sampled version is non-minimum phase with static gain -0.5.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, List, Tuple

import numpy as np

from .lti import TransferFunction

__all__ = [
    "ContinuousPlant",
    "EXAMPLE_PLANTS",
    "REFERENCE_MODELS",
    "step_profile_pieces",
]


@dataclasses.dataclass(frozen=True)
class ContinuousPlant:
    """Strictly proper continuous SISO plant plus its sampling setup."""

    num_s: Tuple[float, ...]
    den_s: Tuple[float, ...]
    Ts: float
    n: int
    ar_order: int  # recommended AR order for the input spectral factor


_DEN = tuple(np.polymul([1.0, 10.0], [1.0, 1.6, 16.0]))

EXAMPLE_PLANTS: Dict[str, ContinuousPlant] = {
    "example1": ContinuousPlant(num_s=(160.0,), den_s=_DEN, Ts=0.125, n=3, ar_order=5),
    "example2": ContinuousPlant(
        num_s=(160.0, -80.0), den_s=_DEN, Ts=0.125, n=3, ar_order=21
    ),
}

#: unit-gain first-order reference models y_r(k) = -a1 y_r(k-1) + b1 r(k-1),
#: keyed by their roughly 2 percent settling length in samples
REFERENCE_MODELS: Dict[str, TransferFunction] = {
    "M10": TransferFunction.first_order(-0.6, 0.4),
    "M30": TransferFunction.first_order(-0.855, 0.145),
    "M60": TransferFunction.first_order(-0.925, 0.075),
}


def step_profile_pieces(scale: float = 1.0) -> List[Tuple[float, float, float]]:
    """Piecewise-constant test reference as ``(value, t_start, t_end)`` triples.

    ``scale`` stretches the interval durations (the slow-model examples use
    ``scale=2`` so each level lasts well past the loop settling time).
    """
    base = [
        (0.0, 0.0, 6.5),
        (8.0, 6.5, 13.0),
        (-6.0, 13.0, 19.5),
        (10.0, 19.5, 26.0),
        (-3.0, 26.0, 32.5),
    ]
    return [(v, a * scale, b * scale) for v, a, b in base]
