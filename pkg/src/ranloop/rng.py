"""Counter-based deterministic random draws.

Every random quantity in the simulator is a pure function of
(base_seed, trial, ue, cell, prb, draw-kind tag).  No generator state is
carried between calls, so any single draw is reproducible in isolation
and trials can be evaluated in any order or in parallel with identical
results.

Mixing uses the splitmix64 finalizer, applied per counter component.
All helpers accept numpy integer arrays and broadcast.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)

# draw-kind tags
TAG_SHADOWING = 1
TAG_FADING = 2
TAG_UNIFORM = 3


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
        return z ^ (z >> np.uint64(31))


def counter_hash(seed: int, *components) -> np.ndarray:
    """Fold integer components (scalars or arrays) into a uint64 hash."""
    with np.errstate(over="ignore"):
        h = np.uint64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _GOLDEN)
        h = _mix64(np.asarray(h, dtype=np.uint64))
        for comp in components:
            c = np.asarray(comp, dtype=np.int64).astype(np.uint64)
            h = _mix64((h ^ c) + _GOLDEN)
        return h


def uniform(seed: int, *components) -> np.ndarray:
    """Uniform draw in the open interval (0, 1)."""
    h = counter_hash(seed, *components)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def exponential(seed: int, *components) -> np.ndarray:
    """Unit-mean exponential draw (Rayleigh power fading)."""
    return -np.log(uniform(seed, *components))


def normal(seed: int, *components) -> np.ndarray:
    """Standard normal draw via Box-Muller on two decorrelated uniforms."""
    u1 = uniform(seed, *components, 0)
    u2 = uniform(seed, *components, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
