"""Tiny splitmix64 generator used inside the simulator.

The sim cannot use Python's ``random`` or numpy generators for state it must
digest: their internal state is large and awkward to serialize bit-exactly.
splitmix64 keeps the whole generator in one u64 that lives inside the world
state, survives JSON round-trips, and behaves identically on every platform.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1


def seed_state(seed: int) -> int:
    """Map an arbitrary integer seed onto a non-degenerate u64 state."""
    return (seed * 0x9E3779B97F4A7C15 + 0x1F0E442D) & MASK64


def next_u64(state: int) -> tuple[int, int]:
    """Advance the stream once. Returns (value, new_state)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), state


def next_float(state: int) -> tuple[float, int]:
    """Uniform draw in [0, 1) with 53 bits of entropy."""
    value, state = next_u64(state)
    return (value >> 11) * 2.0**-53, state
