import os

# keep BLAS single-threaded: the suite runs its own process/thread parallelism
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from wadirl.scenario import Scenario, default_scenario, loads_scenario  # noqa: E402
from wadirl.scripted import make_reference_demo  # noqa: E402


@pytest.fixture(scope="session")
def scenario() -> Scenario:
    return default_scenario()


@pytest.fixture(scope="session")
def demo(scenario):
    return make_reference_demo(scenario)


_MINI_STATS = {
    "aviation": dict(health=50.0, speed=0.5, range=2.5, damage=1.4, attacks_air=True, air=True),
    "mech_infantry": dict(health=80.0, speed=0.2, range=2.0, damage=1.0, attacks_air=False, air=False),
    "mortars": dict(health=30.0, speed=0.1, range=5.5, damage=1.2, attacks_air=False, air=False),
    "scouts": dict(health=40.0, speed=0.35, range=2.0, damage=0.6, attacks_air=False, air=False),
    "tanks": dict(health=100.0, speed=0.15, range=2.5, damage=1.6, attacks_air=False, air=False),
    "red_infantry": dict(health=60.0, speed=0.18, range=2.0, damage=0.8, attacks_air=True, air=False),
    "red_armor": dict(health=90.0, speed=0.15, range=2.5, damage=1.4, attacks_air=False, air=False),
    "red_aa": dict(health=50.0, speed=0.12, range=3.5, damage=1.2, attacks_air=True, air=False),
}

# far-corner parking spots for the coalitions a surgical test does not use
_DEFAULT_MINI_SPAWNS = {
    "aviation": [(0, 0)],
    "mech_infantry": [(0, 1)],
    "mortars": [(0, 2)],
    "scouts": [(0, 3)],
    "tanks": [(0, 4)],
    "red_infantry": [(11, 11)],
}


def make_mini_scenario(
    spawns: dict | None = None,
    stats: dict | None = None,
    width: int = 12,
    height: int = 12,
    wadi_axis: int = 6,
    bridge_rows: tuple = (5, 6),
    max_steps: int = 60,
    ticks_per_step: int = 4,
    spawn_jitter: float = 0.0,
    red_leash: float = 4.0,
) -> Scenario:
    """Small scenario with deterministic spawn positions for surgical tests."""
    merged_stats = {k: dict(v) for k, v in _MINI_STATS.items()}
    for name, overrides in (stats or {}).items():
        merged_stats[name].update(overrides)
    merged_spawns = dict(_DEFAULT_MINI_SPAWNS)
    merged_spawns.update(spawns or {})

    rows = []
    for y in range(height):
        row = ""
        for x in range(width):
            if x == wadi_axis:
                row += "=" if y in bridge_rows else "~"
            else:
                row += "."
        rows.append(row)

    lines = [
        "schema_version = 1",
        'name = "mini"',
        "[rules]",
        f"ticks_per_step = {ticks_per_step}",
        f"max_steps = {max_steps}",
        "target_bins = 3",
        f"spawn_jitter = {spawn_jitter}",
        f"red_leash = {red_leash}",
        "[terrain]",
        f"width = {width}",
        f"height = {height}",
        f"wadi_axis = {wadi_axis}",
        "rows = [",
    ]
    lines += [f'  "{r}",' for r in rows]
    lines.append("]")
    for name, s in merged_stats.items():
        lines += [
            f"[stats.{name}]",
            f"health = {s['health']}",
            f"speed = {s['speed']}",
            f"range = {s['range']}",
            f"damage = {s['damage']}",
            f"attacks_air = {str(s['attacks_air']).lower()}",
            f"air = {str(s['air']).lower()}",
        ]
    for name, cells in merged_spawns.items():
        lines += [
            "[[spawn]]",
            f'coalition = "{name}"',
            f"cells = {[list(c) for c in cells]}",
        ]
    return loads_scenario("\n".join(lines) + "\n")


@pytest.fixture
def mini():
    return make_mini_scenario


def random_command(rng: np.random.Generator, bins: int = 3):
    from wadirl.sim import Command

    return Command(
        int(rng.integers(0, 5)),
        int(rng.integers(0, 3)),
        int(rng.integers(0, bins)),
        int(rng.integers(0, bins)),
    )
