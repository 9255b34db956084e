"""Scenario configuration: terrain layout, unit roster, stat table, engine rules.

Scenarios live in TOML files (key-value + tables). The parsed config is
immutable for the lifetime of a battle and identified by a content hash that
demonstrations embed so a demo can never be replayed against the wrong world.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ConfigError, VersionError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

CELL_OPEN = 0
CELL_WADI = 1
CELL_BRIDGE = 2
CELL_CITY = 3

_CELL_CHARS = {".": CELL_OPEN, "~": CELL_WADI, "=": CELL_BRIDGE, "#": CELL_CITY}
_CHAR_OF_CELL = {v: k for k, v in _CELL_CHARS.items()}

BLUE_COALITIONS = ("aviation", "mech_infantry", "mortars", "scouts", "tanks")
RED_COALITIONS = ("red_infantry", "red_armor", "red_aa")
COALITIONS = BLUE_COALITIONS + RED_COALITIONS

DISPLAY_NAMES = {
    "aviation": "Aviation",
    "mech_infantry": "Mechanized Infantry",
    "mortars": "Mortars",
    "scouts": "Scouts",
    "tanks": "Tanks",
    "red_infantry": "Red Infantry",
    "red_armor": "Red Armor",
    "red_aa": "Red AA",
}

SIDE_BLUE = 0
SIDE_RED = 1


@dataclass(frozen=True)
class CoalitionStats:
    health: float
    speed: float          # cells per simulator tick
    attack_range: float   # cells
    damage: float         # points per attack tick
    attacks_air: bool
    air: bool


class Terrain:
    """Immutable grid. Cells are indexed [y][x]; x grows east, y grows south."""

    def __init__(self, width: int, height: int, wadi_axis: int, cells: np.ndarray):
        if cells.shape != (height, width):
            raise ConfigError(f"terrain grid is {cells.shape}, expected {(height, width)}")
        if not 0 < wadi_axis < width - 1:
            raise ConfigError(f"wadi_axis {wadi_axis} must be an interior column")
        bridge_ys, bridge_xs = np.nonzero(cells == CELL_BRIDGE)
        if bridge_ys.size == 0:
            raise ConfigError("terrain has no bridge cells")
        if not np.all(bridge_xs == wadi_axis):
            raise ConfigError("every bridge cell must lie on the wadi_axis column")
        self.width = width
        self.height = height
        self.wadi_axis = wadi_axis
        self.cells = cells
        self.cells.setflags(write=False)
        # Ground units may stand anywhere that is not open wadi.
        self.ground_passable = cells != CELL_WADI
        self.ground_passable.setflags(write=False)

    def rows(self) -> list[str]:
        return ["".join(_CHAR_OF_CELL[int(c)] for c in row) for row in self.cells]


@dataclass(frozen=True)
class SpawnEntry:
    coalition: str
    cell: tuple[int, int]  # (x, y)


@dataclass(frozen=True)
class Scenario:
    name: str
    schema_version: int
    terrain: Terrain
    stats: dict[str, CoalitionStats]
    spawns: tuple[SpawnEntry, ...]   # one entry per unit, in roster order
    ticks_per_step: int              # simulator ticks advanced per decision step
    max_steps: int                   # episode cap, in decision steps
    target_bins: int                 # C: per-axis bins of the command grid
    spawn_jitter: float              # max |offset| from cell center at reset
    red_leash: float                 # pursuit radius around each red unit's anchor
    content_hash: str

    def coalition_units(self, coalition: str) -> list[int]:
        return [i for i, s in enumerate(self.spawns) if s.coalition == coalition]

    def side_of(self, coalition: str) -> int:
        return SIDE_BLUE if coalition in BLUE_COALITIONS else SIDE_RED

    def ninth_center(self, x_bin: int, y_bin: int) -> tuple[float, float]:
        """Center point of a C x C map region."""
        c = self.target_bins
        return (
            (x_bin + 0.5) * self.terrain.width / c,
            (y_bin + 0.5) * self.terrain.height / c,
        )

    def ninth_rect(self, x_bin: int, y_bin: int) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) bounds of a map region."""
        c = self.target_bins
        w, h = self.terrain.width, self.terrain.height
        return (x_bin * w / c, y_bin * h / c, (x_bin + 1) * w / c, (y_bin + 1) * h / c)


def _canonical_dict(raw: dict) -> dict:
    """Normalized structure used for the content hash (whitespace-insensitive)."""
    return {
        "schema_version": raw["schema_version"],
        "name": raw.get("name", ""),
        "rules": {k: raw["rules"][k] for k in sorted(raw["rules"])},
        "terrain": {
            "width": raw["terrain"]["width"],
            "height": raw["terrain"]["height"],
            "wadi_axis": raw["terrain"]["wadi_axis"],
            "rows": list(raw["terrain"]["rows"]),
        },
        "stats": {
            name: {k: raw["stats"][name][k] for k in sorted(raw["stats"][name])}
            for name in sorted(raw["stats"])
        },
        "spawn": [
            {"coalition": e["coalition"], "cells": [list(c) for c in e["cells"]]}
            for e in raw["spawn"]
        ],
    }


def _parse_terrain(t: dict) -> Terrain:
    width, height = int(t["width"]), int(t["height"])
    rows = t["rows"]
    if len(rows) != height:
        raise ConfigError(f"terrain has {len(rows)} rows, expected {height}")
    grid = np.zeros((height, width), dtype=np.int8)
    for y, row in enumerate(rows):
        if len(row) != width:
            raise ConfigError(f"terrain row {y} has width {len(row)}, expected {width}")
        for x, ch in enumerate(row):
            if ch not in _CELL_CHARS:
                raise ConfigError(f"unknown terrain character {ch!r} at ({x}, {y})")
            grid[y, x] = _CELL_CHARS[ch]
    return Terrain(width, height, int(t["wadi_axis"]), grid)


def loads_scenario(text: str) -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"scenario file is not valid TOML: {e}") from e

    version = int(raw.get("schema_version", -1))
    if version < 1:
        raise ConfigError("scenario is missing a schema_version field")
    if version > SCHEMA_VERSION:
        raise VersionError(f"scenario schema_version {version} is newer than supported {SCHEMA_VERSION}")

    for section in ("rules", "terrain", "stats", "spawn"):
        if section not in raw:
            raise ConfigError(f"scenario is missing the [{section}] section")

    terrain = _parse_terrain(raw["terrain"])
    rules = raw["rules"]

    stats: dict[str, CoalitionStats] = {}
    for name in COALITIONS:
        if name not in raw["stats"]:
            raise ConfigError(f"stat table is missing coalition {name!r}")
        s = raw["stats"][name]
        stats[name] = CoalitionStats(
            health=float(s["health"]),
            speed=float(s["speed"]),
            attack_range=float(s["range"]),
            damage=float(s["damage"]),
            attacks_air=bool(s["attacks_air"]),
            air=bool(s["air"]),
        )
        if stats[name].health <= 0 or stats[name].speed < 0:
            raise ConfigError(f"coalition {name!r} has non-positive health or negative speed")

    spawns: list[SpawnEntry] = []
    for entry in raw["spawn"]:
        coalition = entry["coalition"]
        if coalition not in COALITIONS:
            raise ConfigError(f"spawn entry names unknown coalition {coalition!r}")
        for cell in entry["cells"]:
            x, y = int(cell[0]), int(cell[1])
            if not (0 <= x < terrain.width and 0 <= y < terrain.height):
                raise ConfigError(f"spawn cell ({x}, {y}) is out of bounds")
            if not stats[coalition].air:
                if not terrain.ground_passable[y, x]:
                    raise ConfigError(f"ground coalition {coalition!r} spawns on a wadi cell ({x}, {y})")
                if x == terrain.wadi_axis:
                    raise ConfigError(f"ground coalition {coalition!r} spawns on the wadi axis ({x}, {y})")
            spawns.append(SpawnEntry(coalition, (x, y)))

    present = {s.coalition for s in spawns}
    missing = [c for c in BLUE_COALITIONS if c not in present]
    if missing:
        raise ConfigError(f"scenario must field every Blue coalition; missing {missing}")
    n_blue = sum(1 for s in spawns if s.coalition in BLUE_COALITIONS)
    n_red = len(spawns) - n_blue
    if n_blue > 20 or n_red > 20:
        raise ConfigError("roster exceeds 20 units per side (fixed observation slots)")
    if n_red == 0:
        raise ConfigError("scenario fields no Red units")

    ticks_per_step = int(rules["ticks_per_step"])
    target_bins = int(rules["target_bins"])
    if ticks_per_step < 1 or target_bins < 2:
        raise ConfigError("ticks_per_step must be >= 1 and target_bins >= 2")

    canonical = json.dumps(_canonical_dict(raw), sort_keys=True, separators=(",", ":"))
    content_hash = hashlib.blake2b(canonical.encode(), digest_size=16).hexdigest()

    return Scenario(
        name=str(raw.get("name", "unnamed")),
        schema_version=version,
        terrain=terrain,
        stats=stats,
        spawns=tuple(spawns),
        ticks_per_step=ticks_per_step,
        max_steps=int(rules["max_steps"]),
        target_bins=target_bins,
        spawn_jitter=float(rules.get("spawn_jitter", 0.35)),
        red_leash=float(rules.get("red_leash", 5.0)),
        content_hash=content_hash,
    )


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return loads_scenario(f.read())


def default_scenario() -> Scenario:
    text = resources.files("wadirl.data").joinpath("default_scenario.toml").read_text("utf-8")
    return loads_scenario(text)
