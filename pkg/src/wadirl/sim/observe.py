"""Observation builders: battlefield image planes and the flat feature vector.

The vector keeps a fixed slot per potential unit (20 Blue + 20 Red) so its
length never changes within or across episodes; dead units read as all-zero
padding. Image planes are terrain one-hots plus per-coalition occupancy and
health, every entry normalized into [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..scenario import COALITIONS, SIDE_BLUE, Scenario
from .world import WorldState

MAX_UNITS_PER_SIDE = 20
N_COALITIONS = len(COALITIONS)
SLOT_FEATURES = N_COALITIONS + 4  # one-hot type, x, y, health, alive
N_GLOBALS = 4                     # step fraction, score, blue alive frac, red alive frac
VECTOR_DIM = 2 * MAX_UNITS_PER_SIDE * SLOT_FEATURES + N_GLOBALS

N_TERRAIN_CHANNELS = 4
IMAGE_CHANNELS = N_TERRAIN_CHANNELS + 2 * N_COALITIONS

SCORE_SCALE = 200.0


class ObsMode(str, Enum):
    IMAGE = "image"
    VECTOR = "vector"
    BOTH = "both"


@dataclass
class Observation:
    image: np.ndarray | None   # (IMAGE_CHANNELS, H, W) or None
    vector: np.ndarray | None  # (VECTOR_DIM,) or None


class _ObsStatic:
    """Per-scenario precomputed pieces: slot indices and terrain planes."""

    def __init__(self, scenario: Scenario):
        static_side = [scenario.side_of(s.coalition) for s in scenario.spawns]
        slots = []
        blue_seen = red_seen = 0
        for side in static_side:
            if side == SIDE_BLUE:
                slots.append(blue_seen)
                blue_seen += 1
            else:
                slots.append(MAX_UNITS_PER_SIDE + red_seen)
                red_seen += 1
        self.n_blue = blue_seen
        self.n_red = red_seen
        slot = np.asarray(slots)
        base = slot * SLOT_FEATURES
        coalition_idx = np.asarray(
            [COALITIONS.index(s.coalition) for s in scenario.spawns]
        )
        self.onehot_idx = base + coalition_idx
        self.x_idx = base + N_COALITIONS
        self.y_idx = base + N_COALITIONS + 1
        self.health_idx = base + N_COALITIONS + 2
        self.alive_idx = base + N_COALITIONS + 3
        self.slot_base = base

        t = scenario.terrain
        planes = np.zeros((IMAGE_CHANNELS, t.height, t.width))
        for ch in range(N_TERRAIN_CHANNELS):
            planes[ch] = t.cells == ch
        self.terrain_planes = planes
        self.roster_count = np.bincount(coalition_idx, minlength=N_COALITIONS).astype(float)


_OBS_CACHE: dict[str, _ObsStatic] = {}


def _obs_static(scenario: Scenario) -> _ObsStatic:
    cached = _OBS_CACHE.get(scenario.content_hash)
    if cached is None:
        cached = _ObsStatic(scenario)
        _OBS_CACHE[scenario.content_hash] = cached
    return cached


def _build_vector(state: WorldState, ob: _ObsStatic) -> np.ndarray:
    scn = state.scenario
    st = state.static
    vec = np.zeros(VECTOR_DIM)
    alive = state.alive.astype(float)
    vec[ob.onehot_idx] = alive
    vec[ob.x_idx] = np.where(state.alive, state.pos[:, 0] / scn.terrain.width, 0.0)
    vec[ob.y_idx] = np.where(state.alive, state.pos[:, 1] / scn.terrain.height, 0.0)
    vec[ob.health_idx] = np.where(state.alive, state.health / st.max_health, 0.0)
    vec[ob.alive_idx] = alive
    vec[-4] = state.steps / scn.max_steps
    vec[-3] = min(1.0, max(-1.0, state.score / SCORE_SCALE))
    vec[-2] = state.blue_alive() / ob.n_blue
    vec[-1] = state.red_alive() / ob.n_red
    return vec


def _build_image(state: WorldState, ob: _ObsStatic) -> np.ndarray:
    st = state.static
    img = ob.terrain_planes.copy()
    live = np.nonzero(state.alive)[0]
    if live.size:
        cx = state.pos[live, 0].astype(np.int64)
        cy = state.pos[live, 1].astype(np.int64)
        coal = st.coalition[live].astype(np.int64)
        weight = 1.0 / ob.roster_count[coal]
        np.add.at(img, (N_TERRAIN_CHANNELS + coal, cy, cx), weight)
        hw = weight * state.health[live] / st.max_health[live]
        np.add.at(img, (N_TERRAIN_CHANNELS + N_COALITIONS + coal, cy, cx), hw)
    return img


def observe(state: WorldState, mode: ObsMode = ObsMode.VECTOR) -> Observation:
    """Deterministic observation of the given state."""
    ob = _obs_static(state.scenario)
    image = _build_image(state, ob) if mode in (ObsMode.IMAGE, ObsMode.BOTH) else None
    vector = _build_vector(state, ob) if mode in (ObsMode.VECTOR, ObsMode.BOTH) else None
    return Observation(image=image, vector=vector)
