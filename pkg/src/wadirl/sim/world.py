"""Deterministic combat microworld: Blue crosses the wadi, Red defends the city.

One decision step advances the world a fixed number of simulator ticks. Blue
coalitions hold persistent orders that commands replace; the Red side runs a
scripted bot. All dynamics are pure float64 arithmetic in a fixed order, so
two states with equal fields produce bit-identical successors.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, UsageError
from ..rng import next_float, seed_state
from . import engine
from ..scenario import (
    BLUE_COALITIONS,
    COALITIONS,
    SIDE_BLUE,
    SIDE_RED,
    Scenario,
)

ACTION_NOOP = 0
ACTION_MOVE = 1
ACTION_ATTACK = 2
N_ACTIONS = 3
N_BLUE_COALITIONS = len(BLUE_COALITIONS)

ORDER_HOLD = 0
ORDER_MOVE = 1
ORDER_ATTACK = 2

EVENT_RED_DESTROYED = 0
EVENT_BLUE_DESTROYED = 1
EVENT_CROSS_EAST = 2
EVENT_CROSS_WEST = 3

EVENT_DELTA = {
    EVENT_RED_DESTROYED: 10,
    EVENT_BLUE_DESTROYED: -10,
    EVENT_CROSS_EAST: 10,
    EVENT_CROSS_WEST: -10,
}

EVENT_NAMES = {
    EVENT_RED_DESTROYED: "red_destroyed",
    EVENT_BLUE_DESTROYED: "blue_destroyed",
    EVENT_CROSS_EAST: "cross_east",
    EVENT_CROSS_WEST: "cross_west",
}

_EDGE_MARGIN = 1e-3


@dataclass(frozen=True)
class Command:
    """One order to one Blue coalition, targeting a C x C map region."""

    coalition: int
    action: int
    x_bin: int
    y_bin: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.coalition, self.action, self.x_bin, self.y_bin)


NOOP = Command(0, ACTION_NOOP, 0, 0)


@dataclass
class Unit:
    """Per-unit view materialized from the state arrays (not the hot path)."""

    id: int
    side: int
    coalition: str
    pos: tuple[float, float]
    health: float
    max_health: float
    speed: float
    attack_range: float
    damage: float
    attacks_air: bool
    air: bool
    alive: bool
    distance_travelled: float
    crossed_wadi: bool


class _Static:
    """Immutable per-scenario arrays shared by every world reset from it."""

    def __init__(self, scenario: Scenario):
        n = len(scenario.spawns)
        self.n = n
        self.coalition = np.zeros(n, dtype=np.int8)
        self.side = np.zeros(n, dtype=np.int8)
        self.max_health = np.zeros(n)
        self.speed = np.zeros(n)
        self.range = np.zeros(n)
        self.damage = np.zeros(n)
        self.attacks_air = np.zeros(n, dtype=bool)
        self.air = np.zeros(n, dtype=bool)
        self.spawn_cell = np.zeros((n, 2))
        for i, entry in enumerate(scenario.spawns):
            stats = scenario.stats[entry.coalition]
            self.coalition[i] = COALITIONS.index(entry.coalition)
            self.side[i] = scenario.side_of(entry.coalition)
            self.max_health[i] = stats.health
            self.speed[i] = stats.speed
            self.range[i] = stats.attack_range
            self.damage[i] = stats.damage
            self.attacks_air[i] = stats.attacks_air
            self.air[i] = stats.air
            self.spawn_cell[i] = entry.cell
        self.blue_idx = np.nonzero(self.side == SIDE_BLUE)[0]
        self.red_idx = np.nonzero(self.side == SIDE_RED)[0]
        self.blue_mask = self.side == SIDE_BLUE
        self.red_mask = self.side == SIDE_RED
        self.members = [
            np.nonzero(self.coalition == c)[0] for c in range(N_BLUE_COALITIONS)
        ]
        for arr in vars(self).values():
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)


_STATIC_CACHE: dict[str, _Static] = {}


def _static_for(scenario: Scenario) -> _Static:
    cached = _STATIC_CACHE.get(scenario.content_hash)
    if cached is None:
        cached = _Static(scenario)
        _STATIC_CACHE[scenario.content_hash] = cached
    return cached


class WorldState:
    """Complete simulator state. Owned by exactly one episode runner."""

    __slots__ = (
        "scenario", "static", "pos", "health", "alive", "dist", "side_flag",
        "order_kind", "order_target", "order_bin", "red_anchor",
        "tick", "steps", "score", "rng_state", "event_log", "terminal",
    )

    def __init__(self, scenario: Scenario, static: _Static):
        self.scenario = scenario
        self.static = static

    def copy(self) -> "WorldState":
        s = WorldState(self.scenario, self.static)
        s.pos = self.pos.copy()
        s.health = self.health.copy()
        s.alive = self.alive.copy()
        s.dist = self.dist.copy()
        s.side_flag = self.side_flag.copy()
        s.order_kind = self.order_kind.copy()
        s.order_target = self.order_target.copy()
        s.order_bin = self.order_bin.copy()
        s.red_anchor = self.red_anchor.copy()
        s.tick = self.tick
        s.steps = self.steps
        s.score = self.score
        s.rng_state = self.rng_state
        s.event_log = list(self.event_log)
        s.terminal = self.terminal
        return s

    # -- bookkeeping views -------------------------------------------------

    def clear_orders(self) -> None:
        """Reset every coalition to hold. Used when an agent takes over a
        replayed world so inherited orders cannot keep playing the battle."""
        self.order_kind[:] = ORDER_HOLD
        self.order_target[:] = 0.0
        self.order_bin[:] = 0

    def blue_alive(self) -> int:
        return int(np.count_nonzero(self.alive[self.static.blue_idx]))

    def red_alive(self) -> int:
        return int(np.count_nonzero(self.alive[self.static.red_idx]))

    def casualties(self, side: int) -> int:
        idx = self.static.blue_idx if side == SIDE_BLUE else self.static.red_idx
        return int(np.count_nonzero(~self.alive[idx]))

    def units(self) -> list[Unit]:
        st = self.static
        return [
            Unit(
                id=i,
                side=int(st.side[i]),
                coalition=COALITIONS[st.coalition[i]],
                pos=(float(self.pos[i, 0]), float(self.pos[i, 1])),
                health=float(self.health[i]),
                max_health=float(st.max_health[i]),
                speed=float(st.speed[i]),
                attack_range=float(st.range[i]),
                damage=float(st.damage[i]),
                attacks_air=bool(st.attacks_air[i]),
                air=bool(st.air[i]),
                alive=bool(self.alive[i]),
                distance_travelled=float(self.dist[i]),
                crossed_wadi=bool(self.side_flag[i] == 1 and st.side[i] == SIDE_BLUE),
            )
            for i in range(st.n)
        ]

    # -- identity ----------------------------------------------------------

    def digest(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        h.update(self.scenario.content_hash.encode())
        h.update(struct.pack("<qqqQq", self.tick, self.steps, self.score,
                             self.rng_state, int(self.terminal)))
        h.update(self.pos.tobytes())
        h.update(self.health.tobytes())
        h.update(self.alive.tobytes())
        h.update(self.dist.tobytes())
        h.update(self.side_flag.tobytes())
        h.update(self.order_kind.tobytes())
        h.update(self.order_target.tobytes())
        h.update(self.order_bin.tobytes())
        h.update(self.red_anchor.tobytes())
        for tick, kind, uid in self.event_log:
            h.update(struct.pack("<qhh", tick, kind, uid))
        return h.hexdigest()

    def to_json(self) -> dict:
        return {
            "scenario_hash": self.scenario.content_hash,
            "tick": self.tick,
            "steps": self.steps,
            "score": self.score,
            "rng_state": self.rng_state,
            "terminal": self.terminal,
            "pos": self.pos.tolist(),
            "health": self.health.tolist(),
            "alive": self.alive.tolist(),
            "dist": self.dist.tolist(),
            "side_flag": self.side_flag.tolist(),
            "order_kind": self.order_kind.tolist(),
            "order_target": self.order_target.tolist(),
            "order_bin": self.order_bin.tolist(),
            "red_anchor": self.red_anchor.tolist(),
            "event_log": [list(e) for e in self.event_log],
        }

    @staticmethod
    def from_json(data: dict, scenario: Scenario) -> "WorldState":
        if data["scenario_hash"] != scenario.content_hash:
            raise UsageError("serialized state belongs to a different scenario")
        s = WorldState(scenario, _static_for(scenario))
        s.pos = np.asarray(data["pos"], dtype=np.float64)
        s.health = np.asarray(data["health"], dtype=np.float64)
        s.alive = np.asarray(data["alive"], dtype=bool)
        s.dist = np.asarray(data["dist"], dtype=np.float64)
        s.side_flag = np.asarray(data["side_flag"], dtype=np.int8)
        s.order_kind = np.asarray(data["order_kind"], dtype=np.int8)
        s.order_target = np.asarray(data["order_target"], dtype=np.float64)
        s.order_bin = np.asarray(data["order_bin"], dtype=np.int8)
        s.red_anchor = np.asarray(data["red_anchor"], dtype=np.float64)
        s.tick = int(data["tick"])
        s.steps = int(data["steps"])
        s.score = int(data["score"])
        s.rng_state = int(data["rng_state"])
        s.event_log = [tuple(e) for e in data["event_log"]]
        s.terminal = bool(data["terminal"])
        return s


def reset(scenario: Scenario, seed: int) -> WorldState:
    """Build the canonical initial battle state for (scenario, seed)."""
    static = _static_for(scenario)
    state = WorldState(scenario, static)
    n = static.n
    rng = seed_state(seed)
    jitter = scenario.spawn_jitter
    pos = np.empty((n, 2))
    for i in range(n):
        jx, rng = next_float(rng)
        jy, rng = next_float(rng)
        pos[i, 0] = static.spawn_cell[i, 0] + 0.5 + (2.0 * jx - 1.0) * jitter
        pos[i, 1] = static.spawn_cell[i, 1] + 0.5 + (2.0 * jy - 1.0) * jitter
    state.pos = pos
    state.health = static.max_health.copy()
    state.alive = np.ones(n, dtype=bool)
    state.dist = np.zeros(n)
    axis = scenario.terrain.wadi_axis
    state.side_flag = (pos[:, 0] >= axis + 0.5).astype(np.int8)
    state.order_kind = np.zeros(N_BLUE_COALITIONS, dtype=np.int8)
    state.order_target = np.zeros((N_BLUE_COALITIONS, 2))
    state.order_bin = np.zeros((N_BLUE_COALITIONS, 2), dtype=np.int8)
    state.red_anchor = pos.copy()
    state.tick = 0
    state.steps = 0
    state.score = 0
    state.rng_state = rng
    state.event_log = []
    state.terminal = False
    return state


def validate_command(scenario: Scenario, cmd: Command) -> None:
    c = scenario.target_bins
    if not 0 <= cmd.coalition < N_BLUE_COALITIONS:
        raise UsageError(f"coalition index {cmd.coalition} out of range")
    if cmd.action not in (ACTION_NOOP, ACTION_MOVE, ACTION_ATTACK):
        raise UsageError(f"unknown action id {cmd.action}")
    if not (0 <= cmd.x_bin < c and 0 <= cmd.y_bin < c):
        raise UsageError(f"target bins ({cmd.x_bin}, {cmd.y_bin}) outside [0, {c})")


def _emit(state: WorldState, kind: int, uid: int) -> int:
    delta = EVENT_DELTA[kind]
    state.score += delta
    state.event_log.append((state.tick, kind, uid))
    return delta


def _tick_compiled(state: WorldState) -> None:
    """Run one tick through the numba kernel (bit-identical to _tick_numpy)."""
    st = state.static
    scn = state.scenario
    t = scn.terrain
    n = st.n
    ev_kind = np.empty(2 * n, dtype=np.int64)
    ev_uid = np.empty(2 * n, dtype=np.int64)
    n_ev = engine._tick_kernel(
        state.pos, state.health, state.alive, state.dist, state.side_flag,
        state.order_kind, state.order_bin, state.order_target, state.red_anchor,
        st.side, st.coalition, st.speed, st.range, st.damage, st.attacks_air, st.air,
        t.ground_passable, float(t.wadi_axis),
        t.width / scn.target_bins, t.height / scn.target_bins,
        scn.red_leash, float(t.width), float(t.height),
        ev_kind, ev_uid,
    )
    for k in range(n_ev):
        _emit(state, int(ev_kind[k]), int(ev_uid[k]))
    state.tick += 1


def _tick(state: WorldState) -> None:
    if engine.HAVE_NUMBA:
        _tick_compiled(state)
    else:
        _tick_numpy(state)


def _tick_numpy(state: WorldState) -> None:
    st = state.static
    scn = state.scenario
    terrain = scn.terrain
    n = st.n
    pos = state.pos
    alive = state.alive

    # Pairwise distances with targetability baked in. can_hit[i, j] is True
    # when a live i may shoot a live enemy j under the air rules.
    diff = pos[:, None, :] - pos[None, :, :]
    dmat = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    can_hit = (st.side[:, None] != st.side[None, :]) & (st.attacks_air[:, None] | ~st.air[None, :])
    can_hit &= alive[:, None] & alive[None, :]
    dshoot = np.where(can_hit, dmat, np.inf)

    rows = np.arange(n)
    j_near = np.argmin(dshoot, axis=1)
    d_near = dshoot[rows, j_near]

    shooter_target = np.full(n, -1, dtype=np.int64)
    move_target = np.zeros((n, 2))
    moving = np.zeros(n, dtype=bool)

    # Blue units act on their coalition's persistent order; hold = defensive
    # fire only, move = travel without shooting, attack = engage the nearest
    # targetable enemy inside the ordered region, walking in if outranged.
    kind_of = np.full(n, -1, dtype=np.int8)
    blue_coal = st.coalition[st.blue_mask]
    kind_of[st.blue_mask] = state.order_kind[blue_coal]
    kind_of[~alive] = -1
    order_center = np.zeros((n, 2))
    order_center[st.blue_mask] = state.order_target[blue_coal]

    hold_shoot = (kind_of == ORDER_HOLD) & (d_near <= st.range)
    shooter_target[hold_shoot] = j_near[hold_shoot]

    move_mask = kind_of == ORDER_MOVE
    move_target[move_mask] = order_center[move_mask]
    moving[move_mask] = True

    attack_mask = kind_of == ORDER_ATTACK
    if attack_mask.any():
        bins = state.order_bin.astype(np.float64)
        cw = terrain.width / scn.target_bins
        ch = terrain.height / scn.target_bins
        x0 = np.zeros(n)
        y0 = np.zeros(n)
        x0[st.blue_mask] = bins[blue_coal, 0] * cw
        y0[st.blue_mask] = bins[blue_coal, 1] * ch
        in_rect = (
            (pos[None, :, 0] >= x0[:, None]) & (pos[None, :, 0] < x0[:, None] + cw)
            & (pos[None, :, 1] >= y0[:, None]) & (pos[None, :, 1] < y0[:, None] + ch)
        )
        datt = np.where(in_rect, dshoot, np.inf)
        j_rect = np.argmin(datt, axis=1)
        d_rect = datt[rows, j_rect]
        att_shoot = attack_mask & (d_rect <= st.range)
        att_chase = attack_mask & ~att_shoot & np.isfinite(d_rect)
        att_center = attack_mask & ~att_shoot & ~np.isfinite(d_rect)
        shooter_target[att_shoot] = j_rect[att_shoot]
        move_target[att_chase] = pos[j_rect[att_chase]]
        move_target[att_center] = order_center[att_center]
        moving[att_chase | att_center] = True

    # Red bot: shoot the nearest blue in range; pursue targets that stray
    # inside the leash around the unit's anchor; otherwise return home.
    red_live = alive & st.red_mask
    red_shoot = red_live & (d_near <= st.range)
    shooter_target[red_shoot] = j_near[red_shoot]
    red_idle = red_live & ~red_shoot
    if red_idle.any():
        leash = scn.red_leash
        near_pos = pos[j_near]
        anchor_off = near_pos - state.red_anchor
        in_leash = np.einsum("ij,ij->i", anchor_off, anchor_off) <= leash * leash
        pursue = red_idle & np.isfinite(d_near) & in_leash
        move_target[pursue] = near_pos[pursue]
        home_off = pos - state.red_anchor
        displaced = (np.abs(home_off[:, 0]) + np.abs(home_off[:, 1])) > 1e-9
        go_home = red_idle & ~pursue & displaced
        move_target[go_home] = state.red_anchor[go_home]
        moving[pursue | go_home] = True

    # Movement (straight line, terrain-blocked for ground units).
    movers = np.nonzero(moving)[0]
    if movers.size:
        old = pos[movers]
        delta = move_target[movers] - old
        dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        step_len = np.minimum(st.speed[movers], dist)
        safe = np.where(dist > 0.0, dist, 1.0)
        new = old + delta * (step_len / safe)[:, None]
        np.clip(new[:, 0], _EDGE_MARGIN, terrain.width - _EDGE_MARGIN, out=new[:, 0])
        np.clip(new[:, 1], _EDGE_MARGIN, terrain.height - _EDGE_MARGIN, out=new[:, 1])
        cx = new[:, 0].astype(np.int64)
        cy = new[:, 1].astype(np.int64)
        blocked = ~terrain.ground_passable[cy, cx] & ~st.air[movers]
        new[blocked] = old[blocked]
        moved = new - old
        state.dist[movers] += np.sqrt(np.einsum("ij,ij->i", moved, moved))
        pos[movers] = new

    # Wadi-crossing ledger events (Blue only; Red flags still tracked).
    axis = terrain.wadi_axis
    newly_east = alive & (state.side_flag == 0) & (pos[:, 0] >= axis + 1.0)
    newly_west = alive & (state.side_flag == 1) & (pos[:, 0] < axis)
    if newly_east.any() or newly_west.any():
        for i in np.nonzero(newly_east | newly_west)[0]:
            if newly_east[i]:
                state.side_flag[i] = 1
                if st.side[i] == SIDE_BLUE:
                    _emit(state, EVENT_CROSS_EAST, int(i))
            else:
                state.side_flag[i] = 0
                if st.side[i] == SIDE_BLUE:
                    _emit(state, EVENT_CROSS_WEST, int(i))

    # Simultaneous damage, then deaths.
    shooters = np.nonzero(shooter_target >= 0)[0]
    if shooters.size:
        dmg = np.zeros(n)
        np.add.at(dmg, shooter_target[shooters], st.damage[shooters])
        state.health -= dmg
        dead = alive & (state.health <= 0.0)
        if dead.any():
            state.health[dead] = 0.0
            alive[dead] = False
            for i in np.nonzero(dead)[0]:
                kind = EVENT_BLUE_DESTROYED if st.side[i] == SIDE_BLUE else EVENT_RED_DESTROYED
                _emit(state, kind, int(i))

    state.tick += 1


def step(state: WorldState, cmd: Command) -> tuple[WorldState, int, bool]:
    """Advance one decision step: apply cmd, run the tick loop, settle events.

    Returns (state, reward, done). The passed state is mutated in place.
    """
    if state.terminal:
        raise UsageError("step() called on a terminal state")
    validate_command(state.scenario, cmd)

    if cmd.action == ACTION_MOVE:
        state.order_kind[cmd.coalition] = ORDER_MOVE
        state.order_target[cmd.coalition] = state.scenario.ninth_center(cmd.x_bin, cmd.y_bin)
        state.order_bin[cmd.coalition] = (cmd.x_bin, cmd.y_bin)
    elif cmd.action == ACTION_ATTACK:
        state.order_kind[cmd.coalition] = ORDER_ATTACK
        state.order_target[cmd.coalition] = state.scenario.ninth_center(cmd.x_bin, cmd.y_bin)
        state.order_bin[cmd.coalition] = (cmd.x_bin, cmd.y_bin)

    score_before = state.score
    for _ in range(state.scenario.ticks_per_step):
        _tick(state)
        if state.blue_alive() == 0 or state.red_alive() == 0:
            break
    state.steps += 1

    done = (
        state.blue_alive() == 0
        or state.red_alive() == 0
        or state.steps >= state.scenario.max_steps
    )
    if done:
        state.terminal = True
    return state, state.score - score_before, done
