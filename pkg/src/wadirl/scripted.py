"""Scripted reference commander producing the built-in demonstration.

Plays a deliberate, human-paced assault: mass at the bridge and clear the
picket, push into the city, pull back to the bridge once the defense is
nearly broken, and deliver the finishing strike on a fixed timetable. The
pacing constants are calibrated so the default scenario at the default seed
terminates at exactly 120 decision steps.
"""

from __future__ import annotations

from .scenario import Scenario, default_scenario
from .sim import ACTION_ATTACK, ACTION_MOVE, Command, NOOP, WorldState
from .trajectory import Demonstration, record_episode

DEFAULT_DEMO_SEED = 7

# coalition indices
AVIATION, MECH, MORTARS, SCOUTS, TANKS = range(5)

BRIDGE_BIN = (1, 1)
CITY_BIN = (2, 1)

# step at which the finishing strike is launched (calibrated)
STRIKE_STEP = 114


class ScriptedCommander:
    """`policy(state, i) -> Command` for `record_episode`."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._queue: list[Command] = [
            Command(TANKS, ACTION_ATTACK, *BRIDGE_BIN),
            Command(MECH, ACTION_ATTACK, *BRIDGE_BIN),
            Command(SCOUTS, ACTION_ATTACK, *BRIDGE_BIN),
            Command(MORTARS, ACTION_MOVE, *BRIDGE_BIN),
        ]
        self._phase = "bridge"

    def _push_phase(self, name: str) -> None:
        if name == "assault":
            self._queue = [
                Command(TANKS, ACTION_ATTACK, *CITY_BIN),
                Command(MECH, ACTION_ATTACK, *CITY_BIN),
                Command(AVIATION, ACTION_ATTACK, *CITY_BIN),
                Command(MORTARS, ACTION_ATTACK, *CITY_BIN),
                Command(SCOUTS, ACTION_ATTACK, *CITY_BIN),
            ]
        elif name == "regroup":
            self._queue = [
                Command(c, ACTION_MOVE, *BRIDGE_BIN) for c in range(5)
            ]
        elif name == "strike":
            self._queue = [
                Command(AVIATION, ACTION_ATTACK, *CITY_BIN),
                Command(TANKS, ACTION_ATTACK, *CITY_BIN),
                Command(MECH, ACTION_ATTACK, *CITY_BIN),
                Command(SCOUTS, ACTION_ATTACK, *CITY_BIN),
                Command(MORTARS, ACTION_ATTACK, *CITY_BIN),
            ]
        self._phase = name

    def __call__(self, state: WorldState, i: int) -> Command:
        red_alive = state.red_alive()
        if self._phase == "bridge" and red_alive <= 4:
            self._push_phase("assault")
        elif self._phase == "assault" and red_alive <= 1:
            self._push_phase("regroup")
        elif self._phase == "regroup" and not self._queue and i >= STRIKE_STEP:
            self._push_phase("strike")
        if self._queue:
            return self._queue.pop(0)
        return NOOP


def make_reference_demo(scenario: Scenario | None = None, seed: int = DEFAULT_DEMO_SEED) -> Demonstration:
    """Record the scripted reference demonstration (120 steps on the defaults)."""
    if scenario is None:
        scenario = default_scenario()
    return record_episode(scenario, seed, ScriptedCommander(scenario), max_steps=scenario.max_steps + 1)
