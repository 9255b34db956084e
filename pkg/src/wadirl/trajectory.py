"""Demonstration recording, persistence, and deterministic prefix replay.

A demonstration stores the command sequence of one finished episode plus a
per-step state digest chain. Replay reconstructs any prefix state exactly;
the digest chain catches any divergence between the recorded episode and the
world it is replayed against.

File format (line-delimited JSON, one record per line):
  header  {"schema_version", "scenario_hash", "seed", "length", "total_score"}
  step i  {"index", "coalition", "action", "x_bin", "y_bin", "reward", "digest"}
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

from .errors import IntegrityError, RecordingError, UsageError, VersionError
from .scenario import Scenario
from .sim import Command, WorldState, reset, step

DEMO_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DemoStep:
    index: int
    command: Command
    reward: int
    digest: str


@dataclass(frozen=True)
class Demonstration:
    scenario_hash: str
    seed: int
    steps: tuple[DemoStep, ...]
    total_score: int

    @property
    def length(self) -> int:
        return len(self.steps)

    def suffix_score(self, fraction: float) -> int:
        """Reward accrued from floor(fraction * length) to the end."""
        if not 0.0 <= fraction <= 1.0:
            raise UsageError(f"fraction {fraction} outside [0, 1]")
        start = math.floor(fraction * self.length)
        return sum(s.reward for s in self.steps[start:])


class Recorder:
    """Accumulates one episode's (command, reward, digest) stream."""

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.seed = seed
        self._steps: list[DemoStep] = []
        self._done = False

    def on_step(self, cmd: Command, reward: int, state: WorldState, done: bool) -> None:
        if self._done:
            raise RecordingError("episode already ended")
        self._steps.append(DemoStep(len(self._steps), cmd, int(reward), state.digest()))
        self._done = done

    def finalize(self) -> Demonstration:
        if not self._steps:
            raise RecordingError("cannot record an empty episode")
        if not self._done:
            raise RecordingError("episode stream truncated before termination")
        return Demonstration(
            scenario_hash=self.scenario.content_hash,
            seed=self.seed,
            steps=tuple(self._steps),
            total_score=sum(s.reward for s in self._steps),
        )


def record_episode(scenario: Scenario, seed: int, policy, max_steps: int | None = None) -> Demonstration:
    """Run one full episode with `policy(state, step_index) -> Command` and record it.

    The episode must reach termination (annihilation or the scenario cap);
    `max_steps` only guards against runaway policies and raises if exceeded.
    """
    rec = Recorder(scenario, seed)
    state = reset(scenario, seed)
    i = 0
    done = False
    while not done:
        if max_steps is not None and i >= max_steps:
            raise RecordingError(f"episode exceeded {max_steps} steps without terminating")
        cmd = policy(state, i)
        state, reward, done = step(state, cmd)
        rec.on_step(cmd, reward, state, done)
        i += 1
    return rec.finalize()


def save(demo: Demonstration, path: str) -> None:
    header = {
        "schema_version": DEMO_SCHEMA_VERSION,
        "scenario_hash": demo.scenario_hash,
        "seed": demo.seed,
        "length": demo.length,
        "total_score": demo.total_score,
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for s in demo.steps:
            f.write(json.dumps({
                "index": s.index,
                "coalition": s.command.coalition,
                "action": s.command.action,
                "x_bin": s.command.x_bin,
                "y_bin": s.command.y_bin,
                "reward": s.reward,
                "digest": s.digest,
            }, sort_keys=True) + "\n")
    os.replace(tmp, path)


def load(path: str, scenario: Scenario | None = None) -> Demonstration:
    """Read a demonstration and check its structural invariants.

    Passing the scenario additionally verifies the full digest chain by
    re-simulation (see `verify`).
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise IntegrityError(f"{path}: empty demonstration file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise IntegrityError(f"{path}: unreadable header: {e}") from e
    version = header.get("schema_version")
    if not isinstance(version, int):
        raise IntegrityError(f"{path}: header missing schema_version")
    if version > DEMO_SCHEMA_VERSION:
        raise VersionError(
            f"{path}: schema_version {version} is newer than supported {DEMO_SCHEMA_VERSION}"
        )

    steps: list[DemoStep] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            command = Command(rec["coalition"], rec["action"], rec["x_bin"], rec["y_bin"])
            ds = DemoStep(int(rec["index"]), command, int(rec["reward"]), str(rec["digest"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise IntegrityError(f"{path}:{lineno}: corrupt step record: {e}") from e
        if ds.index != len(steps):
            raise IntegrityError(f"{path}:{lineno}: step index {ds.index} out of order")
        steps.append(ds)

    demo = Demonstration(
        scenario_hash=str(header["scenario_hash"]),
        seed=int(header["seed"]),
        steps=tuple(steps),
        total_score=int(header["total_score"]),
    )
    if demo.length != int(header["length"]):
        raise IntegrityError(f"{path}: header claims {header['length']} steps, found {demo.length}")
    if demo.total_score != sum(s.reward for s in demo.steps):
        raise IntegrityError(f"{path}: total_score does not match the step rewards")
    if scenario is not None:
        verify(demo, scenario)
    return demo


def verify(demo: Demonstration, scenario: Scenario) -> None:
    """Re-simulate the whole demonstration and compare every digest."""
    if demo.scenario_hash != scenario.content_hash:
        raise IntegrityError("demonstration was recorded against a different scenario")
    state = reset(scenario, demo.seed)
    for s in demo.steps:
        state, reward, done = step(state, s.command)
        if state.digest() != s.digest:
            raise IntegrityError(f"digest mismatch at step {s.index}")
        if reward != s.reward:
            raise IntegrityError(f"reward mismatch at step {s.index}")
    if not done:
        raise IntegrityError("recorded episode does not reach termination on replay")


def prefix_length(demo: Demonstration, fraction: float) -> int:
    if not 0.0 <= fraction <= 1.0:
        raise UsageError(f"fraction {fraction} outside [0, 1]")
    return math.floor(fraction * demo.length)


def replay_prefix(demo: Demonstration, fraction: float, scenario: Scenario) -> WorldState:
    """Reset and replay the first floor(fraction * length) recorded commands."""
    if demo.scenario_hash != scenario.content_hash:
        raise IntegrityError("demonstration was recorded against a different scenario")
    k = prefix_length(demo, fraction)
    state = reset(scenario, demo.seed)
    for s in demo.steps[:k]:
        state, _, _ = step(state, s.command)
    if k > 0 and state.digest() != demo.steps[k - 1].digest:
        raise IntegrityError(f"replay diverged from the recorded digest at step {k - 1}")
    return state


class PrefixCache:
    """Snapshots of every prefix state of one demonstration.

    Replays the demo once, keeping a copy after each command, so curriculum
    episode starts are O(state copy) instead of O(prefix re-simulation).
    Verifies the digest chain while building.
    """

    def __init__(self, demo: Demonstration, scenario: Scenario):
        self.demo = demo
        self._states: list[WorldState] = []
        state = reset(scenario, demo.seed)
        self._states.append(state.copy())
        for s in demo.steps:
            state, _, _ = step(state, s.command)
            if state.digest() != s.digest:
                raise IntegrityError(f"digest mismatch at step {s.index}")
            self._states.append(state.copy())

    def state_at(self, fraction: float) -> WorldState:
        return self._states[prefix_length(self.demo, fraction)].copy()

    def playable_state_at(self, fraction: float) -> WorldState:
        """Like state_at, but a full prefix hands over one command before the
        end: our demos record through termination, so the exact final state
        has no battle left to play."""
        k = min(prefix_length(self.demo, fraction), self.demo.length - 1)
        return self._states[k].copy()
