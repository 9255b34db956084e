"""Post-training evaluation: greedy rollouts, per-coalition aggregates, tables.

Outputs mirror the standard comparison layout: average casualties per force,
average distance travelled per Blue coalition, and average remaining health
percentage per Blue coalition, with a human-demonstration column computed by
deterministic replay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .policy import ActionDistribution, ObsBatch, PolicyParams, forward
from .policy.distributions import command_of
from .scenario import BLUE_COALITIONS, DISPLAY_NAMES, SIDE_BLUE, SIDE_RED, Scenario
from .sim import WorldState, observe, reset, step
from .trajectory import Demonstration, replay_prefix


@dataclass
class EvalReport:
    rollouts: int
    mean_reward: float
    median_reward: float
    blue_casualties: float
    red_casualties: float
    distance: dict[str, float]   # mean distance travelled per Blue coalition
    health_pct: dict[str, float]  # mean remaining health percent per Blue coalition
    win_rate: float

    def to_json(self) -> dict:
        return {
            "rollouts": self.rollouts,
            "mean_reward": self.mean_reward,
            "median_reward": self.median_reward,
            "blue_casualties": self.blue_casualties,
            "red_casualties": self.red_casualties,
            "distance": self.distance,
            "health_pct": self.health_pct,
            "win_rate": self.win_rate,
        }


def run_greedy_episode(params: PolicyParams, scenario: Scenario, seed: int) -> tuple[WorldState, float]:
    """One full episode with per-head argmax action selection."""
    mode = params.spec.obs_mode
    state = reset(scenario, seed)
    total = 0.0
    done = False
    while not done:
        obs = observe(state, mode)
        batch = ObsBatch(
            images=None if obs.image is None else obs.image[None],
            vectors=None if obs.vector is None else obs.vector[None],
        )
        dist = ActionDistribution.from_logits(forward(params, batch).head_logits)
        idx = np.asarray([int(p[0].argmax()) for p in dist.probs])
        state, r, done = step(state, command_of(idx))
        total += r
    return state, total


def _aggregate(final_states: list[WorldState], rewards: list[float]) -> EvalReport:
    scenario = final_states[0].scenario
    blue_cas, red_cas, wins = [], [], []
    distance = {c: [] for c in BLUE_COALITIONS}
    health = {c: [] for c in BLUE_COALITIONS}
    for s in final_states:
        blue_cas.append(s.casualties(SIDE_BLUE))
        red_cas.append(s.casualties(SIDE_RED))
        wins.append(s.red_alive() == 0 and s.blue_alive() > 0)
        units = s.units()
        for c in BLUE_COALITIONS:
            members = [u for u in units if u.coalition == c]
            distance[c].append(float(np.mean([u.distance_travelled for u in members])))
            # dead units count as 0% so wiped coalitions read near zero
            health[c].append(float(np.mean([100.0 * u.health / u.max_health for u in members])))
    return EvalReport(
        rollouts=len(final_states),
        mean_reward=float(np.mean(rewards)),
        median_reward=float(np.median(rewards)),
        blue_casualties=float(np.mean(blue_cas)),
        red_casualties=float(np.mean(red_cas)),
        distance={c: float(np.mean(v)) for c, v in distance.items()},
        health_pct={c: float(np.mean(v)) for c, v in health.items()},
        win_rate=float(np.mean(wins)),
    )


def evaluate(params: PolicyParams, scenario: Scenario, n: int = 100, seed: int = 0) -> EvalReport:
    """Run n greedy episodes from the scenario start and aggregate unit stats."""
    if n < 1:
        raise UsageError("evaluate requires n >= 1 rollouts")
    states, rewards = [], []
    for i in range(n):
        state, total = run_greedy_episode(params, scenario, seed + i)
        states.append(state)
        rewards.append(total)
    return _aggregate(states, rewards)


def demo_report(demo: Demonstration, scenario: Scenario) -> EvalReport:
    """The human column: replay the demonstration and aggregate the same stats."""
    final = replay_prefix(demo, 1.0, scenario)
    return _aggregate([final], [float(demo.total_score)])


ROW_BLUE_CASUALTIES = "Blue Force Casualties"
ROW_RED_CASUALTIES = "Red Force Casualties"


def comparison_sections(columns: list[tuple[str, EvalReport]]) -> dict:
    """Structured three-section comparison keyed [section][row][column]."""
    casualties: dict[str, dict[str, float]] = {ROW_BLUE_CASUALTIES: {}, ROW_RED_CASUALTIES: {}}
    distance: dict[str, dict[str, float]] = {DISPLAY_NAMES[c]: {} for c in BLUE_COALITIONS}
    health: dict[str, dict[str, float]] = {DISPLAY_NAMES[c]: {} for c in BLUE_COALITIONS}
    for label, report in columns:
        casualties[ROW_BLUE_CASUALTIES][label] = report.blue_casualties
        casualties[ROW_RED_CASUALTIES][label] = report.red_casualties
        for c in BLUE_COALITIONS:
            distance[DISPLAY_NAMES[c]][label] = report.distance[c]
            health[DISPLAY_NAMES[c]][label] = report.health_pct[c]
    return {
        "Average casualties for each force": casualties,
        "Average distance travelled for each coalition": distance,
        "Average health percentage remaining for each coalition": health,
    }


def compare(
    reports: list[tuple[str, EvalReport]],
    demo: Demonstration | None = None,
    scenario: Scenario | None = None,
) -> tuple[str, dict]:
    """Render the comparison table; the human column replays the demo exactly."""
    if not reports and demo is None:
        raise UsageError("compare needs at least one report or a demonstration")
    columns: list[tuple[str, EvalReport]] = []
    if demo is not None:
        if scenario is None:
            raise UsageError("replaying the demonstration column requires the scenario")
        columns.append(("Human Demonstration", demo_report(demo, scenario)))
    columns.extend(reports)

    sections = comparison_sections(columns)
    labels = [label for label, _ in columns]
    row_width = max(
        len(row) for section in sections.values() for row in section
    )
    col_width = max(12, max(len(label) for label in labels) + 2)

    lines = []
    for title, rows in sections.items():
        lines.append(title)
        header = " " * row_width + "".join(label.rjust(col_width) for label in labels)
        lines.append(header)
        for row, cells in rows.items():
            line = row.ljust(row_width)
            for label in labels:
                line += f"{cells[label]:.2f}".rjust(col_width)
            lines.append(line)
        lines.append("")
    return "\n".join(lines), sections


def save_report(report: EvalReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
