"""Reverse-curriculum scheduler over demonstration start fractions.

Episode start points are drawn from a Gaussian over the demo fraction,
clipped to [0, 1]. Whenever the agent finishes enough episodes scoring
comparably to the human over the same remaining segment, the mean rolls
back one fixed increment toward the episode's true start.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .trajectory import Demonstration


@dataclass(frozen=True)
class CurriculumConfig:
    initial_mean: float = 0.95
    std: float = 1.0 / 6.0
    rollback: float = 0.20
    required_episodes: int = 50
    score_ratio: float = 0.9


@dataclass
class CurriculumState:
    config: CurriculumConfig = field(default_factory=CurriculumConfig)
    mean: float = -1.0  # set in __post_init__
    qualifying_count: int = 0
    promotions: int = 0
    complete: bool = False

    def __post_init__(self) -> None:
        if self.mean < 0.0:
            self.mean = self.config.initial_mean


def sample_start(cur: CurriculumState, rng: np.random.Generator) -> float:
    """Draw a start fraction from Normal(mean, std), clipped to [0, 1]."""
    if cur.complete:
        raise UsageError("curriculum already complete")
    raw = cur.mean + cur.config.std * rng.standard_normal()
    return min(1.0, max(0.0, raw))


def report_episode(cur: CurriculumState, agent_score: float, human_score: float) -> CurriculumState:
    """Count a finished episode; promote when the quota at this level is met.

    Qualification compares the agent's post-handover score against the
    human's score over the same remaining segment.
    """
    if cur.complete:
        raise UsageError("curriculum already complete")
    if agent_score >= cur.config.score_ratio * human_score:
        cur.qualifying_count += 1
        if cur.qualifying_count >= cur.config.required_episodes:
            cur.qualifying_count = 0
            cur.promotions += 1
            if cur.mean <= 0.0:
                cur.complete = True
            else:
                cur.mean = max(0.0, cur.mean - cur.config.rollback)
    return cur


def human_reference_score(demo: Demonstration, fraction: float) -> int:
    """The human's reward over the segment the agent plays when starting at `fraction`."""
    return demo.suffix_score(fraction)


class SharedCurriculum:
    """Single curriculum shared by all actor-learners; access is serialized."""

    def __init__(self, state: CurriculumState):
        self._state = state
        self._lock = threading.Lock()

    def sample_start(self, rng: np.random.Generator) -> tuple[float, float]:
        """Returns (fraction, mean at sampling time)."""
        with self._lock:
            if self._state.complete:
                return 0.0, 0.0
            return sample_start(self._state, rng), self._state.mean

    def report_episode(self, agent_score: float, human_score: float) -> tuple[bool, float, bool]:
        """Returns (promoted, new mean, complete)."""
        with self._lock:
            if self._state.complete:
                return False, 0.0, True
            before = self._state.promotions
            report_episode(self._state, agent_score, human_score)
            return (
                self._state.promotions > before,
                self._state.mean,
                self._state.complete,
            )

    def snapshot(self) -> CurriculumState:
        with self._lock:
            return CurriculumState(
                config=self._state.config,
                mean=self._state.mean,
                qualifying_count=self._state.qualifying_count,
                promotions=self._state.promotions,
                complete=self._state.complete,
            )
