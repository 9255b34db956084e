"""Deterministic tactical combat microworld."""

from .observe import (
    IMAGE_CHANNELS,
    VECTOR_DIM,
    Observation,
    ObsMode,
    observe,
)
from .world import (
    ACTION_ATTACK,
    ACTION_MOVE,
    ACTION_NOOP,
    EVENT_BLUE_DESTROYED,
    EVENT_CROSS_EAST,
    EVENT_CROSS_WEST,
    EVENT_DELTA,
    EVENT_NAMES,
    EVENT_RED_DESTROYED,
    N_ACTIONS,
    N_BLUE_COALITIONS,
    NOOP,
    Command,
    Unit,
    WorldState,
    reset,
    step,
    validate_command,
)

__all__ = [
    "ACTION_ATTACK", "ACTION_MOVE", "ACTION_NOOP", "N_ACTIONS",
    "N_BLUE_COALITIONS", "NOOP", "Command", "Unit", "WorldState",
    "EVENT_BLUE_DESTROYED", "EVENT_CROSS_EAST", "EVENT_CROSS_WEST",
    "EVENT_DELTA", "EVENT_NAMES", "EVENT_RED_DESTROYED",
    "IMAGE_CHANNELS", "VECTOR_DIM", "Observation", "ObsMode", "observe",
    "reset", "step", "validate_command",
]
