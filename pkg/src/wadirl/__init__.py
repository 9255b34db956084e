"""wadirl: demo-seeded reverse-curriculum actor-critic on a combat microworld."""

__version__ = "0.1.0"
