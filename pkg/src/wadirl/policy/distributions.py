"""Factorized categorical action distribution over the four command heads."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import UsageError
from ..sim import Command


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class ActionDistribution:
    """Per-head probabilities, each (B, k). Heads are independent given the trunk."""

    probs: tuple[np.ndarray, ...]

    @property
    def batch_size(self) -> int:
        return self.probs[0].shape[0]

    @staticmethod
    def from_logits(head_logits: list[np.ndarray]) -> "ActionDistribution":
        return ActionDistribution(tuple(softmax(lg) for lg in head_logits))


def sample(dist: ActionDistribution, rng: np.random.Generator) -> np.ndarray:
    """Draw one command per batch row. Returns (B, 4) ints."""
    b = dist.batch_size
    n_heads = len(dist.probs)
    out = np.empty((b, n_heads), dtype=np.int64)
    u = rng.random((b, n_heads))
    if b == 1:
        for h, p in enumerate(dist.probs):
            row = p[0]
            target = u[0, h]
            acc = 0.0
            idx = row.shape[0] - 1  # rounding guard: total may fall slightly under 1
            for k in range(row.shape[0] - 1):
                acc += row[k]
                if target < acc:
                    idx = k
                    break
            out[0, h] = idx
        return out
    for h, p in enumerate(dist.probs):
        cdf = np.cumsum(p, axis=1)
        cdf[:, -1] = 1.0
        out[:, h] = (u[:, h : h + 1] > cdf[:, :-1]).sum(axis=1) if p.shape[1] > 1 else 0
    return out


def greedy(dist: ActionDistribution) -> np.ndarray:
    return np.stack([p.argmax(axis=1) for p in dist.probs], axis=1)


def sample_logits_row(head_logits: list[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    """Single-row categorical draw straight from logits (hot rollout path).

    Equivalent to sample(ActionDistribution.from_logits(...)) for B=1 but
    avoids building the normalized distribution.
    """
    out = np.empty(len(head_logits), dtype=np.int64)
    for h, lg in enumerate(head_logits):
        row = lg[0].tolist()
        m = max(row)
        exps = [math.exp(z - m) for z in row]
        target = rng.random() * math.fsum(exps)
        acc = 0.0
        idx = len(exps) - 1
        for k in range(len(exps) - 1):
            acc += exps[k]
            if target < acc:
                idx = k
                break
        out[h] = idx
    return out


def log_prob(dist: ActionDistribution, commands: np.ndarray) -> np.ndarray:
    """Sum of per-head log probabilities; -inf for zero-probability commands."""
    if commands.ndim != 2 or commands.shape[1] != len(dist.probs):
        raise UsageError(f"commands must be (B, {len(dist.probs)})")
    b = commands.shape[0]
    rows = np.arange(b)
    total = np.zeros(b)
    with np.errstate(divide="ignore"):
        for h, p in enumerate(dist.probs):
            total += np.log(p[rows, commands[:, h]])
    return total


def entropy(dist: ActionDistribution) -> np.ndarray:
    """Sum of per-head entropies, (B,)."""
    total = np.zeros(dist.batch_size)
    for p in dist.probs:
        plogp = np.where(p > 0.0, p * np.log(np.maximum(p, 1e-300)), 0.0)
        total -= plogp.sum(axis=1)
    return total


def command_of(row: np.ndarray) -> Command:
    return Command(int(row[0]), int(row[1]), int(row[2]), int(row[3]))
