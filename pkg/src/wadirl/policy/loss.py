"""Actor-critic objective: n-step returns, advantages, loss, exact gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingError, UsageError
from .distributions import ActionDistribution, entropy, log_prob
from .network import ObsBatch, backward, forward
from .params import PolicyParams


@dataclass
class RolloutBatch:
    """One contiguous rollout segment from a single episode.

    `values` are the critic's estimates at collection time (the advantage
    baseline, treated as constant). `bootstrap` is the critic's value for the
    state after the last step, and must be 0 when the segment ends the episode.
    """

    observations: ObsBatch
    commands: np.ndarray  # (T, 4) int
    rewards: np.ndarray   # (T,)
    values: np.ndarray    # (T,)
    dones: np.ndarray     # (T,) bool; only the final step may be terminal
    bootstrap: float

    def __post_init__(self) -> None:
        t = self.commands.shape[0]
        if not (self.rewards.shape == (t,) and self.values.shape == (t,) and self.dones.shape == (t,)):
            raise UsageError("misaligned rollout batch lengths")
        if self.observations.batch_size != t:
            raise UsageError("observation batch does not match rollout length")
        if t == 0:
            raise UsageError("empty rollout batch")
        if self.dones[:-1].any():
            raise UsageError("episode terminates mid-batch; split rollouts at episode ends")
        if self.dones[-1] and self.bootstrap != 0.0:
            raise UsageError("terminal rollout must bootstrap with 0")

    @property
    def n_steps(self) -> int:
        return self.commands.shape[0]


def n_step_returns(batch: RolloutBatch, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Discounted returns bootstrapped from the tail, and advantages vs `values`."""
    t = batch.n_steps
    returns = np.empty(t)
    acc = batch.bootstrap
    for i in range(t - 1, -1, -1):
        acc = batch.rewards[i] + gamma * acc
        returns[i] = acc
    return returns, returns - batch.values


def loss_and_grads(
    params: PolicyParams,
    batch: RolloutBatch,
    gamma: float,
    value_coef: float,
    entropy_coef: float,
) -> tuple[float, PolicyParams, dict]:
    """Scalar loss and its exact gradients.

        loss = mean_t[-log pi(a_t | s_t) * A_t]
             + value_coef * mean_t[(R_t - V(s_t))^2]
             - entropy_coef * mean_t[H(pi(. | s_t))]

    A_t uses the stored rollout values and is constant with respect to params;
    the value-regression term differentiates through the live critic output.
    """
    returns, advantages = n_step_returns(batch, gamma)
    t = batch.n_steps

    cache = forward(params, batch.observations)
    dist = ActionDistribution.from_logits(cache.head_logits)
    logp = log_prob(dist, batch.commands)
    ent = entropy(dist)

    policy_loss = float(np.mean(-logp * advantages))
    value_err = returns - cache.value
    value_loss = float(np.mean(value_err**2))
    entropy_mean = float(np.mean(ent))
    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy_mean

    if not np.isfinite(loss):
        raise TrainingError(
            f"non-finite loss (policy={policy_loss}, value={value_loss}, entropy={entropy_mean})"
        )

    rows = np.arange(t)
    dhead_logits = []
    for h, p in enumerate(dist.probs):
        onehot = np.zeros_like(p)
        onehot[rows, batch.commands[:, h]] = 1.0
        dlog = (p - onehot) * (advantages / t)[:, None]
        if entropy_coef != 0.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                logp_h = np.where(p > 0.0, np.log(np.maximum(p, 1e-300)), 0.0)
            h_head = -(p * logp_h).sum(axis=1, keepdims=True)
            dlog += (entropy_coef / t) * p * (logp_h + h_head)
        dhead_logits.append(dlog)
    dvalue = value_coef * 2.0 * (cache.value - returns) / t

    grads = backward(params, cache, dhead_logits, dvalue)
    stats = {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy_mean,
        "mean_advantage": float(np.mean(advantages)),
    }
    return loss, grads, stats
