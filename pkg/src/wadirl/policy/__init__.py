"""Actor-critic network with hand-written analytic gradients."""

from .checkpoint import load_params, save_params
from .distributions import (
    ActionDistribution,
    command_of,
    entropy,
    greedy,
    log_prob,
    sample,
    softmax,
)
from .loss import RolloutBatch, loss_and_grads, n_step_returns
from .network import ForwardCache, ObsBatch, backward, forward
from .params import (
    HEAD_NAMES,
    ArchSpec,
    PolicyParams,
    clip_global_norm,
    global_norm,
    init_params,
    tree_add_scaled,
)

__all__ = [
    "ActionDistribution", "ArchSpec", "ForwardCache", "HEAD_NAMES", "ObsBatch",
    "PolicyParams", "RolloutBatch", "backward", "clip_global_norm", "command_of",
    "entropy", "forward", "global_norm", "greedy", "init_params", "load_params",
    "log_prob", "loss_and_grads", "n_step_returns", "sample", "save_params",
    "softmax", "tree_add_scaled",
]
