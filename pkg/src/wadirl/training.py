"""Asynchronous actor-learner training over the four experimental conditions.

Each worker thread loops: snapshot the shared parameters, collect an n-step
rollout (episodes start at reset for the traditional conditions, or at a
curriculum-sampled demonstration prefix for the ACL conditions), compute
gradients against its snapshot, and apply them to the shared parameters under
a lock. Episode outcomes feed the curriculum; a periodic milestone evaluator
snapshots greedy performance.

The training log deliberately contains no wall-clock values, so a single
worker with a fixed seed reproduces it byte for byte.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .curriculum import CurriculumConfig, CurriculumState, SharedCurriculum
from .errors import ConfigError, TrainingError
from .policy import (
    ArchSpec,
    ObsBatch,
    PolicyParams,
    RolloutBatch,
    forward,
    init_params,
    loss_and_grads,
    save_params,
)
from .policy.distributions import command_of, sample_logits_row
from .scenario import Scenario
from .sim import engine  # noqa: F401  (numba availability)
from .sim import IMAGE_CHANNELS, VECTOR_DIM, ObsMode, observe, reset, step
from .trajectory import Demonstration, PrefixCache

CONDITIONS = ("acl-image", "acl-vector", "trad-image", "trad-vector")


def condition_obs_mode(condition: str) -> ObsMode:
    return ObsMode.IMAGE if condition.endswith("image") else ObsMode.VECTOR


def condition_uses_curriculum(condition: str) -> bool:
    return condition.startswith("acl")


@dataclass
class TrainConfig:
    condition: str = "trad-vector"
    workers: int = 8
    total_env_steps: int = 2_000_000
    seed: int = 0
    n_steps: int = 8
    gamma: float = 0.99
    lr: float = 1e-4
    rmsprop_decay: float = 0.99
    rmsprop_eps: float = 1e-8
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    grad_clip: float = 10.0
    reward_scale: float = 0.1  # sim rewards are +/-10 per event; learn on +/-1
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    eval_every: int = 50_000
    eval_rollouts: int = 8
    log_every_updates: int = 50
    trunk_widths: tuple[int, ...] = (128, 128)
    conv_channels: tuple[int, ...] = (8, 16, 16)
    vec_hidden: int = 128
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.condition not in CONDITIONS:
            raise ConfigError(f"unknown condition {self.condition!r}; expected one of {CONDITIONS}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.total_env_steps <= 0:
            raise ConfigError("total_env_steps must be > 0")

    def arch_spec(self, scenario: Scenario) -> ArchSpec:
        t = scenario.terrain
        c = scenario.target_bins
        return ArchSpec(
            obs_mode=condition_obs_mode(self.condition),
            image_shape=(IMAGE_CHANNELS, t.height, t.width),
            vec_dim=VECTOR_DIM,
            conv_channels=self.conv_channels,
            vec_hidden=self.vec_hidden,
            trunk_widths=self.trunk_widths,
            head_dims=(5, 3, c, c),
        )


class TrainLog:
    """Append-only training record sink (JSON lines, no wall-clock fields)."""

    def __init__(self, path: str | None = None):
        self.records: list[dict] = []
        self._lock = threading.Lock()
        self._file = open(path, "w", encoding="utf-8") if path else None

    def append(self, record: dict) -> None:
        with self._lock:
            self.records.append(record)
            if self._file is not None:
                self._file.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        with self._lock:
            if self._file is not None:
                self._file.flush()
                self._file.close()
                self._file = None

    def of_kind(self, kind: str) -> list[dict]:
        with self._lock:
            return [r for r in self.records if r["kind"] == kind]


class _StepBudget:
    """Global env-step budget shared by the workers."""

    def __init__(self, total: int):
        self.total = total
        self._remaining = total
        self._lock = threading.Lock()

    def reserve(self, k: int) -> int:
        with self._lock:
            grant = min(k, self._remaining)
            self._remaining -= grant
            return grant

    def release(self, k: int) -> None:
        if k <= 0:
            return
        with self._lock:
            self._remaining += k

    def consumed(self) -> int:
        with self._lock:
            return self.total - self._remaining


@dataclass
class OptimizerState:
    """Shared-statistics RMSProp accumulators (flat, matching the param buffer)."""

    mean_square: np.ndarray
    rejected_updates: int = 0

    @staticmethod
    def for_params(params: PolicyParams) -> "OptimizerState":
        if params.flat is None:
            raise ConfigError("optimizer requires packed parameters")
        return OptimizerState(np.zeros_like(params.flat))


def _rmsprop_fused(p, g, s, lr, decay, eps, clip):
    """Single-pass RMSProp with finiteness gate and global-norm clip.

    Returns the pre-clip gradient norm, or -1.0 when the gradient is
    rejected for non-finite entries (p and s untouched in that case).
    """
    total = 0.0
    for i in range(g.shape[0]):
        v = g[i]
        if not math.isfinite(v):
            return -1.0
        total += v * v
    norm = math.sqrt(total)
    scale = 1.0
    if clip > 0.0 and norm > clip:
        scale = clip / norm
    keep = 1.0 - decay
    for i in range(g.shape[0]):
        gv = g[i] * scale
        sv = s[i] * decay + keep * gv * gv
        s[i] = sv
        p[i] -= lr * gv / (math.sqrt(sv) + eps)
    return norm


if engine.HAVE_NUMBA:
    from numba import njit

    _rmsprop_fused = njit(cache=True)(_rmsprop_fused)


def apply_update(
    params: PolicyParams,
    grads: PolicyParams,
    opt: OptimizerState,
    lr: float,
    decay: float,
    eps: float,
    grad_clip: float,
) -> bool:
    """RMSProp step on `params` in place. Returns False for rejected (non-finite) grads.

    Callers serialize access; this function assumes exclusive ownership of
    params and opt for its duration.
    """
    norm = _rmsprop_fused(
        params.flat, grads.flat, opt.mean_square, lr, decay, eps, grad_clip
    )
    if norm < 0.0:
        opt.rejected_updates += 1
        return False
    params.assert_finite("optimizer update")
    return True


class SharedParams:
    """Master parameter copy; snapshot reads and serialized updates."""

    def __init__(self, params: PolicyParams, cfg: TrainConfig):
        self.params = params
        self.opt = OptimizerState.for_params(params)
        self.cfg = cfg
        self._lock = threading.Lock()

    def snapshot(self) -> PolicyParams:
        with self._lock:
            return self.params.copy()

    def apply(self, grads: PolicyParams) -> bool:
        with self._lock:
            return apply_update(
                self.params, grads, self.opt,
                self.cfg.lr, self.cfg.rmsprop_decay, self.cfg.rmsprop_eps, self.cfg.grad_clip,
            )


class _EvalMilestones:
    def __init__(self, every: int):
        self.every = every
        self._next = every
        self._lock = threading.Lock()

    def due(self, consumed: int) -> int | None:
        if self.every <= 0:
            return None
        with self._lock:
            if consumed >= self._next:
                milestone = self._next
                while self._next <= consumed:
                    self._next += self.every
                return milestone
        return None


class _Worker(threading.Thread):
    def __init__(self, wid: int, ctx: "_RunContext"):
        super().__init__(name=f"actor-learner-{wid}", daemon=True)
        self.wid = wid
        self.ctx = ctx
        self.rng = np.random.default_rng(ctx.worker_seeds[wid])
        self.error: BaseException | None = None
        self.episode_counter = 0
        self.update_counter = 0

    # -- episode plumbing ---------------------------------------------------

    def _start_episode(self):
        ctx = self.ctx
        if ctx.prefix_cache is not None:
            fraction, mean = ctx.shared_curriculum.sample_start(self.rng)
            state = ctx.prefix_cache.playable_state_at(fraction)
            # the agent takes over: inherited orders must not keep playing
            # the demonstration for free
            state.clear_orders()
            return state, fraction, mean
        else:
            env_seed = ctx.cfg.seed * 1_000_003 + self.wid * 9_973 + self.episode_counter
            return reset(ctx.scenario, env_seed), 0.0, None

    def _finish_episode(self, ep) -> None:
        ctx = self.ctx
        record = {
            "kind": "episode",
            "env_steps": ctx.budget.consumed(),
            "worker": self.wid,
            "episode": self.episode_counter,
            "reward": ep["reward"],
            "length": ep["length"],
            "start_fraction": ep["fraction"],
        }
        if ctx.shared_curriculum is not None and ep["mean"] is not None:
            human_ref = ctx.demo.suffix_score(ep["mean"])
            promoted, new_mean, complete = ctx.shared_curriculum.report_episode(ep["reward"], human_ref)
            record["curriculum_mean"] = ep["mean"]
            record["human_ref"] = human_ref
            if promoted:
                ctx.log.append({
                    "kind": "curriculum",
                    "env_steps": ctx.budget.consumed(),
                    "mean": new_mean,
                    "complete": complete,
                })
                ctx.write_progression(new_mean, complete)
        ctx.log.append(record)
        self.episode_counter += 1

    # -- main loop ----------------------------------------------------------

    def run(self) -> None:
        try:
            self._loop()
        except BaseException as e:  # surfaced by run_training after join
            self.error = e
            self.ctx.abort.set()

    def _loop(self) -> None:
        ctx = self.ctx
        cfg = ctx.cfg
        mode = condition_obs_mode(cfg.condition)
        state = None
        ep = None

        while not ctx.abort.is_set():
            grant = ctx.budget.reserve(cfg.n_steps)
            if grant == 0:
                break
            snapshot = ctx.shared.snapshot()

            images, vectors, commands, rewards, values, dones = [], [], [], [], [], []
            done = False
            for _ in range(grant):
                if state is None:
                    state, fraction, mean = self._start_episode()
                    ep = {"reward": 0.0, "length": 0, "fraction": fraction, "mean": mean}
                obs = observe(state, mode)
                batch_obs = ObsBatch(
                    images=None if obs.image is None else obs.image[None],
                    vectors=None if obs.vector is None else obs.vector[None],
                )
                cache = forward(snapshot, batch_obs)
                cmd_row = sample_logits_row(cache.head_logits, self.rng)
                state, r, done = step(state, command_of(cmd_row))

                if obs.image is not None:
                    images.append(obs.image)
                if obs.vector is not None:
                    vectors.append(obs.vector)
                commands.append(cmd_row)
                rewards.append(float(r) * cfg.reward_scale)
                values.append(float(cache.value[0]))
                dones.append(done)
                ep["reward"] += r
                ep["length"] += 1

                if done:
                    self._finish_episode(ep)
                    state, ep = None, None
                    break

            used = len(commands)
            ctx.budget.release(grant - used)
            if used == 0:
                continue

            if done:
                bootstrap = 0.0
            else:
                obs = observe(state, mode)
                tail = ObsBatch(
                    images=None if obs.image is None else obs.image[None],
                    vectors=None if obs.vector is None else obs.vector[None],
                )
                bootstrap = float(forward(snapshot, tail).value[0])

            batch = RolloutBatch(
                observations=ObsBatch(
                    images=np.stack(images) if images else None,
                    vectors=np.stack(vectors) if vectors else None,
                ),
                commands=np.stack(commands),
                rewards=np.asarray(rewards),
                values=np.asarray(values),
                dones=np.asarray(dones, dtype=bool),
                bootstrap=bootstrap,
            )
            loss, grads, stats = loss_and_grads(
                snapshot, batch, cfg.gamma, cfg.value_coef, cfg.entropy_coef
            )
            ctx.shared.apply(grads)
            self.update_counter += 1

            if cfg.log_every_updates > 0 and self.update_counter % cfg.log_every_updates == 0:
                ctx.log.append({
                    "kind": "update",
                    "env_steps": ctx.budget.consumed(),
                    "worker": self.wid,
                    "update": self.update_counter,
                    "loss": stats["loss"],
                    "policy_loss": stats["policy_loss"],
                    "value_loss": stats["value_loss"],
                    "entropy": stats["entropy"],
                })

            milestone = ctx.milestones.due(ctx.budget.consumed())
            if milestone is not None:
                self._run_eval(milestone)

    def _run_eval(self, milestone: int) -> None:
        from .evaluate import run_greedy_episode

        ctx = self.ctx
        params = ctx.shared.snapshot()
        rewards = [
            run_greedy_episode(params, ctx.scenario, ctx.cfg.seed * 7_919 + milestone + i)[1]
            for i in range(ctx.cfg.eval_rollouts)
        ]
        cur = ctx.shared_curriculum.snapshot() if ctx.shared_curriculum is not None else None
        ctx.log.append({
            "kind": "eval",
            "env_steps": milestone,
            "mean_reward": float(np.mean(rewards)),
            "median_reward": float(np.median(rewards)),
            "curriculum_mean": None if cur is None else cur.mean,
            "curriculum_complete": None if cur is None else cur.complete,
        })


class _RunContext:
    def __init__(self, cfg: TrainConfig, scenario: Scenario, demo: Demonstration | None):
        self.cfg = cfg
        self.scenario = scenario
        self.demo = demo
        seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.workers + 1)
        self.worker_seeds = seeds[:-1]
        self.init_seed = seeds[-1]
        self.budget = _StepBudget(cfg.total_env_steps)
        self.milestones = _EvalMilestones(cfg.eval_every)
        self.abort = threading.Event()
        self.log: TrainLog | None = None
        self.shared: SharedParams | None = None
        self.shared_curriculum: SharedCurriculum | None = None
        self.prefix_cache: PrefixCache | None = None
        self._progression_path: str | None = None
        if cfg.out_dir:
            # .part until the run completes so failures never leave canonical files
            self._progression_path = os.path.join(cfg.out_dir, "curriculum.jsonl.part")

    def write_progression(self, mean: float, complete: bool) -> None:
        if self._progression_path is None:
            return
        with open(self._progression_path, "a", encoding="utf-8") as f:
            f.write(json.dumps({
                "wall_time": time.time(),
                "env_steps": self.budget.consumed(),
                "mean": mean,
                "complete": complete,
            }, sort_keys=True) + "\n")


def run_training(
    cfg: TrainConfig,
    scenario: Scenario,
    demo: Demonstration | None = None,
) -> tuple[PolicyParams, TrainLog]:
    """Train under the configured condition; returns final params and the log."""
    uses_curriculum = condition_uses_curriculum(cfg.condition)
    if uses_curriculum and demo is None:
        raise ConfigError(f"condition {cfg.condition!r} requires a demonstration")
    if demo is not None and demo.scenario_hash != scenario.content_hash:
        raise ConfigError("demonstration was recorded against a different scenario")

    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)

    ctx = _RunContext(cfg, scenario, demo)
    log_path = os.path.join(cfg.out_dir, "trainlog.jsonl.part") if cfg.out_dir else None
    ctx.log = TrainLog(log_path)
    params = init_params(cfg.arch_spec(scenario), np.random.default_rng(ctx.init_seed))
    ctx.shared = SharedParams(params, cfg)
    if uses_curriculum:
        ctx.shared_curriculum = SharedCurriculum(CurriculumState(config=cfg.curriculum))
        ctx.prefix_cache = PrefixCache(demo, scenario)

    ctx.log.append({
        "kind": "config",
        "condition": cfg.condition,
        "workers": cfg.workers,
        "total_env_steps": cfg.total_env_steps,
        "seed": cfg.seed,
        "scenario_hash": scenario.content_hash,
        "demo_length": None if demo is None else demo.length,
    })

    workers = [_Worker(i, ctx) for i in range(cfg.workers)]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    for w in workers:
        if w.error is not None:
            ctx.log.close()
            raise TrainingError(f"worker {w.wid} failed: {w.error!r}") from w.error

    final = ctx.shared.snapshot()
    cur = ctx.shared_curriculum.snapshot() if ctx.shared_curriculum is not None else None
    ctx.log.append({
        "kind": "final",
        "env_steps": ctx.budget.consumed(),
        "curriculum_mean": None if cur is None else cur.mean,
        "curriculum_promotions": None if cur is None else cur.promotions,
        "curriculum_complete": None if cur is None else cur.complete,
        "rejected_updates": ctx.shared.opt.rejected_updates,
    })
    ctx.log.close()

    if cfg.out_dir:
        save_params(final, os.path.join(cfg.out_dir, "checkpoint.npz"),
                    extra={"condition": cfg.condition, "seed": cfg.seed,
                           "env_steps": ctx.budget.consumed()})
        os.replace(log_path, os.path.join(cfg.out_dir, "trainlog.jsonl"))
        progression = os.path.join(cfg.out_dir, "curriculum.jsonl.part")
        if os.path.exists(progression):
            os.replace(progression, os.path.join(cfg.out_dir, "curriculum.jsonl"))
    return final, ctx.log
