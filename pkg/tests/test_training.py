import json
import os

import numpy as np
import pytest
from scipy import stats

from wadirl.curriculum import CurriculumConfig
from wadirl.errors import ConfigError
from wadirl.policy import init_params
from wadirl.sim import ObsMode
from wadirl.training import (
    CONDITIONS,
    OptimizerState,
    TrainConfig,
    apply_update,
    condition_obs_mode,
    condition_uses_curriculum,
    run_training,
)

from conftest import make_mini_scenario
from test_policy import tiny_spec


def small_cfg(**kw):
    defaults = dict(
        condition="trad-vector",
        workers=1,
        total_env_steps=1_500,
        seed=0,
        eval_every=0,
        log_every_updates=10,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


def mini_training_scenario():
    return make_mini_scenario(
        spawns={
            "tanks": [(4, 5)], "scouts": [(5, 6)],
            "red_infantry": [(8, 5)], "red_armor": [(9, 6)],
        },
        max_steps=30,
    )


def mini_demo(scn):
    from wadirl.sim import ACTION_ATTACK, Command, NOOP
    from wadirl.trajectory import record_episode

    def policy(state, i):
        if i == 0:
            return Command(4, ACTION_ATTACK, 2, 1)
        if i == 1:
            return Command(3, ACTION_ATTACK, 2, 1)
        return NOOP

    return record_episode(scn, seed=2, policy=policy)


# -- conditions ---------------------------------------------------------------

def test_condition_table():
    assert condition_obs_mode("acl-image") == ObsMode.IMAGE
    assert condition_obs_mode("trad-vector") == ObsMode.VECTOR
    assert condition_uses_curriculum("acl-vector")
    assert not condition_uses_curriculum("trad-image")
    assert len(CONDITIONS) == 4


def test_bad_config_rejected():
    with pytest.raises(ConfigError):
        TrainConfig(condition="nope")
    with pytest.raises(ConfigError):
        TrainConfig(workers=0)
    with pytest.raises(ConfigError):
        TrainConfig(total_env_steps=0)


def test_acl_requires_demo():
    scn = mini_training_scenario()
    with pytest.raises(ConfigError, match="requires a demonstration"):
        run_training(small_cfg(condition="acl-vector"), scn, demo=None)


def test_demo_scenario_mismatch_rejected():
    scn = mini_training_scenario()
    other = make_mini_scenario(max_steps=31)
    demo = mini_demo(scn)
    with pytest.raises(ConfigError, match="different scenario"):
        run_training(small_cfg(condition="acl-vector"), other, demo)


# -- apply_update ---------------------------------------------------------------

def test_zero_grads_leave_params_unchanged():
    rng = np.random.default_rng(0)
    params = init_params(tiny_spec(), rng)
    before = params.flat.copy()
    opt = OptimizerState.for_params(params)
    assert apply_update(params, params.zeros_like(), opt, 1e-3, 0.99, 1e-8, 10.0)
    assert np.array_equal(before, params.flat)


def test_two_updates_serialize_to_sequential_application():
    rng = np.random.default_rng(1)
    spec = tiny_spec()
    p_serial = init_params(spec, rng)
    g1 = init_params(spec, np.random.default_rng(100))
    g2 = init_params(spec, np.random.default_rng(200))
    opt = OptimizerState.for_params(p_serial)
    assert apply_update(p_serial, g1.copy(), opt, 1e-3, 0.99, 1e-8, 10.0)
    assert apply_update(p_serial, g2.copy(), opt, 1e-3, 0.99, 1e-8, 10.0)

    # independent replication of the same two serialized updates
    p_ref = init_params(spec, np.random.default_rng(1))
    opt_ref = OptimizerState.for_params(p_ref)
    for g in (g1.copy(), g2.copy()):
        assert apply_update(p_ref, g, opt_ref, 1e-3, 0.99, 1e-8, 10.0)
    assert np.array_equal(p_serial.flat, p_ref.flat)


def test_nan_grads_rejected_and_counted():
    rng = np.random.default_rng(2)
    params = init_params(tiny_spec(), rng)
    opt = OptimizerState.for_params(params)
    grads = params.zeros_like()
    grads.flat[7] = np.nan
    before = params.flat.copy()
    assert not apply_update(params, grads, opt, 1e-3, 0.99, 1e-8, 10.0)
    assert np.array_equal(before, params.flat)
    assert opt.rejected_updates == 1
    assert np.all(opt.mean_square == 0.0)


def test_gradient_clip_matches_reference():
    rng = np.random.default_rng(3)
    spec = tiny_spec()
    params = init_params(spec, rng)
    opt = OptimizerState.for_params(params)
    grads = params.zeros_like()
    grads.flat[:] = 100.0
    clip = 1.0
    norm_before = float(np.sqrt(np.dot(grads.flat, grads.flat)))
    expected = grads.flat * (clip / norm_before)
    before = params.flat.copy()
    assert apply_update(params, grads, opt, 1e-3, 0.99, 1e-8, clip)
    implied = before - params.flat
    ref = 1e-3 * expected / (np.sqrt(0.01 * expected**2) + 1e-8)
    assert np.allclose(implied, ref, rtol=1e-12)


# -- end-to-end training runs ------------------------------------------------

def test_single_worker_training_is_reproducible(tmp_path):
    scn = mini_training_scenario()
    logs = []
    for run in range(2):
        out = tmp_path / f"run{run}"
        cfg = small_cfg(out_dir=str(out), eval_every=500, eval_rollouts=2)
        run_training(cfg, scn)
        logs.append((out / "trainlog.jsonl").read_bytes())
    assert logs[0] == logs[1]


def test_traditional_episodes_start_at_fraction_zero():
    scn = mini_training_scenario()
    _, log = run_training(small_cfg(), scn)
    episodes = log.of_kind("episode")
    assert episodes
    assert all(e["start_fraction"] == 0.0 for e in episodes)


def test_acl_fractions_in_unit_interval_and_match_clipped_gaussian():
    scn = mini_training_scenario()
    demo = mini_demo(scn)
    # huge quota so the mean never moves during the test
    cfg = small_cfg(
        condition="acl-vector",
        total_env_steps=12_000,
        curriculum=CurriculumConfig(required_episodes=10**9),
    )
    _, log = run_training(cfg, scn, demo)
    fractions = np.array([e["start_fraction"] for e in log.of_kind("episode")])
    assert len(fractions) >= 300
    assert np.all((fractions >= 0.0) & (fractions <= 1.0))
    mu, sigma = 0.95, 1.0 / 6.0
    # goodness of fit at 3 sigma: the clip mass at 1.0 and the sample mean
    p_hi = 1.0 - stats.norm.cdf(1.0, mu, sigma)
    n = len(fractions)
    observed_hi = np.mean(fractions == 1.0)
    se_hi = np.sqrt(p_hi * (1 - p_hi) / n)
    assert abs(observed_hi - p_hi) < 3 * se_hi

    from test_curriculum import clipped_normal_mean

    expected_mean = clipped_normal_mean(mu, sigma)
    se = fractions.std(ddof=1) / np.sqrt(n)
    assert abs(fractions.mean() - expected_mean) < 3 * se


def test_acl_agent_score_excludes_prefix_reward():
    scn = mini_training_scenario()
    demo = mini_demo(scn)
    assert demo.total_score != 0
    cfg = small_cfg(condition="acl-vector", total_env_steps=3_000)
    _, log = run_training(cfg, scn, demo)
    episodes = log.of_kind("episode")
    assert episodes
    for e in episodes:
        assert e["human_ref"] == demo.suffix_score(e["curriculum_mean"])


def test_curriculum_promotions_logged(tmp_path):
    scn = mini_training_scenario()
    demo = mini_demo(scn)
    out = tmp_path / "acl"
    cfg = small_cfg(
        condition="acl-vector",
        total_env_steps=6_000,
        out_dir=str(out),
        curriculum=CurriculumConfig(required_episodes=3, score_ratio=-10.0),
    )
    _, log = run_training(cfg, scn, demo)
    promos = log.of_kind("curriculum")
    assert promos, "negative score_ratio makes every episode qualify"
    means = [p["mean"] for p in promos]
    assert means[: min(len(means), 5)] == pytest.approx(
        [0.75, 0.55, 0.35, 0.15, 0.0][: min(len(means), 5)]
    )
    # progression log carries wall time, the train log does not
    progression = (out / "curriculum.jsonl").read_text().splitlines()
    assert progression
    assert all("wall_time" in json.loads(line) for line in progression)
    raw = (out / "trainlog.jsonl").read_text()
    assert "wall_time" not in raw


def test_shared_params_stay_finite_and_logged_steps_increase(tmp_path):
    scn = mini_training_scenario()
    cfg = small_cfg(workers=2, total_env_steps=4_000, eval_every=1_000,
                    eval_rollouts=1, out_dir=str(tmp_path / "w2"))
    params, log = run_training(cfg, scn)
    assert params.all_finite()
    evals = [e["env_steps"] for e in log.of_kind("eval")]
    assert evals == sorted(evals) and len(set(evals)) == len(evals)
    finals = log.of_kind("final")
    assert len(finals) == 1
    assert finals[0]["env_steps"] == 4_000


def test_trainlog_part_file_renamed_on_success(tmp_path):
    scn = mini_training_scenario()
    out = tmp_path / "atomic"
    run_training(small_cfg(out_dir=str(out)), scn)
    assert (out / "trainlog.jsonl").exists()
    assert not (out / "trainlog.jsonl.part").exists()
    assert (out / "checkpoint.npz").exists()
