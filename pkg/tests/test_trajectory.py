import math

import numpy as np
import pytest

from wadirl.errors import IntegrityError, RecordingError, VersionError
from wadirl.sim import NOOP, Command, reset, step
from wadirl.trajectory import (
    Demonstration,
    DemoStep,
    PrefixCache,
    Recorder,
    load,
    record_episode,
    replay_prefix,
    save,
    verify,
)

from conftest import make_mini_scenario, random_command


def _random_policy(seed):
    rng = np.random.default_rng(seed)

    def policy(state, i):
        return random_command(rng)

    return policy


@pytest.fixture
def small_demo():
    scn = make_mini_scenario(max_steps=25)
    return scn, record_episode(scn, seed=4, policy=_random_policy(4))


def test_recorded_demo_satisfies_invariants(small_demo):
    scn, demo = small_demo
    assert demo.length > 0
    assert demo.total_score == sum(s.reward for s in demo.steps)
    verify(demo, scn)


def test_reference_demo_shape(scenario, demo):
    assert demo.length == 120
    assert demo.total_score == 110
    verify(demo, scenario)


def test_empty_stream_rejected(scenario):
    rec = Recorder(scenario, 0)
    with pytest.raises(RecordingError, match="empty"):
        rec.finalize()


def test_truncated_stream_rejected(scenario):
    rec = Recorder(scenario, 0)
    s = reset(scenario, 0)
    s, r, done = step(s, NOOP)
    rec.on_step(NOOP, r, s, done)
    with pytest.raises(RecordingError, match="truncated"):
        rec.finalize()


def test_tampered_digest_rejected(small_demo):
    scn, demo = small_demo
    steps = list(demo.steps)
    bad = steps[3]
    steps[3] = DemoStep(bad.index, bad.command, bad.reward, "0" * 32)
    tampered = Demonstration(demo.scenario_hash, demo.seed, tuple(steps), demo.total_score)
    with pytest.raises(IntegrityError, match="digest mismatch at step 3"):
        verify(tampered, scn)


def test_save_load_round_trip(small_demo, tmp_path):
    scn, demo = small_demo
    path = tmp_path / "d.demo"
    save(demo, str(path))
    loaded = load(str(path), scn)
    assert loaded == demo


def test_load_corrupted_step_rejected(small_demo, tmp_path):
    scn, demo = small_demo
    path = tmp_path / "d.demo"
    save(demo, str(path))
    lines = path.read_text().splitlines()
    lines[2] = lines[2].replace('"reward"', '"rewird"')
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(IntegrityError, match="corrupt step record"):
        load(str(path))


def test_load_flipped_digest_byte_rejected(small_demo, tmp_path):
    scn, demo = small_demo
    path = tmp_path / "d.demo"
    save(demo, str(path))
    raw = path.read_text()
    target = demo.steps[1].digest
    flipped = ("0" if target[0] != "0" else "1") + target[1:]
    path.write_text(raw.replace(target, flipped))
    with pytest.raises(IntegrityError):
        load(str(path), scn)


def test_load_tampered_score_rejected(small_demo, tmp_path):
    scn, demo = small_demo
    path = tmp_path / "d.demo"
    save(demo, str(path))
    raw = path.read_text()
    path.write_text(raw.replace(f'"total_score": {demo.total_score}',
                                f'"total_score": {demo.total_score + 10}', 1))
    with pytest.raises(IntegrityError, match="total_score"):
        load(str(path))


def test_load_future_schema_rejected(small_demo, tmp_path):
    scn, demo = small_demo
    path = tmp_path / "d.demo"
    save(demo, str(path))
    raw = path.read_text()
    path.write_text(raw.replace('"schema_version": 1', '"schema_version": 99', 1))
    with pytest.raises(VersionError):
        load(str(path))


def test_replay_prefix_zero_equals_reset(small_demo):
    scn, demo = small_demo
    assert replay_prefix(demo, 0.0, scn).digest() == reset(scn, demo.seed).digest()


def test_replay_prefix_full_equals_final(small_demo):
    scn, demo = small_demo
    assert replay_prefix(demo, 1.0, scn).digest() == demo.steps[-1].digest


def test_replay_prefix_half(small_demo):
    scn, demo = small_demo
    k = math.floor(0.5 * demo.length)
    state = replay_prefix(demo, 0.5, scn)
    assert state.steps == k
    assert state.digest() == demo.steps[k - 1].digest


def test_replay_prefix_every_index(small_demo):
    scn, demo = small_demo
    for k in range(demo.length + 1):
        state = replay_prefix(demo, k / demo.length, scn)
        if k > 0:
            assert state.digest() == demo.steps[k - 1].digest


def test_monotone_prefix_containment(small_demo):
    # an earlier prefix state, advanced along the recorded commands, passes
    # through every later prefix state
    scn, demo = small_demo
    k1, k2 = demo.length // 4, demo.length // 2
    state = replay_prefix(demo, k1 / demo.length, scn)
    for s in demo.steps[k1:k2]:
        state, _, _ = step(state, s.command)
    assert state.digest() == replay_prefix(demo, k2 / demo.length, scn).digest()


def test_prefix_cache_matches_direct_replay(small_demo):
    scn, demo = small_demo
    cache = PrefixCache(demo, scn)
    for k in (0, 1, demo.length // 2, demo.length):
        f = k / demo.length
        assert cache.state_at(f).digest() == replay_prefix(demo, f, scn).digest()


def test_suffix_score(small_demo):
    _, demo = small_demo
    assert demo.suffix_score(0.0) == demo.total_score
    assert demo.suffix_score(1.0) == 0
    start = math.floor(0.5 * demo.length)
    assert demo.suffix_score(0.5) == sum(s.reward for s in demo.steps[start:])


def test_wrong_scenario_rejected(small_demo):
    _, demo = small_demo
    other = make_mini_scenario(max_steps=26)
    with pytest.raises(IntegrityError, match="different scenario"):
        replay_prefix(demo, 0.5, other)


def test_record_episode_runaway_guard():
    scn = make_mini_scenario(max_steps=50)
    with pytest.raises(RecordingError, match="exceeded"):
        record_episode(scn, 0, lambda s, i: NOOP, max_steps=5)
