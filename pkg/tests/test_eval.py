import numpy as np
import pytest

from wadirl.errors import UsageError
from wadirl.evaluate import (
    ROW_BLUE_CASUALTIES,
    ROW_RED_CASUALTIES,
    EvalReport,
    compare,
    demo_report,
    evaluate,
    run_greedy_episode,
)
from wadirl.policy import init_params
from wadirl.scenario import BLUE_COALITIONS, DISPLAY_NAMES, SIDE_BLUE, SIDE_RED
from wadirl.sim import EVENT_BLUE_DESTROYED, EVENT_RED_DESTROYED, ObsMode
from wadirl.training import TrainConfig


def _params_for(scenario, mode=ObsMode.VECTOR, seed=0, zero_heads=False):
    cfg = TrainConfig(condition="trad-vector" if mode == ObsMode.VECTOR else "trad-image")
    params = init_params(cfg.arch_spec(scenario), np.random.default_rng(seed))
    if zero_heads:
        for name in ("coalition", "action", "x_bin", "y_bin"):
            params.arrays[f"head.{name}.W"][:] = 0.0
            params.arrays[f"head.{name}.b"][:] = 0.0
    return params


def test_noop_policy_out_of_contact_is_inert(scenario):
    # zeroed heads make greedy action argmax = (coalition 0, NoOp, 0, 0)
    params = _params_for(scenario, zero_heads=True)
    report = evaluate(params, scenario, n=2, seed=0)
    assert report.blue_casualties == 0.0
    assert report.red_casualties == 0.0
    assert report.win_rate == 0.0
    assert report.mean_reward == 0.0
    for c in BLUE_COALITIONS:
        assert report.distance[c] == 0.0
        assert report.health_pct[c] == 100.0


def test_requires_at_least_one_rollout(scenario):
    params = _params_for(scenario)
    with pytest.raises(UsageError):
        evaluate(params, scenario, n=0, seed=0)


def test_casualties_match_event_log_recount(scenario):
    params = _params_for(scenario, seed=3)
    n, seed = 4, 11
    report = evaluate(params, scenario, n=n, seed=seed)
    blue, red, rewards = [], [], []
    for i in range(n):
        state, total = run_greedy_episode(params, scenario, seed + i)
        kinds = [k for _, k, _ in state.event_log]
        blue.append(kinds.count(EVENT_BLUE_DESTROYED))
        red.append(kinds.count(EVENT_RED_DESTROYED))
        rewards.append(total)
        assert state.casualties(SIDE_BLUE) == blue[-1]
        assert state.casualties(SIDE_RED) == red[-1]
    assert report.blue_casualties == pytest.approx(np.mean(blue))
    assert report.red_casualties == pytest.approx(np.mean(red))
    assert report.mean_reward == pytest.approx(np.mean(rewards))


def test_evaluate_deterministic(scenario):
    params = _params_for(scenario, seed=5)
    r1 = evaluate(params, scenario, n=3, seed=2)
    r2 = evaluate(params, scenario, n=3, seed=2)
    assert r1 == r2


def test_default_rollout_count_is_one_hundred(scenario):
    import inspect

    assert inspect.signature(evaluate).parameters["n"].default == 100


def test_health_pct_uses_full_roster(scenario, demo):
    # the reference demo loses the scout; a wiped single-unit coalition reads 0
    human = demo_report(demo, scenario)
    assert human.health_pct["scouts"] == 0.0
    assert 0.0 <= min(human.health_pct.values())
    assert max(human.health_pct.values()) <= 100.0


def test_demo_report_matches_recorded_score(scenario, demo):
    human = demo_report(demo, scenario)
    assert human.rollouts == 1
    assert human.mean_reward == demo.total_score
    assert human.red_casualties == 6.0
    assert human.blue_casualties == 2.0


def test_compare_structure_matches_reference_tables(scenario, demo):
    params = _params_for(scenario, seed=7)
    report = evaluate(params, scenario, n=2, seed=0)
    text, sections = compare([("trad-vector", report)], demo=demo, scenario=scenario)
    assert list(sections) == [
        "Average casualties for each force",
        "Average distance travelled for each coalition",
        "Average health percentage remaining for each coalition",
    ]
    casualties = sections["Average casualties for each force"]
    assert list(casualties) == [ROW_BLUE_CASUALTIES, ROW_RED_CASUALTIES]
    assert list(casualties[ROW_BLUE_CASUALTIES]) == ["Human Demonstration", "trad-vector"]
    for section_name in list(sections)[1:]:
        assert list(sections[section_name]) == [DISPLAY_NAMES[c] for c in BLUE_COALITIONS]
    assert "Human Demonstration" in text


def test_compare_same_report_twice_identical_columns(scenario):
    params = _params_for(scenario, seed=7)
    report = evaluate(params, scenario, n=2, seed=0)
    _, sections = compare([("a", report), ("b", report)])
    for rows in sections.values():
        for cells in rows.values():
            assert cells["a"] == cells["b"]


def test_compare_single_report_without_demo(scenario):
    params = _params_for(scenario, seed=1)
    report = evaluate(params, scenario, n=1, seed=0)
    _, sections = compare([("only", report)])
    cols = list(sections["Average casualties for each force"][ROW_BLUE_CASUALTIES])
    assert cols == ["only"]


def test_compare_needs_input():
    with pytest.raises(UsageError):
        compare([])
