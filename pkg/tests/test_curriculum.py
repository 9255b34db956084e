import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from wadirl.curriculum import (
    CurriculumConfig,
    CurriculumState,
    SharedCurriculum,
    human_reference_score,
    report_episode,
    sample_start,
)
from wadirl.errors import UsageError


class _FixedNormal:
    """Stand-in generator returning a scripted standard-normal draw."""

    def __init__(self, value):
        self.value = value

    def standard_normal(self):
        return self.value


def test_defaults_match_stated_parameters():
    cur = CurriculumState()
    assert cur.mean == pytest.approx(0.95)
    assert cur.config.std == pytest.approx(1.0 / 6.0)
    assert cur.config.rollback == pytest.approx(0.20)
    assert cur.config.required_episodes == 50


def test_degenerate_std_returns_mean():
    cur = CurriculumState(config=CurriculumConfig(std=0.0))
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert sample_start(cur, rng) == pytest.approx(0.95)


def test_raw_draw_above_one_clips():
    cur = CurriculumState()
    raw = (1.12 - cur.mean) / cur.config.std
    assert sample_start(cur, _FixedNormal(raw)) == 1.0
    low = (-0.2 - cur.mean) / cur.config.std
    assert sample_start(cur, _FixedNormal(low)) == 0.0


def clipped_normal_mean(mu, sigma):
    """Oracle: numerically integrate the mean of clip(N(mu, sigma), 0, 1)."""
    pdf = lambda x: stats.norm.pdf(x, mu, sigma)  # noqa: E731
    middle, _ = integrate.quad(lambda x: x * pdf(x), 0.0, 1.0)
    upper_mass = 1.0 - stats.norm.cdf(1.0, mu, sigma)
    return middle + upper_mass  # lower clip contributes 0


def test_clipped_sample_mean_matches_integration_oracle():
    cur = CurriculumState()
    rng = np.random.default_rng(42)
    n = 10_000
    draws = np.array([sample_start(cur, rng) for _ in range(n)])
    expected = clipped_normal_mean(cur.mean, cur.config.std)
    se = draws.std(ddof=1) / np.sqrt(n)
    assert abs(draws.mean() - expected) < 3 * se


def test_promotion_after_exactly_fifty():
    cur = CurriculumState()
    for i in range(49):
        report_episode(cur, agent_score=100, human_score=100)
        assert cur.mean == pytest.approx(0.95), f"promoted early at {i}"
    report_episode(cur, agent_score=100, human_score=100)
    assert cur.mean == pytest.approx(0.75)
    assert cur.qualifying_count == 0
    assert cur.promotions == 1


def test_non_qualifying_reports_leave_state_unchanged():
    cur = CurriculumState()
    for _ in range(200):
        report_episode(cur, agent_score=50, human_score=100)  # below 0.9 ratio
    assert cur.mean == pytest.approx(0.95)
    assert cur.qualifying_count == 0
    assert cur.promotions == 0


def test_qualification_threshold_is_score_ratio():
    cur = CurriculumState()
    report_episode(cur, agent_score=90, human_score=100)  # exactly 0.9x qualifies
    assert cur.qualifying_count == 1
    report_episode(cur, agent_score=89.999, human_score=100)
    assert cur.qualifying_count == 1


def test_floor_at_zero():
    cur = CurriculumState(mean=0.15)
    for _ in range(50):
        report_episode(cur, 100, 100)
    assert cur.mean == 0.0
    assert not cur.complete


def test_completion_requires_quota_at_zero():
    cur = CurriculumState(mean=0.0)
    for i in range(49):
        report_episode(cur, 100, 100)
        assert not cur.complete
    report_episode(cur, 100, 100)
    assert cur.complete
    assert cur.mean == 0.0
    with pytest.raises(UsageError):
        report_episode(cur, 100, 100)
    with pytest.raises(UsageError):
        sample_start(cur, np.random.default_rng(0))


def test_full_rollback_schedule():
    cur = CurriculumState()
    seen = [cur.mean]
    while not cur.complete:
        report_episode(cur, 100, 100)
        if cur.mean != seen[-1]:
            seen.append(cur.mean)
    assert seen == pytest.approx([0.95, 0.75, 0.55, 0.35, 0.15, 0.0])
    assert cur.promotions == 6  # five rollbacks plus the completing quota


@settings(max_examples=50, deadline=None)
@given(
    mean=st.floats(0.0, 1.0),
    std=st.floats(0.0, 1.0),
    seed=st.integers(0, 2**31 - 1),
)
def test_samples_always_in_unit_interval(mean, std, seed):
    cur = CurriculumState(config=CurriculumConfig(std=std), mean=mean)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        assert 0.0 <= sample_start(cur, rng) <= 1.0


@settings(max_examples=30, deadline=None)
@given(qualifying=st.lists(st.booleans(), min_size=0, max_size=400))
def test_mean_is_non_increasing_step_function(qualifying):
    cur = CurriculumState()
    prev = cur.mean
    for ok in qualifying:
        if cur.complete:
            break
        report_episode(cur, 100 if ok else 0, 100)
        assert cur.mean <= prev
        if cur.mean != prev:
            assert prev - cur.mean == pytest.approx(min(cur.config.rollback, prev))
        prev = cur.mean
        assert cur.mean == pytest.approx(
            max(0.0, cur.config.initial_mean - cur.promotions * cur.config.rollback)
        )


def test_human_reference_is_suffix_score(demo):
    assert human_reference_score(demo, 0.0) == demo.total_score
    assert human_reference_score(demo, 1.0) == 0
    assert human_reference_score(demo, 0.5) == demo.suffix_score(0.5)


def test_shared_curriculum_serializes_reports():
    shared = SharedCurriculum(CurriculumState())
    rng = np.random.default_rng(0)
    f, mean = shared.sample_start(rng)
    assert 0.0 <= f <= 1.0 and mean == pytest.approx(0.95)
    promoted = False
    for _ in range(50):
        promoted, new_mean, complete = shared.report_episode(100, 100)
    assert promoted and new_mean == pytest.approx(0.75) and not complete
    snap = shared.snapshot()
    assert snap.promotions == 1
