import pytest

from wadirl.errors import ConfigError, VersionError
from wadirl.scenario import (
    BLUE_COALITIONS,
    CELL_BRIDGE,
    CELL_WADI,
    default_scenario,
    loads_scenario,
)

from conftest import make_mini_scenario


def test_default_scenario_loads(scenario):
    assert scenario.terrain.width == 24 and scenario.terrain.height == 24
    assert scenario.target_bins == 3
    assert scenario.ticks_per_step == 4
    assert scenario.max_steps == 500
    assert len(scenario.spawns) == 14
    for c in BLUE_COALITIONS:
        assert scenario.coalition_units(c)


def test_content_hash_stable_across_loads(scenario):
    again = default_scenario()
    assert again.content_hash == scenario.content_hash


def test_bridges_lie_on_wadi_axis(scenario):
    t = scenario.terrain
    ys, xs = (t.cells == CELL_BRIDGE).nonzero()
    assert len(xs) > 0
    assert set(xs) == {t.wadi_axis}
    # and the rest of the axis column is wadi
    col = t.cells[:, t.wadi_axis]
    assert set(col) <= {CELL_WADI, CELL_BRIDGE}


def test_ground_spawn_on_wadi_rejected():
    with pytest.raises(ConfigError, match="wadi"):
        make_mini_scenario(spawns={"tanks": [(6, 2)]})  # x=6 is the wadi column


def test_air_may_overfly_but_wadi_stays_impassable():
    scn = make_mini_scenario()
    assert not scn.terrain.ground_passable[2, 6]
    assert scn.terrain.ground_passable[5, 6]  # bridge row


def test_spawn_out_of_bounds_rejected():
    with pytest.raises(ConfigError, match="out of bounds"):
        make_mini_scenario(spawns={"scouts": [(99, 0)]})


def test_missing_blue_coalition_rejected():
    with pytest.raises(ConfigError, match="missing \\['tanks'\\]"):
        make_mini_scenario(spawns={"tanks": []})


def test_future_schema_version_rejected():
    with pytest.raises(VersionError):
        loads_scenario("schema_version = 99\n")


def test_missing_schema_version_rejected():
    with pytest.raises(ConfigError, match="schema_version"):
        loads_scenario('name = "x"\n')


def test_unknown_terrain_char_rejected():
    bad = """
schema_version = 1
[rules]
ticks_per_step = 4
max_steps = 10
target_bins = 3
[terrain]
width = 2
height = 1
wadi_axis = 1
rows = ["?."]
[stats]
[spawn]
"""
    with pytest.raises(ConfigError):
        loads_scenario(bad)


def test_roster_cap_per_side():
    with pytest.raises(ConfigError, match="20 units"):
        make_mini_scenario(spawns={"red_infantry": [(11, y % 12) for y in range(21)]})


def test_ninth_geometry(scenario):
    assert scenario.ninth_center(0, 0) == (4.0, 4.0)
    assert scenario.ninth_center(1, 1) == (12.0, 12.0)
    assert scenario.ninth_rect(2, 1) == (16.0, 8.0, 24.0, 16.0)
