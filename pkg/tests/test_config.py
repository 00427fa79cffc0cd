import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slice_reserve.config import (
    CostWeights,
    PlanningHorizon,
    ReservationDecision,
    ScenarioConfig,
    scenario_from_json,
    scenario_to_json,
)
from slice_reserve.geometry import ap_positions, coverage_shares, nearest_ap, nearest_ap_partition
from slice_reserve.rng import SeededStream, stream_bundle


def brute_owner(x, cfg):
    d2 = [(x - px) ** 2 + py ** 2 + pz ** 2 for px, py, pz in ap_positions(cfg)]
    return int(np.argmin(d2))


def owner_from_partition(x, parts):
    owners = [i for i, iv in enumerate(parts) if x in iv]
    assert len(owners) == 1, (x, owners)
    return owners[0]


def test_default_positions(cfg):
    assert ap_positions(cfg) == [(500.0, 0.0, 0.0), (1500.0, 0.0, 0.0), (1000.0, 0.0, 100.0)]


def test_bs_at_origin():
    cfg = ScenarioConfig(bs_positions_m=(0.0, 1500.0))
    assert ap_positions(cfg)[0] == (0.0, 0.0, 0.0)


def test_uav_on_ground():
    cfg = ScenarioConfig(uav_height_m=0.0)
    assert ap_positions(cfg)[2] == (1000.0, 0.0, 0.0)


def test_default_partition_matches_grid(cfg):
    parts = nearest_ap_partition(cfg)
    bs0, bs1, uav = parts
    assert (bs0.start, bs0.end) == (0.0, 760.0)
    assert (uav.start, uav.end) == (760.0, 1240.0)
    assert (bs1.start, bs1.end) == (1240.0, 2000.0)
    assert sum(p.length for p in parts) == 2000.0
    for x in range(0, 2001):
        assert owner_from_partition(float(x), parts) == brute_owner(float(x), cfg)


def test_tie_points_go_to_lower_index(cfg):
    # 760 m is equidistant (260 m) from BS0 and the UAV
    assert nearest_ap(760.0, cfg) == 0
    assert 760.0 in nearest_ap_partition(cfg)[0]
    assert 1240.0 in nearest_ap_partition(cfg)[1]


def test_single_ap():
    cfg = ScenarioConfig(bs_positions_m=(700.0,), uav_position_m=None)
    (iv,) = nearest_ap_partition(cfg)
    assert (iv.start, iv.end) == (0.0, 2000.0)
    assert coverage_shares(cfg) == [1.0]


def test_colocated_aps_tie_to_index_zero():
    cfg = ScenarioConfig(bs_positions_m=(1000.0,), uav_position_m=1000.0, uav_height_m=0.0)
    parts = nearest_ap_partition(cfg)
    assert parts[1].empty
    for x in range(0, 2001, 10):
        assert float(x) in parts[0]


@st.composite
def scenarios(draw):
    L = draw(st.integers(200, 3000))
    bs = sorted(draw(st.sets(st.integers(0, L), min_size=0, max_size=4)))
    with_uav = draw(st.booleans()) or not bs
    uav = draw(st.integers(0, L)) if with_uav else None
    h = draw(st.integers(0, 300))
    return ScenarioConfig(highway_length_m=float(L), bs_positions_m=tuple(float(b) for b in bs),
                          uav_position_m=None if uav is None else float(uav), uav_height_m=float(h))


@given(scenarios())
@settings(max_examples=60, deadline=None)
def test_partition_property(cfg):
    parts = nearest_ap_partition(cfg)
    assert len(parts) == cfg.n_aps
    assert sum(max(p.length, 0.0) for p in parts) == pytest.approx(cfg.highway_length_m)
    for x in range(0, int(cfg.highway_length_m) + 1):
        assert owner_from_partition(float(x), parts) == brute_owner(float(x), cfg)


def test_stream_determinism():
    a = SeededStream(42, "noise").normal(size=1000)
    b = SeededStream(42, "noise").normal(size=1000)
    assert a.tobytes() == b.tobytes()


def test_distinct_streams_differ_and_look_independent():
    a = SeededStream(42, "noise").normal(size=20000)
    b = SeededStream(42, "replay").normal(size=20000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03


def test_bundle_labels():
    b = stream_bundle(7)
    assert {"trace", "init", "noise", "replay", "des"} <= set(b)


def test_seed_range():
    with pytest.raises(ValueError):
        SeededStream(-1, "x")
    SeededStream(2**64 - 1, "x").uniform()


def test_scenario_round_trip(cfg):
    assert scenario_from_json(scenario_to_json(cfg)) == cfg
    other = dataclasses.replace(cfg, reserve_at_uav=False, bs_positions_m=(100.0, 900.0))
    assert scenario_from_json(scenario_to_json(other)) == other


@pytest.mark.parametrize("kw", [
    dict(bs_positions_m=(1500.0, 500.0)),
    dict(bs_positions_m=(500.0, 500.0)),
    dict(bs_positions_m=(2500.0,)),
    dict(task_size_bits=0.0),
    dict(max_vms=0),
    dict(delay_scope="p99"),
])
def test_invalid_scenarios(kw):
    with pytest.raises(ValueError):
        ScenarioConfig(**kw)


def test_weights_and_horizon_defaults():
    assert CostWeights() == CostWeights(1.0, 20.0, 200.0)
    with pytest.raises(ValueError):
        CostWeights(w_r=-1.0)
    h = PlanningHorizon()
    assert (h.windows_per_episode, h.window_duration_s, h.slots_per_window) == (24, 3600.0, 36000)
    with pytest.raises(ValueError):
        PlanningHorizon(operation_slot_s=0.7)


def test_decision_validation(cfg):
    ReservationDecision.from_pairs([(1, 1), (20, 20), (3, 2)]).validate(cfg)
    with pytest.raises(ValueError):
        ReservationDecision.from_pairs([(0, 1), (1, 1), (1, 1)]).validate(cfg)
    with pytest.raises(ValueError):
        ReservationDecision.from_pairs([(1, 21), (1, 1), (1, 1)]).validate(cfg)
    with pytest.raises(ValueError):
        ReservationDecision.from_pairs([(1, 1)]).validate(cfg)
