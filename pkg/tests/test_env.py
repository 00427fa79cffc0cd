import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slice_reserve.config import CostWeights, PlanningHorizon, ReservationDecision, ScenarioConfig
from slice_reserve.env import (
    ReservationEnv,
    WindowCostBreakdown,
    action_to_decision,
    decision_to_action,
    episode_report,
    reconfiguration_cost,
    reservation_cost,
    rollout,
    violation_penalty,
    window_cost,
)
from slice_reserve.rng import SeededStream
from slice_reserve.traffic import TrafficWindow, synth_diurnal

D = ReservationDecision.from_pairs


def test_reservation_cost(cfg):
    assert reservation_cost(D([(3, 1)] * 3), cfg) == 12
    assert reservation_cost(D([(1, 1)] * 3), cfg) == 6
    dear = dataclasses.replace(cfg, unit_price_subcarrier=2.0, unit_price_vm=2.0)
    assert reservation_cost(D([(3, 1)] * 3), dear) == 24


def test_reconfiguration_cost():
    assert reconfiguration_cost(D([(3, 2)]), D([(5, 1)])) == 3
    assert reconfiguration_cost(D([(3, 2)] * 3), D([(3, 2)] * 3)) == 0
    with pytest.raises(ValueError):
        reconfiguration_cost(D([(1, 1)]), D([(1, 1)] * 2))


@given(st.lists(st.tuples(st.integers(1, 20), st.integers(1, 20)), min_size=3, max_size=3),
       st.lists(st.tuples(st.integers(1, 20), st.integers(1, 20)), min_size=3, max_size=3))
def test_reconfiguration_symmetric(a, b):
    assert reconfiguration_cost(D(a), D(b)) == reconfiguration_cost(D(b), D(a))


def test_violation_penalty(cfg):
    w10 = TrafficWindow.from_rates([10.0] * 3)
    assert violation_penalty(D([(3, 2)] * 3), w10, cfg) == 0
    assert violation_penalty(D([(1, 1)] * 3), w10, cfg) == 3
    w0 = TrafficWindow.from_rates([0.0] * 3)
    assert violation_penalty(D([(1, 1)] * 3), w0, cfg) == 3  # 0.12 s bare service
    assert violation_penalty(D([(1, 2)] * 3), w0, cfg) == 3  # extra VM does not shorten service
    assert violation_penalty(D([(2, 1)] * 3), w0, cfg) == 0  # 0.03 + 0.06


def test_penalty_modes(cfg):
    w10 = TrafficWindow.from_rates([10.0] * 3)
    per_window = dataclasses.replace(cfg, penalty_mode="per_window")
    assert violation_penalty(D([(1, 1)] * 3), w10, per_window) == 1
    prop = dataclasses.replace(cfg, penalty_mode="proportional")
    # (2,2) at 10/s: 1/23.33 + 0.0659 ~ 0.1088, i.e. 8.8% over
    p = violation_penalty(D([(2, 2)] * 3), w10, prop)
    assert 0 < p < 3 * 0.1


def test_window_cost_weights(cfg, weights):
    b = WindowCostBreakdown.assemble(12.0, 3.0, 0.0, weights)
    assert b.weighted_total == 72.0
    assert WindowCostBreakdown.assemble(0.0, 0.0, 0.0, weights).weighted_total == 0.0
    assert WindowCostBreakdown.assemble(12.0, 3.0, 1.0, weights).weighted_total == 272.0


def test_window_cost_components(cfg, weights):
    w = TrafficWindow.from_rates([10.0] * 3)
    b = window_cost(D([(1, 1)] * 3), D([(3, 2), (3, 2), (1, 1)]), w, weights, cfg)
    assert (b.c_r, b.c_s, b.c_d) == (12.0, 6.0, 1.0)
    assert b.weighted_total == 12 + 120 + 200


def test_action_mapping(cfg):
    lo, _ = action_to_decision(-np.ones(6), cfg)
    hi, _ = action_to_decision(np.ones(6), cfg)
    mid, _ = action_to_decision(np.zeros(6), cfg)
    assert lo == D([(1, 1)] * 3)
    assert hi == D([(20, 20)] * 3)
    assert mid == D([(11, 11)] * 3)  # round(10.5) away from zero


def test_action_clamping_counted(cfg):
    d, n = action_to_decision([-3, 2, 0, 0, 0, 0], cfg)
    assert n == 2
    assert d[0].n_subcarriers == 1 and d[0].n_vms == 20
    with pytest.raises(ValueError):
        action_to_decision(np.zeros(5), cfg)


def test_action_surjective(cfg):
    for s, v in itertools.product(range(1, 21), repeat=2):
        d = D([(s, v)] * 3)
        assert action_to_decision(decision_to_action(d, cfg), cfg)[0] == d


def test_frozen_uav(cfg):
    c = dataclasses.replace(cfg, reserve_at_uav=False)
    d, _ = action_to_decision(np.ones(6), c)
    assert d[2].n_subcarriers == 1 and d[2].n_vms == 1
    assert d[0].n_subcarriers == 20


@pytest.fixture
def day(cfg):
    return synth_diurnal(48, 5, 60, 3.0, SeededStream(0, "trace"), cfg)


def test_reset(cfg, day):
    env = ReservationEnv(day, cfg)
    s = env.reset(0)
    assert s.prev_decision == (1 / 20,) * 6
    assert s == env.reset(0)
    assert len(s.as_array()) == env.state_dim == 11
    with pytest.raises(ValueError):
        env.reset(30)  # 30 + 24 > 48


def test_episode_length_and_rewards(cfg, weights, day):
    env = ReservationEnv(day, cfg, weights)
    env.reset(0)
    rng = np.random.default_rng(0)
    steps = 0
    while True:
        tr, _ = env.step(rng.uniform(-1, 1, 6))
        steps += 1
        b = tr.breakdown
        assert b.weighted_total == weights.w_r * b.c_r + weights.w_s * b.c_s + weights.w_d * b.c_d
        assert tr.reward == -b.weighted_total / 100.0
        assert tr.reward <= 0
        if tr.terminal:
            break
    assert steps == PlanningHorizon().windows_per_episode == 24
    with pytest.raises(RuntimeError):
        env.step(np.zeros(6))


def test_state_ranges(cfg, day):
    env = ReservationEnv(day, cfg, vehicle_scale=(10.0, 10.0, 10.0))
    s = env.reset(0)
    rng = np.random.default_rng(1)
    for _ in range(24):
        arr = s.as_array()
        assert np.all(arr[:9] >= 0) and np.all(arr[:9] <= 1)
        assert np.all(np.abs(arr[9:]) <= 1)
        _, s = env.step(rng.uniform(-1.5, 1.5, 6))
    assert env.n_clamped > 0


def test_rollout_matches_episode_report(cfg, weights, day):
    env = ReservationEnv(day, cfg, weights)
    rep = rollout(lambda s: np.full(6, -0.7), env, 24)
    again = episode_report(rep.decisions, day, cfg, weights, start=24)
    assert rep.window_totals == again.window_totals
    assert rep.total == sum(rep.window_totals)
    assert rep.cumulative[-1] == pytest.approx(rep.total)
