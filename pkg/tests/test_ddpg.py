import itertools

import numpy as np
import pytest
from scipy import stats

from slice_reserve.config import CostWeights, PlanningHorizon, ReservationDecision, ScenarioConfig
from slice_reserve.ddpg import (
    AgentConfig,
    DdpgAgent,
    NumericalAbort,
    ReplayBuffer,
    TrainingLog,
    act,
    critic_target,
    evaluate,
    load_actor,
    train,
)
from slice_reserve.env import ReservationEnv, decision_to_action, rollout, window_cost
from slice_reserve.myopic import myopic_decide, myopic_episode
from slice_reserve.rng import SeededStream, stream_bundle
from slice_reserve.traffic import TrafficTrace, TrafficWindow, synth_diurnal

CFG = ScenarioConfig()


def small_agent(seed=0, **kw):
    conf = AgentConfig(**{"warmup_steps": 48, "batch_size": 16, "buffer_capacity": 1000, **kw})
    return DdpgAgent(11, 6, conf, SeededStream(seed, "init"))


@pytest.fixture(scope="module")
def week():
    return synth_diurnal(24 * 7, 5, 60, 3.0, SeededStream(0, "trace"), CFG)


def test_config_invariants():
    with pytest.raises(ValueError):
        AgentConfig(tau=0.0)
    with pytest.raises(ValueError):
        AgentConfig(gamma=1.0)
    with pytest.raises(ValueError):
        AgentConfig(batch_size=10, buffer_capacity=5)
    c = AgentConfig()
    assert (c.actor_lr, c.critic_lr) == (2e-4, 2e-3)
    assert c.noise_sd(0) == 0.3 and c.noise_sd(3000) == 0.01 and c.noise_sd(4999) == 0.01
    assert c.noise_sd(1500) == pytest.approx(0.155)


def test_act_modes():
    ag = small_agent()
    s = np.linspace(0, 1, 11)
    a1, a2 = ag.act(s), ag.act(s)
    assert np.array_equal(a1, a2)
    assert np.array_equal(act(ag.actor, ag.actor_spec, s, 0.0, SeededStream(0, "n"), "train"), a1)
    noisy = act(ag.actor, ag.actor_spec, s, 50.0, SeededStream(0, "n"), "train")
    assert np.all(np.abs(noisy) <= 1.0) and np.any(np.abs(noisy) == 1.0)


def test_critic_target_cases():
    ag = small_agent()
    s2 = np.random.default_rng(0).uniform(size=(5, 11))
    r = np.arange(5.0)
    y = critic_target(ag.critic_target, ag.critic_spec, ag.actor_target, ag.actor_spec, r, s2, np.ones(5), 0.9)
    assert np.array_equal(y, r)
    y = critic_target(ag.critic_target, ag.critic_spec, ag.actor_target, ag.actor_spec, r, s2, np.zeros(5), 0.0)
    assert np.array_equal(y, r)
    zero = ag.critic_target.zeros_like()
    y = critic_target(zero, ag.critic_spec, ag.actor_target, ag.actor_spec, r, s2, np.zeros(5), 0.9)
    assert np.array_equal(y, r)


def test_train_step_full_copy_with_tau_one():
    ag = small_agent(tau=1.0)
    rng = np.random.default_rng(1)
    batch = (rng.uniform(size=(16, 11)), rng.uniform(-1, 1, (16, 6)), -rng.uniform(size=16),
             rng.uniform(size=(16, 11)), np.zeros(16))
    diag = ag.train_step(batch)
    assert diag["trained"]
    assert np.array_equal(ag.actor_target.flat(), ag.actor.flat())
    assert np.array_equal(ag.critic_target.flat(), ag.critic.flat())


def test_soft_update_exact():
    ag = small_agent(tau=0.25)
    before = ag.critic_target.copy()
    rng = np.random.default_rng(1)
    batch = (rng.uniform(size=(16, 11)), rng.uniform(-1, 1, (16, 6)), -rng.uniform(size=16),
             rng.uniform(size=(16, 11)), np.zeros(16))
    ag.train_step(batch)
    for t, o, p in zip(ag.critic_target.arrays(), ag.critic.arrays(), before.arrays()):
        assert np.array_equal(t, (1 - 0.25) * p + 0.25 * o)


def test_exact_fit_critic_has_zero_loss():
    ag = small_agent()
    zero = ag.critic.zeros_like()
    zero.biases[-1][:] = -0.7
    ag.critic = zero
    s = np.full((16, 11), 0.2)
    batch = (s, np.zeros((16, 6)), np.full(16, -0.7), s, np.ones(16))
    assert ag.train_step(batch)["critic_loss"] == 0.0


def test_no_training_before_warmup():
    ag = small_agent(warmup_steps=100)
    diag = ag.train_step(stream=SeededStream(0, "replay"))
    assert diag["trained"] is False


def test_non_finite_loss_leaves_parameters_and_aborts(week, tmp_path):
    ag = small_agent()
    before = ag.critic.flat().copy()
    s = np.zeros((16, 11))
    diag = ag.train_step((s, np.zeros((16, 6)), np.full(16, -np.inf), s, np.ones(16)))
    assert not np.isfinite(diag["critic_loss"])
    assert np.array_equal(ag.critic.flat(), before)

    env = ReservationEnv(week, CFG, reward_scale=1e-320)
    with pytest.raises(NumericalAbort) as e:
        train(small_agent(), env, stream_bundle(0), episodes=5, abort_dir=tmp_path)
    assert e.value.checkpoint == tmp_path / "checkpoint_abort.json"
    assert load_actor(e.value.checkpoint)[2]["reason"] == "non-finite critic loss"


def test_replay_ring():
    buf = ReplayBuffer(5, 2, 1)
    for i in range(8):
        buf.add([i, i], [0.0], -i, [i, i], False)
    assert len(buf) == 5
    assert sorted(buf.rewards) == [-7, -6, -5, -4, -3]
    s, a, r, s2, d = buf.sample(20, SeededStream(0, "r"))
    assert s.shape == (20, 2) and r.shape == (20,)


def test_replay_uniformity():
    buf = ReplayBuffer(100, 1, 1)
    for i in range(100):
        buf.add([i], [0.0], 0.0, [i], False)
    idx = buf.sample_indices(100_000, SeededStream(0, "replay"))
    counts = np.bincount(idx, minlength=100)
    assert stats.chisquare(counts).pvalue > 0.01


def test_train_zero_episodes(week):
    env = ReservationEnv(week, CFG)
    log = train(small_agent(), env, stream_bundle(0), episodes=0)
    assert log.cum_costs == [] and log.moving_avg == []


def _run(week, episodes, seed=3):
    env = ReservationEnv(week, CFG)
    val = ReservationEnv(week.slice(0, 24), CFG)
    ag = small_agent(seed, eval_every=5)
    return train(ag, env, stream_bundle(seed), episodes, range(0, 24 * 7 - 23, 24), val, keep_breakdowns=True), ag


def test_training_log_shape_and_determinism(week, tmp_path):
    log1, _ = _run(week, 12)
    log2, _ = _run(week, 12)
    assert len(log1.cum_costs) == 12
    assert len(log1.moving_avg) == 12 - 4
    assert log1.moving_avg[0] == pytest.approx(np.mean(log1.cum_costs[:5]))
    log1.write_csv(tmp_path / "a.csv")
    log2.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "episode,cum_cost,moving_avg,critic_loss_mean,noise_sd"
    assert all(r.split(",")[2] == "" for r in rows[1:5])
    assert rows[5].split(",")[2] != ""
    for cost, bds in zip(log1.cum_costs, log1.window_breakdowns):
        assert cost == sum(b.weighted_total for b in bds)
    assert log1.best_actor is not None


def test_moving_average_lengths():
    for n in range(8):
        log = TrainingLog(cum_costs=[float(i) for i in range(n)])
        assert len(log.moving_avg) == max(0, n - 4)


def test_myopic_policy_through_env_matches_myopic(week):
    env = ReservationEnv(week, CFG)
    day = week.slice(24, 24)
    expected = myopic_episode(day, CFG)
    decisions = iter(myopic_decide(w, CFG).decision for w in day.windows)
    rep = rollout(lambda s: decision_to_action(next(decisions), CFG), env, 24)
    assert rep.total == expected.total
    assert rep.window_totals == expected.window_totals


def test_evaluate_ignores_noise_settings(week):
    a = small_agent(5, noise_sd_initial=0.9)
    b = small_agent(5, noise_sd_initial=0.0, noise_sd_final=0.0)
    ra = evaluate(a.actor, a.actor_spec, week, CFG)
    rb = evaluate(b.actor, b.actor_spec, week, CFG)
    assert ra.window_totals == rb.window_totals
    assert ra.total == sum(ra.window_totals)


def test_checkpoint_round_trip(tmp_path):
    ag = small_agent()
    ag.save(tmp_path / "c.json", {"seed": 1})
    spec, actor, meta = load_actor(tmp_path / "c.json")
    assert spec == ag.actor_spec and meta == {"seed": 1}
    assert actor.flat().tobytes() == ag.actor.flat().tobytes()


# --- learning signal on a one-AP, one-window stationary problem


TOY_CFG = ScenarioConfig(bs_positions_m=(1000.0,), uav_position_m=None)
TOY_WINDOW = TrafficWindow.from_rates((10.0,))


def toy_optimum():
    prev = ReservationDecision.minimum(1)
    costs = sorted(
        (window_cost(prev, ReservationDecision.from_pairs([(s, v)]), TOY_WINDOW, CostWeights(), TOY_CFG).weighted_total, (s, v))
        for s, v in itertools.product(range(1, 21), repeat=2))
    assert costs[0][0] < costs[1][0], "toy optimum must be unique"
    return costs[0][1]


@pytest.mark.slow
def test_learns_stationary_optimum():
    best = toy_optimum()
    assert best == (3, 2)
    trace = TrafficTrace((TOY_WINDOW,), "toy")
    horizon = PlanningHorizon(windows_per_episode=1)
    hits = 0
    for seed in range(5):
        env = ReservationEnv(trace, TOY_CFG, horizon=horizon, vehicle_scale=(1.0,))
        # plain updates: the default critic L2 term needs far more than 2000 steps to resolve the cliff
        conf = AgentConfig(warmup_steps=200, noise_decay_episodes=1500, critic_weight_decay=0.0)
        ag = DdpgAgent(env.state_dim, env.action_dim, conf, SeededStream(seed, "init"))
        train(ag, env, stream_bundle(seed), episodes=2000)
        rep = rollout(lambda s: ag.act(s), env, 0)
        hits += rep.decisions[0].pairs() == [best]
    assert hits >= 4
