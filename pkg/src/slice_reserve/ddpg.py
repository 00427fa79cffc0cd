"""DDPG learner for planning-window reservations."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from slice_reserve.config import CostWeights, PlanningHorizon, ScenarioConfig
from slice_reserve.env import EpisodeCostReport, ReservationEnv, WindowCostBreakdown, rollout, step_log_rows
from slice_reserve.nn import (
    MlpSpec,
    OptimizerState,
    ParameterSet,
    backward,
    forward,
    init_params,
    optimizer_step,
    params_from_dict,
    params_to_dict,
    soft_update,
)
from slice_reserve.rng import SeededStream
from slice_reserve.traffic import TrafficTrace

TRAINING_LOG_HEADER = ("episode", "cum_cost", "moving_avg", "critic_loss_mean", "noise_sd")
AGENT_CHECKPOINT_FORMAT = "slice-reserve-ddpg/1"
MOVING_AVERAGE_POINTS = 5


class NumericalAbort(RuntimeError):
    def __init__(self, message: str, checkpoint: Optional[Path] = None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class AgentConfig:
    actor_lr: float = 2e-4
    critic_lr: float = 2e-3
    gamma: float = 0.9
    tau: float = 0.01
    batch_size: int = 64
    buffer_capacity: int = 100_000
    noise_sd_initial: float = 0.3
    noise_sd_final: float = 0.01
    noise_decay_episodes: int = 3000
    warmup_steps: int = 500
    episodes: int = 5000
    hidden_sizes: tuple[int, ...] = (128, 64)
    reward_scale: float = 100.0
    eval_every: int = 25
    critic_weight_decay: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 1 <= self.batch_size <= self.buffer_capacity:
            raise ValueError("need 1 <= batch_size <= buffer_capacity")
        if self.episodes < 0 or self.warmup_steps < 0 or self.noise_decay_episodes < 0:
            raise ValueError("episode and step counts must be >= 0")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")

    def noise_sd(self, episode: int) -> float:
        """Linear decay from the initial to the final sd over ``noise_decay_episodes``."""
        if self.noise_decay_episodes == 0 or episode >= self.noise_decay_episodes:
            return self.noise_sd_final
        frac = episode / self.noise_decay_episodes
        return self.noise_sd_initial + frac * (self.noise_sd_final - self.noise_sd_initial)

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown keys in [agent]: {sorted(unknown)}")
        return cls(**d)


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def add(self, state, action, reward, next_state, terminal) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = float(terminal)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_transition(self, tr) -> None:
        self.add(tr.state.as_array(), tr.action, tr.reward, tr.next_state.as_array(), tr.terminal)

    def sample_indices(self, batch_size: int, stream: SeededStream) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return stream.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, stream: SeededStream):
        idx = self.sample_indices(batch_size, stream)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.terminals[idx])


def act(params_actor: ParameterSet, spec: MlpSpec, state, noise_sd: float = 0.0,
        stream: Optional[SeededStream] = None, mode: str = "eval") -> np.ndarray:
    a = forward(params_actor, spec, state)
    if not np.all(np.isfinite(a)):
        raise NumericalAbort("actor produced a non-finite action")
    if mode == "eval" or noise_sd == 0.0:
        return a
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return np.clip(a + stream.normal(0.0, noise_sd, size=a.shape), -1.0, 1.0)


def critic_target(params_critic_target: ParameterSet, critic_spec: MlpSpec,
                  params_actor_target: ParameterSet, actor_spec: MlpSpec,
                  reward, next_state, terminal, gamma: float):
    """Bellman target ``r + gamma * (1 - terminal) * Q'(s', mu'(s'))``; works on batches."""
    a2 = forward(params_actor_target, actor_spec, next_state)
    q2 = forward(params_critic_target, critic_spec, np.concatenate([next_state, a2], axis=-1))
    q2 = q2[..., 0]
    return reward + gamma * (1.0 - np.asarray(terminal, dtype=float)) * q2


class DdpgAgent:
    def __init__(self, state_dim: int, action_dim: int, config: AgentConfig = AgentConfig(),
                 init_stream: Optional[SeededStream] = None):
        self.config = config
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.actor_spec = MlpSpec((state_dim, *config.hidden_sizes, action_dim), "relu", "tanh")
        self.critic_spec = MlpSpec((state_dim + action_dim, *config.hidden_sizes, 1), "relu", "identity")
        init_stream = init_stream or SeededStream(0, "init")
        self.actor = init_params(self.actor_spec, init_stream)
        self.critic = init_params(self.critic_spec, init_stream)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = OptimizerState.for_params(self.actor, config.actor_lr)
        self.critic_opt = OptimizerState.for_params(self.critic, config.critic_lr)
        self.buffer = ReplayBuffer(config.buffer_capacity, state_dim, action_dim)
        self.steps_seen = 0

    def act(self, state, noise_sd=0.0, stream=None, mode="eval") -> np.ndarray:
        return act(self.actor, self.actor_spec, state, noise_sd, stream, mode)

    def observe(self, tr) -> None:
        self.buffer.add_transition(tr)
        self.steps_seen += 1

    @property
    def ready(self) -> bool:
        return len(self.buffer) >= self.config.batch_size and self.steps_seen >= self.config.warmup_steps

    def train_step(self, batch=None, stream: Optional[SeededStream] = None) -> dict:
        """One critic and one actor update followed by soft target updates."""
        if batch is None:
            if not self.ready:
                return {"trained": False, "critic_loss": math.nan, "actor_objective": math.nan}
            batch = self.buffer.sample(self.config.batch_size, stream)
        s, a, r, s2, d = batch
        n = s.shape[0]
        cfg = self.config

        y = critic_target(self.critic_target, self.critic_spec, self.actor_target, self.actor_spec,
                          r, s2, d, cfg.gamma)
        sa = np.concatenate([s, a], axis=1)
        q, cache = forward(self.critic, self.critic_spec, sa, return_cache=True)
        resid = q[:, 0] - y
        critic_loss = float(np.mean(resid * resid))
        if not math.isfinite(critic_loss):
            # leave parameters untouched so the caller can checkpoint them
            return {"trained": True, "critic_loss": critic_loss, "actor_objective": math.nan}
        g_critic, _ = backward(self.critic, self.critic_spec, sa, (2.0 / n) * resid[:, None], cache)
        if cfg.critic_weight_decay:
            for g, w in zip(g_critic.weights, self.critic.weights):
                g += cfg.critic_weight_decay * w
        optimizer_step(self.critic_opt, self.critic, g_critic)

        a_pi, a_cache = forward(self.actor, self.actor_spec, s, return_cache=True)
        s_api = np.concatenate([s, a_pi], axis=1)
        q_pi, q_cache = forward(self.critic, self.critic_spec, s_api, return_cache=True)
        _, g_in = backward(self.critic, self.critic_spec, s_api, np.full((n, 1), -1.0 / n), q_cache)
        g_actor, _ = backward(self.actor, self.actor_spec, s, g_in[:, self.state_dim:], a_cache)
        optimizer_step(self.actor_opt, self.actor, g_actor)

        soft_update(self.critic_target, self.critic, cfg.tau)
        soft_update(self.actor_target, self.actor, cfg.tau)
        return {"trained": True, "critic_loss": critic_loss, "actor_objective": float(np.mean(q_pi))}

    # -- checkpoints -----------------------------------------------------------------

    def to_dict(self, meta: Optional[dict] = None) -> dict:
        return {
            "format": AGENT_CHECKPOINT_FORMAT,
            "actor": params_to_dict(self.actor_spec, self.actor),
            "critic": params_to_dict(self.critic_spec, self.critic),
            "meta": meta or {},
        }

    def save(self, path, meta: Optional[dict] = None, actor: Optional[ParameterSet] = None) -> None:
        d = self.to_dict(meta)
        if actor is not None:
            d["actor"] = params_to_dict(self.actor_spec, actor)
        Path(path).write_text(json.dumps(d), encoding="utf-8")


def load_actor(path) -> tuple[MlpSpec, ParameterSet, dict]:
    """Actor spec, parameters and metadata from an agent checkpoint."""
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("format") != AGENT_CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a DDPG checkpoint")
    spec, params = params_from_dict(d["actor"])
    return spec, params, d.get("meta", {})


# ----------------------------------------------------------------------------
# training loop


@dataclass
class TrainingLog:
    cum_costs: list[float] = field(default_factory=list)
    critic_losses: list[float] = field(default_factory=list)
    noise_sds: list[float] = field(default_factory=list)
    eval_points: list[tuple[int, float]] = field(default_factory=list)
    best_eval_cost: float = math.inf
    best_episode: int = -1
    best_actor: Optional[ParameterSet] = None
    window_breakdowns: Optional[list[list[WindowCostBreakdown]]] = None

    @property
    def moving_avg(self) -> list[float]:
        k = MOVING_AVERAGE_POINTS
        c = self.cum_costs
        return [sum(c[i - k + 1:i + 1]) / k for i in range(k - 1, len(c))]

    def rows(self):
        ma = self.moving_avg
        k = MOVING_AVERAGE_POINTS
        for i, (cost, loss, sd) in enumerate(zip(self.cum_costs, self.critic_losses, self.noise_sds)):
            yield (i, repr(cost), repr(ma[i - k + 1]) if i >= k - 1 else "",
                   "" if math.isnan(loss) else repr(loss), repr(sd))

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAINING_LOG_HEADER)
            w.writerows(self.rows())


def evaluate(params_actor: ParameterSet, actor_spec: MlpSpec, trace: TrafficTrace, cfg: ScenarioConfig,
             weights: CostWeights = CostWeights(), horizon: PlanningHorizon = PlanningHorizon(),
             vehicle_scale: Optional[Sequence[float]] = None, start: int = 0) -> EpisodeCostReport:
    """Noise-free rollout of the actor over one episode of ``trace``."""
    env = ReservationEnv(trace, cfg, weights, horizon, vehicle_scale=vehicle_scale)
    return rollout(lambda s: forward(params_actor, actor_spec, s), env, start)


def train(agent: DdpgAgent, env: ReservationEnv, streams: dict[str, SeededStream],
          episodes: Optional[int] = None, episode_starts: Optional[Sequence[int]] = None,
          val_env: Optional[ReservationEnv] = None, keep_breakdowns: bool = False,
          step_log=None, abort_dir: Optional[Path] = None, progress=None) -> TrainingLog:
    """Episode loop: reset, act with decaying Gaussian noise, store, one update per step.

    ``episode_starts`` lists the trace offsets an episode may begin at; one is
    drawn uniformly per episode. ``val_env`` (if given) is used to score the
    greedy policy every ``eval_every`` episodes, summed over every whole
    episode its trace holds, and keep the best actor.
    """
    cfg = agent.config
    episodes = cfg.episodes if episodes is None else episodes
    episode_starts = list(episode_starts) if episode_starts is not None else [0]
    log = TrainingLog(window_breakdowns=[] if keep_breakdowns else None)
    noise_stream, replay_stream, ep_stream = streams["noise"], streams["replay"], streams["episode"]

    def score_greedy(ep: int) -> None:
        if val_env is None:
            return
        T = val_env.horizon.windows_per_episode
        total = sum(rollout(lambda s: agent.act(s), val_env, k).total
                    for k in range(0, len(val_env.trace) - T + 1, T))
        log.eval_points.append((ep, total))
        if total < log.best_eval_cost:
            log.best_eval_cost = total
            log.best_episode = ep
            log.best_actor = agent.actor.copy()

    def abort(ep: int, reason: str):
        path = None
        if abort_dir is not None:
            path = Path(abort_dir) / "checkpoint_abort.json"
            agent.save(path, {"episode": ep, "reason": reason})
        raise NumericalAbort(f"{reason} at episode {ep}", path)

    score_greedy(-1)
    for ep in range(episodes):
        sd = cfg.noise_sd(ep)
        start = episode_starts[int(ep_stream.integers(0, len(episode_starts)))]
        state = env.reset(start)
        s = state.as_array()
        total = 0.0
        losses = []
        bds = []
        while True:
            try:
                a = agent.act(s, sd, noise_stream, "train")
            except NumericalAbort as exc:
                abort(ep, str(exc))
            tr, state = env.step(a)
            total += tr.breakdown.weighted_total
            if keep_breakdowns:
                bds.append(tr.breakdown)
            if step_log is not None:
                step_log.writerows(step_log_rows(ep, env.window_index - 1, tr))
            agent.observe(tr)
            diag = agent.train_step(stream=replay_stream)
            if diag["trained"]:
                if not math.isfinite(diag["critic_loss"]):
                    abort(ep, "non-finite critic loss")
                losses.append(diag["critic_loss"])
            s = state.as_array()
            if tr.terminal:
                break
        log.cum_costs.append(total)
        log.critic_losses.append(float(np.mean(losses)) if losses else math.nan)
        log.noise_sds.append(sd)
        if keep_breakdowns:
            log.window_breakdowns.append(bds)
        if val_env is not None and ((ep + 1) % cfg.eval_every == 0 or ep == episodes - 1):
            score_greedy(ep)
        if progress is not None:
            progress(ep, log)
    return log
