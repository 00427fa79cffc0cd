"""Three-part window cost and the planning-window decision environment."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from slice_reserve.config import (
    ApReservation,
    CostWeights,
    PlanningHorizon,
    ReservationDecision,
    ScenarioConfig,
)
from slice_reserve.geometry import coverage_shares
from slice_reserve.queuing import slice_delay
from slice_reserve.traffic import TrafficTrace, TrafficWindow

STEP_LOG_HEADER = ("episode", "window", "ap", "n_s", "n_v", "c_r", "c_s", "c_d", "total", "reward")
REPORT_HEADER = ("window", "hour", "ap", "n_s", "n_v", "c_r", "c_s", "c_d", "total", "cumulative")


@dataclass(frozen=True)
class WindowCostBreakdown:
    c_r: float
    c_s: float
    c_d: float
    weighted_total: float
    per_ap: tuple[tuple[float, float, float], ...] = ()

    @classmethod
    def assemble(cls, c_r, c_s, c_d, weights: CostWeights, per_ap=()):
        total = weights.w_r * c_r + weights.w_s * c_s + weights.w_d * c_d
        return cls(c_r, c_s, c_d, total, tuple(per_ap))


def reservation_cost(decision: ReservationDecision, cfg: ScenarioConfig) -> float:
    return sum(r.cost(cfg) for r in decision.per_ap)


def reconfiguration_cost(prev: ReservationDecision, curr: ReservationDecision) -> float:
    if len(prev) != len(curr):
        raise ValueError(f"AP count mismatch: {len(prev)} vs {len(curr)}")
    return float(sum(abs(a.n_subcarriers - b.n_subcarriers) + abs(a.n_vms - b.n_vms)
                     for a, b in zip(prev.per_ap, curr.per_ap)))


def _ap_penalties(decision, window, cfg) -> list[float]:
    out = []
    for ap in range(len(decision)):
        est = slice_delay(decision, window, ap, cfg)
        if cfg.penalty_mode == "proportional":
            if not est.stable:
                out.append(1.0)
            else:
                excess = (est.w_total_s - cfg.delay_bound_s) / cfg.delay_bound_s
                out.append(min(max(excess, 0.0), 1.0))
        else:
            out.append(1.0 if not est.meets(cfg.delay_bound_s) else 0.0)
    return out


def violation_penalty(decision: ReservationDecision, window: TrafficWindow, cfg: ScenarioConfig) -> float:
    """Count of APs whose predicted mean delay breaks the bound (or is unstable).

    ``per_window`` mode caps this at 1; ``proportional`` charges the relative
    excess over the bound, capped at 1 per AP.
    """
    per_ap = _ap_penalties(decision, window, cfg)
    if cfg.penalty_mode == "per_window":
        return 1.0 if any(per_ap) else 0.0
    return float(sum(per_ap))


def window_cost(prev: ReservationDecision, curr: ReservationDecision, window: TrafficWindow,
                weights: CostWeights, cfg: ScenarioConfig) -> WindowCostBreakdown:
    pens = _ap_penalties(curr, window, cfg)
    per_ap = []
    for a, b, pen in zip(prev.per_ap, curr.per_ap, pens):
        per_ap.append((b.cost(cfg), float(abs(a.n_subcarriers - b.n_subcarriers) + abs(a.n_vms - b.n_vms)), pen))
    c_r = reservation_cost(curr, cfg)
    c_s = reconfiguration_cost(prev, curr)
    c_d = (1.0 if any(pens) else 0.0) if cfg.penalty_mode == "per_window" else float(sum(pens))
    return WindowCostBreakdown.assemble(c_r, c_s, c_d, weights, per_ap)


# ----------------------------------------------------------------------------
# action <-> decision mapping


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def action_to_decision(action, cfg: ScenarioConfig) -> tuple[ReservationDecision, int]:
    """Map ``2 * n_aps`` values in [-1, 1] onto integer reservations.

    Layout is ``[s_0, v_0, s_1, v_1, ...]``. Returns the decision and the
    number of components that had to be clamped.
    """
    a = np.asarray(action, dtype=float).reshape(-1)
    if a.size != 2 * cfg.n_aps:
        raise ValueError(f"action must have {2 * cfg.n_aps} components, got {a.size}")
    clipped = np.clip(a, -1.0, 1.0)
    n_clamped = int(np.count_nonzero(clipped != a))
    hi = np.tile([cfg.max_subcarriers, cfg.max_vms], cfg.n_aps).astype(float)
    n = _round_half_away((clipped + 1.0) / 2.0 * (hi - 1.0) + 1.0).astype(int)
    n = np.clip(n, 1, hi.astype(int))
    pairs = n.reshape(-1, 2)
    per_ap = []
    for ap, (s, v) in enumerate(pairs):
        per_ap.append(ApReservation(1, 1) if cfg.frozen_ap(ap) else ApReservation(int(s), int(v)))
    return ReservationDecision(tuple(per_ap)), n_clamped


def decision_to_action(decision: ReservationDecision, cfg: ScenarioConfig) -> np.ndarray:
    """An action vector that maps back exactly onto ``decision``."""
    hi = np.tile([cfg.max_subcarriers, cfg.max_vms], cfg.n_aps).astype(float)
    n = np.array(decision.pairs(), dtype=float).reshape(-1)
    span = np.where(hi > 1, hi - 1.0, 1.0)
    return np.where(hi > 1, 2.0 * (n - 1.0) / span - 1.0, 0.0)


# ----------------------------------------------------------------------------
# environment


@dataclass(frozen=True)
class EnvState:
    vehicles: tuple[float, ...]
    prev_decision: tuple[float, ...]
    phase: tuple[float, float]

    def as_array(self) -> np.ndarray:
        return np.array(self.vehicles + self.prev_decision + self.phase, dtype=float)

    @staticmethod
    def dim(n_aps: int) -> int:
        return 3 * n_aps + 2


@dataclass(frozen=True)
class Transition:
    state: EnvState
    action: np.ndarray
    reward: float
    next_state: EnvState
    terminal: bool
    breakdown: Optional[WindowCostBreakdown] = None
    decision: Optional[ReservationDecision] = None


def default_vehicle_scale(cfg: ScenarioConfig, n_max: float) -> tuple[float, ...]:
    """Per-AP normaliser: the AP's share of the peak total vehicle count."""
    return tuple(max(1.0, n_max * s) for s in coverage_shares(cfg))


def hour_phase(hour: int) -> tuple[float, float]:
    angle = 2.0 * math.pi * (hour % 24) / 24.0
    return (math.sin(angle), math.cos(angle))


class ReservationEnv:
    """Sequential reservation problem over the windows of one episode.

    The state observed before deciding window t carries that window's vehicle
    counts, the previous decision and the hour of day.
    """

    def __init__(self, trace: TrafficTrace, cfg: ScenarioConfig, weights: CostWeights = CostWeights(),
                 horizon: PlanningHorizon = PlanningHorizon(), reward_scale: float = 100.0,
                 vehicle_scale: Optional[Sequence[float]] = None):
        self.trace = trace
        self.cfg = cfg
        self.weights = weights
        self.horizon = horizon
        self.reward_scale = reward_scale
        if vehicle_scale is None:
            peak = [max(w.vehicles_per_ap[i] for w in trace.windows) for i in range(cfg.n_aps)]
            vehicle_scale = tuple(max(1.0, float(p)) for p in peak)
        self.vehicle_scale = tuple(float(v) for v in vehicle_scale)
        self.n_clamped = 0
        self._start = 0
        self._t = 0
        self._prev = ReservationDecision.minimum(cfg.n_aps)
        self._done = True

    @property
    def state_dim(self) -> int:
        return EnvState.dim(self.cfg.n_aps)

    @property
    def action_dim(self) -> int:
        return 2 * self.cfg.n_aps

    @property
    def window_index(self) -> int:
        return self._t

    @property
    def prev_decision(self) -> ReservationDecision:
        return self._prev

    def _window(self, t: int) -> TrafficWindow:
        return self.trace.windows[self._start + t]

    def observe(self, t: int, prev: ReservationDecision) -> EnvState:
        w = self._window(t)
        veh = tuple(min(1.0, c / s) for c, s in zip(w.vehicles_per_ap, self.vehicle_scale))
        prev_n = []
        for r in prev.per_ap:
            prev_n.append(r.n_subcarriers / self.cfg.max_subcarriers)
            prev_n.append(r.n_vms / self.cfg.max_vms)
        return EnvState(veh, tuple(prev_n), hour_phase(w.hour))

    def reset(self, episode_start: int = 0) -> EnvState:
        T = self.horizon.windows_per_episode
        if episode_start < 0 or episode_start + T > len(self.trace):
            raise ValueError(
                f"trace has {len(self.trace)} windows; episode needs [{episode_start}, {episode_start + T})")
        self._start = episode_start
        self._t = 0
        self._prev = ReservationDecision.minimum(self.cfg.n_aps)
        self._done = False
        self._state = self.observe(0, self._prev)
        return self._state

    def step(self, action) -> tuple[Transition, EnvState]:
        if self._done:
            raise RuntimeError("episode finished; call reset()")
        decision, clamped = action_to_decision(action, self.cfg)
        self.n_clamped += clamped
        window = self._window(self._t)
        bd = window_cost(self._prev, decision, window, self.weights, self.cfg)
        reward = -bd.weighted_total / self.reward_scale
        self._t += 1
        terminal = self._t >= self.horizon.windows_per_episode
        # past the last window the next state reuses its traffic; it is masked anyway
        nxt = self.observe(min(self._t, self.horizon.windows_per_episode - 1), decision)
        tr = Transition(self._state, np.clip(np.asarray(action, float), -1, 1), reward, nxt, terminal, bd, decision)
        self._prev = decision
        self._state = nxt
        self._done = terminal
        return tr, nxt


# ----------------------------------------------------------------------------
# episode reports


@dataclass
class EpisodeCostReport:
    decisions: list[ReservationDecision] = field(default_factory=list)
    breakdowns: list[WindowCostBreakdown] = field(default_factory=list)
    hours: list[int] = field(default_factory=list)
    satisfaction: Optional[list[float]] = None

    @property
    def window_totals(self) -> list[float]:
        return [b.weighted_total for b in self.breakdowns]

    @property
    def cumulative(self) -> list[float]:
        return list(np.cumsum(self.window_totals)) if self.breakdowns else []

    @property
    def total(self) -> float:
        return float(sum(self.window_totals))

    @property
    def c_r_total(self) -> float:
        return float(sum(b.c_r for b in self.breakdowns))

    @property
    def c_s_total(self) -> float:
        return float(sum(b.c_s for b in self.breakdowns))

    @property
    def c_d_total(self) -> float:
        return float(sum(b.c_d for b in self.breakdowns))

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for k, (d, b, h, cum) in enumerate(zip(self.decisions, self.breakdowns, self.hours, self.cumulative)):
                for ap, (r, comp) in enumerate(zip(d.per_ap, b.per_ap)):
                    w.writerow((k, h, ap, r.n_subcarriers, r.n_vms, *(repr(float(x)) for x in comp),
                                repr(b.weighted_total), repr(float(cum))))


def episode_report(decisions: Sequence[ReservationDecision], trace: TrafficTrace, cfg: ScenarioConfig,
                   weights: CostWeights, start: int = 0) -> EpisodeCostReport:
    """Cost a fixed decision sequence, starting from the all-minimum reservation."""
    report = EpisodeCostReport()
    prev = ReservationDecision.minimum(cfg.n_aps)
    for k, d in enumerate(decisions):
        w = trace.windows[start + k]
        report.decisions.append(d)
        report.breakdowns.append(window_cost(prev, d, w, weights, cfg))
        report.hours.append(w.hour)
        prev = d
    return report


def rollout(policy: Callable[[np.ndarray], np.ndarray], env: ReservationEnv, episode_start: int = 0) -> EpisodeCostReport:
    """Run ``policy`` (state array -> action) through one episode without learning."""
    report = EpisodeCostReport()
    state = env.reset(episode_start)
    while True:
        w = env._window(env.window_index)
        tr, state = env.step(policy(state.as_array()))
        report.decisions.append(tr.decision)
        report.breakdowns.append(tr.breakdown)
        report.hours.append(w.hour)
        if tr.terminal:
            return report


def write_step_log_header(fh) -> csv.writer:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(STEP_LOG_HEADER)
    return w


def step_log_rows(episode: int, window: int, tr: Transition):
    for ap, (r, comp) in enumerate(zip(tr.decision.per_ap, tr.breakdown.per_ap)):
        yield (episode, window, ap, r.n_subcarriers, r.n_vms, *(repr(float(x)) for x in comp),
               repr(tr.breakdown.weighted_total), repr(tr.reward))
