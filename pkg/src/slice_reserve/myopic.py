"""Per-window cheapest feasible reservation, ignoring reconfiguration."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from slice_reserve.config import ApReservation, CostWeights, ReservationDecision, ScenarioConfig
from slice_reserve.env import EpisodeCostReport, episode_report
from slice_reserve.queuing import ap_delay
from slice_reserve.traffic import TrafficTrace, TrafficWindow


@dataclass(frozen=True)
class MyopicDecision:
    decision: ReservationDecision
    infeasible: tuple[bool, ...]

    @property
    def any_infeasible(self) -> bool:
        return any(self.infeasible)


@lru_cache(maxsize=8)
def _candidates(cfg: ScenarioConfig) -> tuple[tuple[int, int], ...]:
    pairs = [(s, v) for s in range(1, cfg.max_subcarriers + 1) for v in range(1, cfg.max_vms + 1)]
    pairs.sort(key=lambda p: (p[0] * cfg.unit_price_subcarrier + p[1] * cfg.unit_price_vm, p[0], p[1]))
    return tuple(pairs)


def myopic_ap(lam: float, cfg: ScenarioConfig) -> tuple[ApReservation, bool]:
    """Cheapest (n_s, n_v) meeting the delay bound at rate ``lam``; ties -> fewer
    subcarriers, then fewer VMs. Returns ``((max, max), True)`` if nothing fits."""
    for s, v in _candidates(cfg):
        if ap_delay(lam, s, v, cfg).meets(cfg.delay_bound_s):
            return ApReservation(s, v), False
    return ApReservation(cfg.max_subcarriers, cfg.max_vms), True


def myopic_decide(window: TrafficWindow, cfg: ScenarioConfig) -> MyopicDecision:
    per_ap, flags = [], []
    for ap, lam in enumerate(window.lambda_per_ap):
        if cfg.frozen_ap(ap):
            per_ap.append(ApReservation(1, 1))
            flags.append(False)
            continue
        r, bad = myopic_ap(lam, cfg)
        per_ap.append(r)
        flags.append(bad)
    return MyopicDecision(ReservationDecision(tuple(per_ap)), tuple(flags))


def myopic_episode(trace: TrafficTrace, cfg: ScenarioConfig, weights: CostWeights = CostWeights(),
                   start: int = 0, length: int | None = None) -> EpisodeCostReport:
    length = len(trace) - start if length is None else length
    if start < 0 or start + length > len(trace):
        raise ValueError("trace does not cover the requested horizon")
    decisions = [myopic_decide(trace.windows[start + k], cfg).decision for k in range(length)]
    return episode_report(decisions, trace, cfg, weights, start)
