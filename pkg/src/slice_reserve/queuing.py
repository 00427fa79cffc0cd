"""Closed-form mean sojourn times for the uplink (M/M/1) + edge server (M/M/c) tandem."""
from __future__ import annotations

import math
from dataclasses import dataclass

from slice_reserve.config import ReservationDecision, ScenarioConfig
from slice_reserve.traffic import TrafficWindow

INF = math.inf


@dataclass(frozen=True)
class DelayEstimate:
    w_tx_s: float
    w_proc_s: float
    w_total_s: float
    stable: bool

    def meets(self, bound_s: float) -> bool:
        return self.stable and self.w_total_s <= bound_s


def tx_service_rate(n_subcarriers: int, cfg: ScenarioConfig) -> float:
    """Tasks/s pushed through ``n_subcarriers`` pooled into one uplink pipe."""
    if n_subcarriers < 1:
        raise ValueError("n_subcarriers must be >= 1")
    return n_subcarriers * cfg.subcarrier_bw_hz * cfg.spectral_efficiency_bps_per_hz / cfg.task_size_bits


def vm_service_rate(cfg: ScenarioConfig) -> float:
    return cfg.vm_rate_cps / cfg.task_cycles


def mm1_sojourn(lam: float, mu: float) -> float:
    """Mean time in an M/M/1 system; ``inf`` when ``lam >= mu``."""
    if lam < 0 or mu <= 0:
        raise ValueError("need lam >= 0 and mu > 0")
    if lam >= mu:
        return INF
    return 1.0 / (mu - lam)


def erlang_b(a: float, c: int) -> float:
    b = 1.0
    for k in range(1, c + 1):
        b = a * b / (k + a * b)
    return b


def erlang_c(a: float, c: int) -> float:
    """Probability an arrival waits in M/M/c with offered load ``a`` (requires a < c)."""
    b = erlang_b(a, c)
    rho = a / c
    return b / (1.0 - rho + rho * b)


def mmc_sojourn(lam: float, mu: float, c: int) -> float:
    if lam < 0 or mu <= 0:
        raise ValueError("need lam >= 0 and mu > 0")
    if c < 1 or int(c) != c:
        raise ValueError("c must be a positive integer")
    c = int(c)
    if lam >= c * mu:
        return INF
    if c == 1:
        return mm1_sojourn(lam, mu)
    return 1.0 / mu + erlang_c(lam / mu, c) / (c * mu - lam)


def ap_delay(lam: float, n_subcarriers: int, n_vms: int, cfg: ScenarioConfig) -> DelayEstimate:
    w_tx = mm1_sojourn(lam, tx_service_rate(n_subcarriers, cfg))
    w_proc = mmc_sojourn(lam, vm_service_rate(cfg), n_vms)
    stable = math.isfinite(w_tx) and math.isfinite(w_proc)
    if not stable:
        return DelayEstimate(w_tx, w_proc, INF, False)
    total = w_proc if cfg.delay_scope == "processing_only" else w_tx + w_proc
    return DelayEstimate(w_tx, w_proc, total, True)


def slice_delay(decision: ReservationDecision, window: TrafficWindow, ap: int, cfg: ScenarioConfig) -> DelayEstimate:
    r = decision[ap]
    return ap_delay(window.lambda_per_ap[ap], r.n_subcarriers, r.n_vms, cfg)
