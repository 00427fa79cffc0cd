"""Event-driven simulation of the operation phase at one or more access points.

Each AP is an uplink FIFO server (all reserved subcarriers pooled) feeding a
FIFO pool of ``n_vms`` processing servers. Events are ordered by
``(time, sequence)`` so ties resolve in scheduling order.
"""
from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from slice_reserve.config import ApReservation, ReservationDecision, ScenarioConfig
from slice_reserve.queuing import tx_service_rate, vm_service_rate
from slice_reserve.rng import SeededStream
from slice_reserve.traffic import TrafficWindow, poisson_arrivals

SERVICE_MODELS = ("exponential", "deterministic")
TASK_TRACE_HEADER = ("ap", "arrival", "tx_start", "tx_end", "proc_start", "proc_end", "delay")

_ARRIVAL, _TX_DONE, _PROC_DONE = 0, 1, 2


@dataclass
class TaskRecords:
    """Per-task timestamps; NaN marks stages not reached before the run stopped."""

    arrival: np.ndarray
    tx_start: np.ndarray
    tx_end: np.ndarray
    proc_start: np.ndarray
    proc_end: np.ndarray
    stable: bool = True

    def __len__(self):
        return len(self.arrival)

    @property
    def delay(self) -> np.ndarray:
        return self.proc_end - self.arrival

    @property
    def completed(self) -> np.ndarray:
        return ~np.isnan(self.proc_end)


def _service_times(n: int, rate: float, model: str, stream: SeededStream) -> list:
    if model == "exponential":
        return stream.exponential(1.0 / rate, size=n).tolist()
    if model == "deterministic":
        return [1.0 / rate] * n
    raise ValueError(f"service_model must be one of {SERVICE_MODELS}")


def simulate_tasks(arrivals, reservation: ApReservation, cfg: ScenarioConfig, stream: SeededStream,
                   service_model: str = "exponential", until: Optional[float] = None,
                   queue_cap: Optional[int] = None, stages: str = "both") -> TaskRecords:
    """Push the given arrival epochs through the tandem.

    ``stages`` may be ``"tx"`` or ``"proc"`` to give the other stage zero
    service time. With ``until`` set, events after that instant are not
    processed. If any queue grows past ``queue_cap`` the run stops and the
    records are marked unstable.
    """
    arr = np.asarray(arrivals, dtype=float).tolist()
    n = len(arr)
    nan = math.nan
    tx_start = [nan] * n
    tx_end = [nan] * n
    proc_start = [nan] * n
    proc_end = [nan] * n
    if n == 0:
        e = np.empty(0)
        return TaskRecords(e, e.copy(), e.copy(), e.copy(), e.copy())

    tx_rate = tx_service_rate(reservation.n_subcarriers, cfg)
    vm_rate = vm_service_rate(cfg)
    s_tx = _service_times(n, tx_rate, service_model, stream)
    s_proc = _service_times(n, vm_rate, service_model, stream)
    if stages == "proc":
        s_tx = [0.0] * n
    elif stages == "tx":
        s_proc = [0.0] * n
    elif stages != "both":
        raise ValueError("stages must be 'both', 'tx' or 'proc'")

    horizon = math.inf if until is None else float(until)
    cap = math.inf if queue_cap is None else queue_cap
    push, pop = heapq.heappush, heapq.heappop
    heap = [(arr[0], 0, _ARRIVAL, 0)]
    seq = 1
    tx_busy = False
    tx_queue = deque()
    free_vms = reservation.n_vms
    proc_queue = deque()
    stable = True

    while heap:
        t, _, kind, i = pop(heap)
        if t > horizon:
            break
        if kind == _ARRIVAL:
            if i + 1 < n:
                push(heap, (arr[i + 1], seq, _ARRIVAL, i + 1))
                seq += 1
            if tx_busy:
                tx_queue.append(i)
                if len(tx_queue) > cap:
                    stable = False
                    break
            else:
                tx_busy = True
                tx_start[i] = t
                push(heap, (t + s_tx[i], seq, _TX_DONE, i))
                seq += 1
        elif kind == _TX_DONE:
            tx_end[i] = t
            if tx_queue:
                j = tx_queue.popleft()
                tx_start[j] = t
                push(heap, (t + s_tx[j], seq, _TX_DONE, j))
                seq += 1
            else:
                tx_busy = False
            if free_vms:
                free_vms -= 1
                proc_start[i] = t
                push(heap, (t + s_proc[i], seq, _PROC_DONE, i))
                seq += 1
            else:
                proc_queue.append(i)
                if len(proc_queue) > cap:
                    stable = False
                    break
        else:
            proc_end[i] = t
            if proc_queue:
                j = proc_queue.popleft()
                proc_start[j] = t
                push(heap, (t + s_proc[j], seq, _PROC_DONE, j))
                seq += 1
            else:
                free_vms += 1

    return TaskRecords(np.array(arr), np.array(tx_start), np.array(tx_end),
                       np.array(proc_start), np.array(proc_end), stable)


# ----------------------------------------------------------------------------
# window monitoring


@dataclass(frozen=True)
class ApReport:
    ap: int
    tasks_completed: int
    mean_delay_s: float
    satisfaction_rate: float


@dataclass(frozen=True)
class WindowReport:
    tasks_completed: int
    mean_delay_s: float
    satisfaction_rate: float
    per_ap: tuple[ApReport, ...]
    records: tuple[TaskRecords, ...] = field(default=(), repr=False, compare=False)


def _summarise(delays: np.ndarray, bound: float) -> tuple[int, float, float]:
    if delays.size == 0:
        return 0, math.nan, 1.0
    return int(delays.size), float(delays.mean()), float(np.mean(delays <= bound))


def run_window(decision: ReservationDecision, window: TrafficWindow, duration_s: float, cfg: ScenarioConfig,
               stream: SeededStream, service_model: str = "exponential") -> WindowReport:
    """Simulate one window of operation; tasks still in flight at the end are dropped from the stats."""
    if not duration_s > 0:
        raise ValueError("duration_s must be positive")
    per_ap, recs, all_delays = [], [], []
    for ap in range(len(decision)):
        ap_stream = stream.child(f"ap{ap}")
        arrivals = poisson_arrivals(window.lambda_per_ap[ap], duration_s, ap_stream)
        rec = simulate_tasks(arrivals, decision[ap], cfg, ap_stream, service_model, until=duration_s)
        d = rec.delay[rec.completed]
        count, mean, sat = _summarise(d, cfg.delay_bound_s)
        per_ap.append(ApReport(ap, count, mean, sat))
        recs.append(rec)
        all_delays.append(d)
    count, mean, sat = _summarise(np.concatenate(all_delays), cfg.delay_bound_s)
    return WindowReport(count, mean, sat, tuple(per_ap), tuple(recs))


def write_task_trace(path, report: WindowReport) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TASK_TRACE_HEADER)
        for ap, rec in enumerate(report.records):
            for k in np.flatnonzero(rec.completed):
                w.writerow((ap, repr(rec.arrival[k]), repr(rec.tx_start[k]), repr(rec.tx_end[k]),
                            repr(rec.proc_start[k]), repr(rec.proc_end[k]), repr(rec.delay[k])))


# ----------------------------------------------------------------------------
# steady-state estimates (oracle for the closed forms)


@dataclass(frozen=True)
class LongRunResult:
    mean_delay_s: float
    std_error_s: float
    ci_low: float
    ci_high: float
    n_measured: int
    stable: bool


def long_run_mean_delay(reservation: ApReservation, lam: float, cfg: ScenarioConfig, n_tasks: int,
                        stream: SeededStream, service_model: str = "exponential", stages: str = "both",
                        warmup_fraction: float = 0.1, queue_cap: int = 100_000, n_batches: int = 20,
                        confidence: float = 0.95) -> LongRunResult:
    """Mean sojourn over ``n_tasks`` tasks after dropping the first ``warmup_fraction``.

    The standard error comes from ``n_batches`` non-overlapping batch means.
    ``lam == 0`` injects a single task at t=0.
    """
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if lam == 0:
        arrivals = np.zeros(1)
    else:
        arrivals = np.cumsum(stream.exponential(1.0 / lam, size=n_tasks))
    rec = simulate_tasks(arrivals, reservation, cfg, stream, service_model, queue_cap=queue_cap, stages=stages)
    if not rec.stable:
        return LongRunResult(math.inf, math.nan, math.nan, math.nan, 0, False)
    delays = rec.delay[int(warmup_fraction * len(rec)):]
    mean = float(delays.mean())
    nb = min(n_batches, delays.size)
    if nb < 2:
        return LongRunResult(mean, 0.0, mean, mean, int(delays.size), True)
    usable = delays[: delays.size - delays.size % nb]
    bm = usable.reshape(nb, -1).mean(axis=1)
    se = float(bm.std(ddof=1) / math.sqrt(nb))
    half = float(stats.t.ppf(0.5 + confidence / 2.0, nb - 1)) * se
    return LongRunResult(mean, se, mean - half, mean + half, int(delays.size), True)
