"""Per-window vehicle counts per access point and the matching task-arrival rates."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from slice_reserve.config import ScenarioConfig
from slice_reserve.geometry import coverage_shares
from slice_reserve.rng import SeededStream

CSV_HEADER = ("hour", "vehicles")

# Commuter profile knots (hour of day -> relative level); periodic over 24 h.
PROFILE_HOURS = (3.0, 8.0, 12.0, 17.0, 22.0)
PROFILE_LEVELS = (0.0, 0.85, 0.55, 1.0, 0.3)


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class TrafficWindow:
    window_index: int
    vehicles_per_ap: tuple[int, ...]
    lambda_per_ap: tuple[float, ...]
    hour: int = 0

    def __post_init__(self):
        if self.window_index < 0:
            raise ValueError("window_index must be >= 0")
        if any(v < 0 for v in self.vehicles_per_ap):
            raise ValueError("vehicle counts must be nonnegative")

    @property
    def total_vehicles(self) -> int:
        return sum(self.vehicles_per_ap)

    @property
    def hour_of_day(self) -> int:
        return self.hour % 24

    @classmethod
    def from_counts(cls, window_index: int, counts: Sequence[int], cfg: ScenarioConfig, hour=None):
        counts = tuple(int(c) for c in counts)
        lam = tuple(c * cfg.per_vehicle_rate_hz for c in counts)
        return cls(window_index, counts, lam, window_index if hour is None else int(hour))

    @classmethod
    def from_rates(cls, lambdas: Sequence[float], window_index: int = 0, hour: int = 0):
        """A window defined directly by arrival rates (vehicle counts left at zero)."""
        return cls(window_index, tuple(0 for _ in lambdas), tuple(float(x) for x in lambdas), hour)


@dataclass(frozen=True)
class TrafficTrace:
    windows: tuple[TrafficWindow, ...]
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        for k, w in enumerate(self.windows):
            if w.window_index != k:
                raise ValueError(f"window indices must be consecutive from 0 (position {k} has {w.window_index})")

    def __len__(self):
        return len(self.windows)

    def __getitem__(self, k):
        return self.windows[k]

    def totals(self) -> list[int]:
        return [w.total_vehicles for w in self.windows]

    def slice(self, start: int, length: int) -> "TrafficTrace":
        """Sub-trace re-indexed from 0; hours are kept."""
        if start < 0 or start + length > len(self.windows):
            raise ValueError(f"trace of {len(self.windows)} windows cannot supply [{start}, {start + length})")
        ws = [
            TrafficWindow(k, w.vehicles_per_ap, w.lambda_per_ap, w.hour)
            for k, w in enumerate(self.windows[start:start + length])
        ]
        return TrafficTrace(tuple(ws), f"{self.source}[{start}:{start + length}]")


def split_largest_remainder(total: int, shares: Sequence[float]) -> list[int]:
    """Integer split of ``total`` proportional to ``shares``; leftovers go to the
    largest fractional parts, ties to the lower index."""
    shares = np.asarray(shares, dtype=float)
    exact = total * shares / shares.sum()
    base = np.floor(exact).astype(int)
    left = total - int(base.sum())
    order = sorted(range(len(shares)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return [int(b) for b in base]


def window_from_total(index: int, total: int, cfg: ScenarioConfig, hour=None, shares=None) -> TrafficWindow:
    shares = coverage_shares(cfg) if shares is None else shares
    return TrafficWindow.from_counts(index, split_largest_remainder(total, shares), cfg, hour)


def trace_from_totals(totals: Sequence[int], cfg: ScenarioConfig, hours=None, source="") -> TrafficTrace:
    shares = coverage_shares(cfg)
    hours = range(len(totals)) if hours is None else hours
    windows = [window_from_total(k, t, cfg, h, shares) for k, (t, h) in enumerate(zip(totals, hours))]
    return TrafficTrace(tuple(windows), source)


def load_trace_csv(path, cfg: ScenarioConfig) -> TrafficTrace:
    """Read a ``hour,vehicles`` CSV (one row per planning window)."""
    path = Path(path)
    hours, totals = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and tuple(c.strip().lower() for c in row) == CSV_HEADER:
                continue
            if len(row) != 2:
                raise TraceError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                hour, count = int(row[0]), int(row[1])
            except ValueError:
                raise TraceError(f"{path}:{lineno}: cannot parse {row!r}") from None
            if count < 0:
                raise TraceError(f"{path}:{lineno}: negative vehicle count {count}")
            hours.append(hour)
            totals.append(count)
    if not totals:
        raise TraceError(f"{path}: no windows")
    return trace_from_totals(totals, cfg, hours, source=str(path))


def write_trace_csv(path, trace: TrafficTrace) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for win in trace.windows:
            w.writerow((win.hour, win.total_vehicles))


def diurnal_profile(hour) -> np.ndarray:
    """Relative traffic level in [0, 1]: peaks at 8 and 17 h (17 h = 1), trough 0 at 3 h."""
    return np.interp(np.asarray(hour, dtype=float) % 24.0, PROFILE_HOURS, PROFILE_LEVELS, period=24.0)


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def synth_diurnal(hours: int, n_min: int, n_max: int, noise_sd: float,
                  stream: SeededStream, cfg: ScenarioConfig, start_hour: int = 0) -> TrafficTrace:
    if hours < 1:
        raise ValueError("hours must be >= 1")
    if n_min > n_max:
        raise ValueError("n_min must not exceed n_max")
    hrs = np.arange(start_hour, start_hour + hours)
    level = n_min + (n_max - n_min) * diurnal_profile(hrs)
    eps = stream.normal(0.0, noise_sd, size=hours) if noise_sd > 0 else np.zeros(hours)
    totals = [max(0, _round_half_away(x)) for x in level + eps]
    source = f"synth_diurnal(hours={hours}, n_min={n_min}, n_max={n_max}, noise_sd={noise_sd}, seed={stream.seed}, stream={stream.stream_id})"
    return trace_from_totals(totals, cfg, [int(h) for h in hrs], source)


def sample_arrivals(window: TrafficWindow, ap: int, duration_s: float, stream: SeededStream) -> np.ndarray:
    """Poisson arrival epochs on ``[0, duration_s)`` at the AP's aggregate rate."""
    lam = window.lambda_per_ap[ap]
    if lam < 0:
        raise ValueError("arrival rate must be >= 0")
    return poisson_arrivals(lam, duration_s, stream)


def poisson_arrivals(lam: float, duration_s: float, stream: SeededStream) -> np.ndarray:
    if lam == 0 or duration_s <= 0:
        return np.empty(0)
    chunks = []
    t = 0.0
    block = max(16, int(lam * duration_s * 1.05) + 16)
    while True:
        gaps = stream.exponential(1.0 / lam, size=block)
        times = t + np.cumsum(gaps)
        if times[-1] >= duration_s:
            chunks.append(times[times < duration_s])
            break
        chunks.append(times)
        t = times[-1]
        block = max(16, int(lam * (duration_s - t) * 1.05) + 16)
    return np.concatenate(chunks)
