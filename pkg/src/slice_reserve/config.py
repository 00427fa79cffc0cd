"""Scenario constants, cost weights, planning horizon and the reservation decision type."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Optional

DELAY_SCOPES = ("total", "processing_only")
PENALTY_MODES = ("per_ap", "per_window", "proportional")


@dataclass(frozen=True)
class ScenarioConfig:
    """Highway segment, access points, task model and reservable resource units.

    Access points are ordered ``[BS..., UAV]``; set ``uav_position_m`` to None
    for a ground-only deployment.
    """

    highway_length_m: float = 2000.0
    bs_positions_m: tuple[float, ...] = (500.0, 1500.0)
    uav_position_m: Optional[float] = 1000.0
    uav_height_m: float = 100.0
    task_size_bits: float = 600_000.0
    task_cycles: float = 6.0e8
    per_vehicle_rate_hz: float = 1.0
    delay_bound_s: float = 0.1
    subcarrier_bw_hz: float = 5.0e6
    vm_rate_cps: float = 1.0e10
    spectral_efficiency_bps_per_hz: float = 2.0
    max_subcarriers: int = 20
    max_vms: int = 20
    unit_price_subcarrier: float = 1.0
    unit_price_vm: float = 1.0
    reserve_at_uav: bool = True
    delay_scope: str = "total"
    penalty_mode: str = "per_ap"

    def __post_init__(self):
        object.__setattr__(self, "bs_positions_m", tuple(float(p) for p in self.bs_positions_m))
        positive = (
            "highway_length_m", "task_size_bits", "task_cycles", "per_vehicle_rate_hz",
            "delay_bound_s", "subcarrier_bw_hz", "vm_rate_cps", "spectral_efficiency_bps_per_hz",
            "unit_price_subcarrier", "unit_price_vm",
        )
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.uav_height_m < 0:
            raise ValueError("uav_height_m must be >= 0")
        if self.max_subcarriers < 1 or self.max_vms < 1:
            raise ValueError("max_subcarriers and max_vms must be >= 1")
        bs = self.bs_positions_m
        if any(nxt <= prev for prev, nxt in zip(bs, bs[1:])):
            raise ValueError("bs_positions_m must be strictly increasing")
        points = list(bs) + ([self.uav_position_m] if self.uav_position_m is not None else [])
        if not points:
            raise ValueError("at least one access point is required")
        for p in points:
            if not 0.0 <= p <= self.highway_length_m:
                raise ValueError(f"access point at {p} m lies outside [0, {self.highway_length_m}]")
        if self.delay_scope not in DELAY_SCOPES:
            raise ValueError(f"delay_scope must be one of {DELAY_SCOPES}")
        if self.penalty_mode not in PENALTY_MODES:
            raise ValueError(f"penalty_mode must be one of {PENALTY_MODES}")

    @property
    def has_uav(self) -> bool:
        return self.uav_position_m is not None

    @property
    def n_aps(self) -> int:
        return len(self.bs_positions_m) + int(self.has_uav)

    @property
    def uav_index(self) -> Optional[int]:
        return len(self.bs_positions_m) if self.has_uav else None

    def frozen_ap(self, ap: int) -> bool:
        """True when this AP's reservation is pinned at the minimum."""
        return (not self.reserve_at_uav) and ap == self.uav_index

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["bs_positions_m"] = list(self.bs_positions_m)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**_checked_kwargs(cls, d, "scenario"))


@dataclass(frozen=True)
class CostWeights:
    w_r: float = 1.0
    w_s: float = 20.0
    w_d: float = 200.0

    def __post_init__(self):
        for name in ("w_r", "w_s", "w_d"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "CostWeights":
        return cls(**_checked_kwargs(cls, d, "weights"))


@dataclass(frozen=True)
class PlanningHorizon:
    windows_per_episode: int = 24
    window_duration_s: float = 3600.0
    operation_slot_s: float = 0.1

    def __post_init__(self):
        if self.windows_per_episode < 1:
            raise ValueError("windows_per_episode must be >= 1")
        if self.window_duration_s <= 0 or self.operation_slot_s <= 0:
            raise ValueError("durations must be positive")
        ratio = self.window_duration_s / self.operation_slot_s
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ValueError("operation_slot_s must divide window_duration_s")

    @property
    def slots_per_window(self) -> int:
        return int(round(self.window_duration_s / self.operation_slot_s))

    @classmethod
    def from_dict(cls, d: dict) -> "PlanningHorizon":
        return cls(**_checked_kwargs(cls, d, "horizon"))


@dataclass(frozen=True)
class ApReservation:
    n_subcarriers: int
    n_vms: int

    def cost(self, cfg: ScenarioConfig) -> float:
        return self.n_subcarriers * cfg.unit_price_subcarrier + self.n_vms * cfg.unit_price_vm


@dataclass(frozen=True)
class ReservationDecision:
    per_ap: tuple[ApReservation, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_ap", tuple(self.per_ap))

    def __len__(self):
        return len(self.per_ap)

    def __getitem__(self, ap: int) -> ApReservation:
        return self.per_ap[ap]

    @classmethod
    def from_pairs(cls, pairs) -> "ReservationDecision":
        return cls(tuple(ApReservation(int(s), int(v)) for s, v in pairs))

    @classmethod
    def minimum(cls, n_aps: int) -> "ReservationDecision":
        return cls(tuple(ApReservation(1, 1) for _ in range(n_aps)))

    def pairs(self) -> list[tuple[int, int]]:
        return [(r.n_subcarriers, r.n_vms) for r in self.per_ap]

    def validate(self, cfg: ScenarioConfig) -> None:
        if len(self.per_ap) != cfg.n_aps:
            raise ValueError(f"decision has {len(self.per_ap)} entries, scenario has {cfg.n_aps} access points")
        for i, r in enumerate(self.per_ap):
            if not 1 <= r.n_subcarriers <= cfg.max_subcarriers:
                raise ValueError(f"AP {i}: n_subcarriers={r.n_subcarriers} outside [1, {cfg.max_subcarriers}]")
            if not 1 <= r.n_vms <= cfg.max_vms:
                raise ValueError(f"AP {i}: n_vms={r.n_vms} outside [1, {cfg.max_vms}]")


def _checked_kwargs(cls, d: dict, section: str) -> dict:
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return dict(d)


def scenario_to_json(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)


def scenario_from_json(text: str) -> ScenarioConfig:
    return ScenarioConfig.from_dict(json.loads(text))
