"""Access-point placement along the highway and nearest-AP coverage intervals."""
from __future__ import annotations

from dataclasses import dataclass

from slice_reserve.config import ScenarioConfig


@dataclass(frozen=True)
class Interval:
    """A stretch of highway ``[start, end]``; endpoint flags say which ends are owned."""

    start: float
    end: float
    left_closed: bool = True
    right_closed: bool = True

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def empty(self) -> bool:
        return self.end < self.start or (
            self.end == self.start and not (self.left_closed and self.right_closed)
        )

    def __contains__(self, x: float) -> bool:
        if self.empty:
            return False
        if x < self.start or x > self.end:
            return False
        if x == self.start and not self.left_closed:
            return False
        if x == self.end and not self.right_closed:
            return False
        return True


def ap_positions(cfg: ScenarioConfig) -> list[tuple[float, float, float]]:
    """3D coordinates ``(x, y, z)`` of every AP, BSs first then the UAV."""
    pts = [(float(x), 0.0, 0.0) for x in cfg.bs_positions_m]
    if cfg.has_uav:
        pts.append((float(cfg.uav_position_m), 0.0, float(cfg.uav_height_m)))
    return pts


def _sq_dist(x: float, ap: tuple[float, float, float]) -> float:
    px, py, pz = ap
    return (x - px) ** 2 + py * py + pz * pz


def nearest_ap(x: float, cfg: ScenarioConfig) -> int:
    aps = ap_positions(cfg)
    d = [_sq_dist(x, a) for a in aps]
    return d.index(min(d))  # first minimum -> lower index on ties


def nearest_ap_partition(cfg: ScenarioConfig) -> list[Interval]:
    """One interval per AP (in AP order) such that together they tile ``[0, L]``.

    Squared distance to each AP is ``x^2 - 2 p x + const``, so pairwise
    differences are linear in x and each AP owns a single (possibly empty)
    interval. Breakpoints are owned by the lower-indexed AP.
    """
    aps = ap_positions(cfg)
    L = float(cfg.highway_length_m)
    cuts = {0.0, L}
    for i, (pi, _, hi) in enumerate(aps):
        for pj, _, hj in aps[i + 1:]:
            if pi != pj:
                x = (pj * pj + hj * hj - pi * pi - hi * hi) / (2.0 * (pj - pi))
                if 0.0 < x < L:
                    cuts.add(x)
    cuts = sorted(cuts)

    # owner of each open segment between consecutive cuts, merged into runs
    runs: list[list] = []  # [owner, start, end]
    for a, b in zip(cuts, cuts[1:]):
        owner = nearest_ap(0.5 * (a + b), cfg)
        if runs and runs[-1][0] == owner:
            runs[-1][2] = b
        else:
            runs.append([owner, a, b])

    out = [Interval(0.0, 0.0, False, False) for _ in aps]
    for k, (owner, a, b) in enumerate(runs):
        left_closed = k == 0 or owner < runs[k - 1][0]
        right_closed = k == len(runs) - 1 or owner < runs[k + 1][0]
        out[owner] = Interval(a, b, left_closed, right_closed)
    return out


def coverage_shares(cfg: ScenarioConfig) -> list[float]:
    """Fraction of the highway length owned by each AP."""
    parts = nearest_ap_partition(cfg)
    L = cfg.highway_length_m
    return [max(p.length, 0.0) / L for p in parts]
