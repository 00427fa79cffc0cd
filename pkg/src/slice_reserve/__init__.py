"""Planning-window resource reservation for a network slice on a highway air-ground edge network."""

from slice_reserve.config import (
    CostWeights,
    PlanningHorizon,
    ReservationDecision,
    ScenarioConfig,
    ApReservation,
)
from slice_reserve.rng import SeededStream

__all__ = [
    "ApReservation",
    "CostWeights",
    "PlanningHorizon",
    "ReservationDecision",
    "ScenarioConfig",
    "SeededStream",
]

__version__ = "0.1.0"
