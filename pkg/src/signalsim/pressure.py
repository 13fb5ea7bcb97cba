"""Queue and pressure calculus over traffic snapshots.

Pressures are pure functions of a :class:`TrafficSnapshot`.  The queue of a
lane set splits into a *truncated* part (vehicles within the effective
service range of one green interval) and a *residual* part (vehicles too far
back to be served this interval).  The generalized turn-movement pressure

    pressure(m) = Q(in) - Q_residual(in) - sum over out lane sets of Q

discounts that residual and needs no turn probabilities.  The lane-level
forms (:func:`movement_pressure_lane_level`, :func:`movement_pressure_beta`)
keep the probability-weighted view; with the truncated-share cap the three
agree movement-wide.

All arithmetic is type-generic: ints stay ints, and exact rational inputs
(e.g. ``fractions.Fraction`` probabilities) produce exact outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

from .netmodel import NetworkGraph, Phase, TurnMovement


class PressureError(ValueError):
    """Raised for malformed snapshot or probability inputs."""


class LaneSetState(NamedTuple):
    """Queue split of one lane set at one instant.

    ``truncated + residual == queue`` always; ``running`` counts non-queued
    vehicles within the effective range of the stop line (0 in modes that do
    not track motion).
    """

    queue: float
    truncated: float
    residual: float
    running: float = 0

    def check(self) -> None:
        if self.queue < 0 or self.truncated < 0 or self.residual < 0:
            raise PressureError(f"negative queue component: {self}")
        if self.truncated + self.residual != self.queue:
            raise PressureError(
                f"queue split violated: {self.truncated} + {self.residual} != {self.queue}"
            )


class TrafficSnapshot(NamedTuple):
    """Network state at one decision instant: lane states and active phases."""

    time: float
    lanes: Mapping[str, LaneSetState]
    phases: Mapping[str, int]  # intersection id -> active phase index


@dataclass
class TurnProbabilities:
    """Routing shares per movement over the out road's lane sets.

    ``full`` holds the shares of the whole queue; ``truncated`` optionally
    holds the shares of the truncated queue only (defaults to ``full``).
    Every per-movement map must sum to 1 within 1e-9.
    """

    full: dict[str, dict[str, float]]
    truncated: dict[str, dict[str, float]] | None = None

    def share(self, movement_id: str, lane_set_id: str) -> float:
        try:
            return self.full[movement_id][lane_set_id]
        except KeyError as exc:
            raise PressureError(f"missing probability entry {movement_id} -> {lane_set_id}") from exc

    def truncated_share(self, movement_id: str, lane_set_id: str) -> float:
        table = self.truncated if self.truncated is not None else self.full
        try:
            return table[movement_id][lane_set_id]
        except KeyError as exc:
            raise PressureError(f"missing probability entry {movement_id} -> {lane_set_id}") from exc

    def check(self, tol: float = 1e-9) -> None:
        tables = [self.full] + ([self.truncated] if self.truncated is not None else [])
        for table in tables:
            for mid, shares in table.items():
                total = sum(shares.values())
                if abs(total - 1) > tol:
                    raise PressureError(f"probabilities for {mid} sum to {total}")
                if any(p < 0 or p > 1 for p in shares.values()):
                    raise PressureError(f"probability outside [0, 1] for {mid}")


def effective_range(road_max_speed: float, vehicle_max_speed: float, delta_t: float) -> float:
    """Distance one green interval can drain: min of the speed caps times delta_t."""
    if road_max_speed <= 0 or vehicle_max_speed <= 0 or delta_t <= 0:
        raise PressureError("speeds and delta_t must be positive")
    return min(road_max_speed, vehicle_max_speed) * delta_t


def truncated_queue(distances: Iterable[float], l_max: float) -> tuple[int, int]:
    """Split queued vehicles by distance-to-stop-line against ``l_max``.

    Returns (within, beyond); vehicles exactly at ``l_max`` count as within.
    """
    if l_max < 0:
        raise PressureError(f"l_max must be non-negative, got {l_max}")
    within = beyond = 0
    for d in distances:
        if d <= l_max:
            within += 1
        else:
            beyond += 1
    return within, beyond


def movement_pressure_lane_level(
    out_lane_set: str,
    movement: TurnMovement,
    snapshot: TrafficSnapshot,
    probs: TurnProbabilities,
):
    """Truncated-share pressure of one (movement, out lane set) pair:
    P_truncated * Q_truncated(in) - Q(out)."""
    state = snapshot.lanes[movement.in_lane_set]
    p = probs.truncated_share(movement.id, out_lane_set)
    return p * state.truncated - snapshot.lanes[out_lane_set].queue


def movement_pressure_beta(
    out_lane_set: str,
    movement: TurnMovement,
    snapshot: TrafficSnapshot,
    probs: TurnProbabilities,
    beta,
):
    """Capped lane-level pressure: min(P * Q(in), beta) - Q(out).

    With beta set to the truncated share P_truncated * Q_truncated this
    reduces to :func:`movement_pressure_lane_level`, because the full-queue
    share never falls below the truncated one.
    """
    state = snapshot.lanes[movement.in_lane_set]
    p = probs.share(movement.id, out_lane_set)
    return min(p * state.queue, beta) - snapshot.lanes[out_lane_set].queue


def generalized_tm_pressure(movement: TurnMovement, snapshot: TrafficSnapshot):
    """Residual-discounted movement pressure, free of turn probabilities:
    Q(in) - Q_residual(in) - sum of out lane set queues."""
    state = snapshot.lanes[movement.in_lane_set]
    return state.queue - state.residual - sum(
        snapshot.lanes[ls].queue for ls in movement.out_lane_sets
    )


def phase_pressure(
    phase: Phase,
    movements: Mapping[str, TurnMovement],
    snapshot: TrafficSnapshot,
):
    """Sum of generalized movement pressures over the phase's movements."""
    return sum(generalized_tm_pressure(movements[mid], snapshot) for mid in phase.movements)


def efficient_pressure(movement: TurnMovement, graph: NetworkGraph, snapshot: TrafficSnapshot):
    """Per-lane normalized pressure: mean in-queue per lane minus mean
    out-queue per lane across the out road."""
    in_ls = graph.lane_sets[movement.in_lane_set]
    out_q = sum(snapshot.lanes[ls].queue for ls in movement.out_lane_sets)
    out_lanes = sum(graph.lane_sets[ls].lane_count for ls in movement.out_lane_sets)
    return snapshot.lanes[movement.in_lane_set].queue / in_ls.lane_count - out_q / out_lanes
