"""Demand and service specification.

Demand is either rate-based (an arrival process per entry lane set plus
turn probabilities that route vehicles lane set by lane set) or explicit
(CityFlow-style flow entries, each generating vehicles on a fixed road
route at a fixed interval).  Service capacity is specified per movement in
vehicles per decision period of green.

All draws take the run's generator so identical seeds replay identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .netmodel import RIGHT, NetworkGraph, RoadnetError
from .pressure import TurnProbabilities

ARRIVAL_DISTRIBUTIONS = ("deterministic", "poisson", "binomial")
SERVICE_DISTRIBUTIONS = ("deterministic", "binomial")

#: default queue spacing, meters per queued vehicle
S_GAP = 7.5
#: default saturation flow, vehicles per lane per second of green
SATURATION_PER_LANE_PER_SECOND = 0.5
#: default global vehicle speed cap, m/s
VEHICLE_MAX_SPEED = 11.11


@dataclass(frozen=True)
class ArrivalProcess:
    """Vehicles per decision period entering one entry lane set."""

    rate: float
    bound: int = 0  # hard per-period cap; 0 means 4x rate rounded up
    distribution: str = "deterministic"

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"negative arrival rate {self.rate}")
        if self.distribution not in ARRIVAL_DISTRIBUTIONS:
            raise ValueError(f"unknown arrival distribution '{self.distribution}'")
        if self.bound == 0:
            object.__setattr__(self, "bound", max(1, math.ceil(4 * self.rate)))
        if self.bound < self.rate:
            raise ValueError(f"bound {self.bound} below rate {self.rate}")

    def draw(self, period_index: int, rng: np.random.Generator) -> int:
        if self.distribution == "deterministic":
            # Bresenham spread: exact when rate is integral, averages rate
            return int(math.floor((period_index + 1) * self.rate) - math.floor(period_index * self.rate))
        if self.distribution == "poisson":
            return min(int(rng.poisson(self.rate)), self.bound)
        return int(rng.binomial(self.bound, self.rate / self.bound))


@dataclass(frozen=True)
class FlowEntry:
    """One CityFlow flow record: a route emitting vehicles at an interval."""

    route: tuple[str, ...]
    interval: float
    start_time: float
    end_time: float  # inclusive; inf for open-ended
    max_speed: float = VEHICLE_MAX_SPEED

    def generation_times(self, horizon: float) -> list[float]:
        end = min(self.end_time, horizon)
        times = []
        t = self.start_time
        while t <= end + 1e-9:
            times.append(t)
            t += self.interval
        return times


@dataclass
class DemandSpec:
    """Exogenous arrivals plus routing for one scenario."""

    arrivals: dict[str, ArrivalProcess] = field(default_factory=dict)
    routing: TurnProbabilities | None = None
    flows: list[FlowEntry] | None = None
    vehicle_max_speed: float = VEHICLE_MAX_SPEED

    @property
    def explicit(self) -> bool:
        return self.flows is not None

    def check(self, graph: NetworkGraph) -> None:
        for ls in self.arrivals:
            if ls not in graph.lane_sets:
                raise ValueError(f"arrival process on unknown lane set {ls}")
            if graph.lane_sets[ls].road not in graph.entry_roads:
                raise ValueError(f"arrival process on non-entry lane set {ls}")
        if self.routing is not None:
            self.routing.check()
        if self.flows is not None:
            for f in self.flows:
                for rid in f.route:
                    if rid not in graph.roads:
                        raise ValueError(f"flow route references unknown road {rid}")


@dataclass
class ServiceModel:
    """Per-movement service capacity, vehicles per period of green."""

    rates: dict[str, float]
    bounds: dict[str, float]
    distribution: str = "deterministic"
    saturation_per_lane_per_second: float = SATURATION_PER_LANE_PER_SECOND

    def __post_init__(self):
        if self.distribution not in SERVICE_DISTRIBUTIONS:
            raise ValueError(f"unknown service distribution '{self.distribution}'")
        for mid, c in self.rates.items():
            if c <= 0:
                raise ValueError(f"movement {mid}: non-positive service rate {c}")
            if self.bounds.get(mid, 0) < c:
                raise ValueError(f"movement {mid}: bound below rate")

    @classmethod
    def default(
        cls,
        graph: NetworkGraph,
        action_duration: float,
        distribution: str = "deterministic",
        saturation_per_lane_per_second: float = SATURATION_PER_LANE_PER_SECOND,
    ) -> "ServiceModel":
        """Saturation scaled by lane count: rate = sat * duration * lanes."""
        rates, bounds = {}, {}
        for m in graph.movements.values():
            lanes = graph.lane_sets[m.in_lane_set].lane_count
            c = saturation_per_lane_per_second * action_duration * lanes
            rates[m.id] = c
            bounds[m.id] = c if distribution == "deterministic" else float(math.ceil(2 * c))
        return cls(
            rates=rates,
            bounds=bounds,
            distribution=distribution,
            saturation_per_lane_per_second=saturation_per_lane_per_second,
        )

    def draw_array(self, movement_ids: list[str], rng: np.random.Generator) -> np.ndarray:
        c = np.array([self.rates[m] for m in movement_ids])
        if self.distribution == "deterministic":
            return c
        n = np.array([self.bounds[m] for m in movement_ids]).astype(int)
        return rng.binomial(n, c / n).astype(float)


# ---- routing builders ----

TURN_WEIGHTS = {"left": 1.0, "straight": 2.0, "right": 1.0}


def build_turn_probabilities(
    graph: NetworkGraph, turn_weights: dict[str, float] | None = None
) -> TurnProbabilities:
    """Route by turn-type weights, renormalized over each out road's lane sets."""
    weights = turn_weights or TURN_WEIGHTS
    full: dict[str, dict[str, float]] = {}
    for m in graph.movements.values():
        per = {ls: weights.get(graph.lane_sets[ls].direction, 0.0) for ls in m.out_lane_sets}
        total = sum(per.values())
        if total <= 0:
            per = {ls: 1.0 for ls in m.out_lane_sets}
            total = float(len(per))
        full[m.id] = {ls: w / total for ls, w in per.items()}
    return TurnProbabilities(full=full)


def uniform_entry_demand(
    graph: NetworkGraph,
    rate: float,
    distribution: str = "poisson",
    turn_weights: dict[str, float] | None = None,
    vehicle_max_speed: float = VEHICLE_MAX_SPEED,
) -> DemandSpec:
    """Same arrival process on every entry lane set, turn-weight routing."""
    arrivals = {}
    for rid in sorted(graph.entry_roads):
        for ls in graph.roads[rid].lane_sets:
            arrivals[ls] = ArrivalProcess(rate=rate, distribution=distribution)
    return DemandSpec(
        arrivals=arrivals,
        routing=build_turn_probabilities(graph, turn_weights),
        vehicle_max_speed=vehicle_max_speed,
    )


def load_cityflow_flow(path: str, default_max_speed: float = VEHICLE_MAX_SPEED) -> list[FlowEntry]:
    """Load the supported subset of a CityFlow ``flow.json``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise RoadnetError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RoadnetError(f"{path}: parse error at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(data, list):
        raise RoadnetError(f"{path}: expected a list of flow entries")
    flows = []
    for i, entry in enumerate(data):
        route = entry.get("route")
        if not route or not isinstance(route, list):
            raise RoadnetError(f"{path}: flow entry {i} missing route")
        interval = float(entry.get("interval", 1.0))
        if interval <= 0:
            raise RoadnetError(f"{path}: flow entry {i} has non-positive interval")
        start = float(entry.get("startTime", 0))
        end = float(entry.get("endTime", -1))
        flows.append(
            FlowEntry(
                route=tuple(route),
                interval=interval,
                start_time=start,
                end_time=math.inf if end < 0 else end,
                max_speed=float((entry.get("vehicle") or {}).get("maxSpeed", default_max_speed)),
            )
        )
    return flows


def route_turns(graph: NetworkGraph, route: tuple[str, ...]) -> list[str] | None:
    """Movement ids along a road route, or None when a hop has no movement."""
    moves = []
    for a, b in zip(route, route[1:]):
        found = None
        for m in graph.movements.values():
            if m.in_road == a and m.out_road == b:
                found = m.id
                break
        if found is None:
            return None
        moves.append(found)
    return moves


def demand_from_flows(
    graph: NetworkGraph,
    flows: list[FlowEntry],
    horizon: float,
    action_duration: float,
    vehicle_max_speed: float = VEHICLE_MAX_SPEED,
) -> DemandSpec:
    """Wrap explicit flows and derive rate/routing views by path counting.

    The derived arrival rates and turn probabilities serve the flow
    conservation solver; the simulator itself replays the explicit routes.
    """
    hop_counts: dict[str, dict[str, float]] = {}
    entry_counts: dict[str, float] = {}
    move_by_roads = {(m.in_road, m.out_road): m for m in graph.movements.values()}
    for f in flows:
        n = len(f.generation_times(horizon))
        if n == 0:
            continue
        route = f.route
        first_ls = _lane_set_for_hop(graph, move_by_roads, route, 0)
        entry_counts[first_ls] = entry_counts.get(first_ls, 0.0) + n
        for k in range(len(route) - 1):
            m = move_by_roads.get((route[k], route[k + 1]))
            if m is None:
                raise ValueError(f"no movement for hop {route[k]} -> {route[k + 1]}")
            target = _lane_set_for_hop(graph, move_by_roads, route, k + 1)
            hop_counts.setdefault(m.id, {}).setdefault(target, 0.0)
            hop_counts[m.id][target] += n
    n_periods = max(1.0, horizon / action_duration)
    arrivals = {
        ls: ArrivalProcess(rate=c / n_periods, distribution="deterministic")
        for ls, c in sorted(entry_counts.items())
    }
    full = {}
    for m in graph.movements.values():
        counts = hop_counts.get(m.id)
        if counts:
            total = sum(counts.values())
            full[m.id] = {ls: counts.get(ls, 0.0) / total for ls in m.out_lane_sets}
        else:
            full[m.id] = {ls: 1.0 / len(m.out_lane_sets) for ls in m.out_lane_sets}
    return DemandSpec(
        arrivals=arrivals,
        routing=TurnProbabilities(full=full),
        flows=flows,
        vehicle_max_speed=vehicle_max_speed,
    )


def _lane_set_for_hop(graph, move_by_roads, route, k) -> str:
    """Lane set a vehicle occupies on road route[k]: the one feeding its next
    movement, or the first lane set when the route ends there."""
    rid = route[k]
    if k + 1 < len(route):
        m = move_by_roads.get((rid, route[k + 1]))
        if m is None:
            raise ValueError(f"no movement for hop {rid} -> {route[k + 1]}")
        return m.in_lane_set
    return graph.roads[rid].lane_sets[0]
