"""Mesoscopic (per-vehicle) point-queue dynamics.

Vehicles traverse roads at min(vehicle cap, road cap) and join a spaced
point queue at the stop line; queued vehicle k (0-based) stands
(k // lane_count) * s_gap meters back.  Service fires at decision-period
boundaries: up to floor(capacity x green fraction) head vehicles of each
actuated movement cross, pick the next lane set (explicit route or sampled
turn probabilities), and either enter the next road or leave the network.
A vehicle arriving at the stop line exactly on a boundary is served at the
next one.

Motion between boundaries is resolved exactly from arrival times, so a
sub-step only processes queue-join events inside its window; granularity
of observation, not dynamics.  Entry roads hold a finite storage
(length / s_gap per lane); arrivals beyond it wait in an unbounded source
buffer and their travel time runs from the intended entry.
"""

from __future__ import annotations

import math
from bisect import bisect_right, insort
from dataclasses import dataclass

import numpy as np

from .demand import S_GAP, DemandSpec, FlowEntry, ServiceModel
from .macroscopic import SimulationError
from .netmodel import RIGHT, NetworkGraph
from .policies import PolicyDecision, SignalTiming
from .pressure import LaneSetState, TrafficSnapshot, effective_range

BUFFERED = "buffered"
RUNNING = "running"
QUEUED = "queued"
CROSSING = "crossing"
FINISHED = "finished"


@dataclass(slots=True)
class Vehicle:
    id: int
    enter_time: float  # intended network entry, basis for travel time
    max_speed: float
    route: tuple[str, ...] | None  # None routes by turn probabilities
    route_pos: int = 0
    state: str = BUFFERED
    lane_set: str | None = None
    distance_to_stopline: float | None = None  # position at last transition
    exit_time: float | None = None
    t0: float = 0.0  # unimpeded stop-line arrival while running


class _LaneRt:
    __slots__ = ("queue", "runners", "buffer", "last_join")

    def __init__(self):
        self.queue: list[Vehicle] = []
        self.runners: list[tuple[float, int, Vehicle]] = []  # (t0, seq, vehicle)
        self.buffer: list[Vehicle] = []
        self.last_join = -math.inf


class MesoscopicEngine:
    def __init__(
        self,
        graph: NetworkGraph,
        demand: DemandSpec,
        service: ServiceModel,
        timing: SignalTiming,
        rng: np.random.Generator,
        s_gap: float = S_GAP,
    ):
        self.graph = graph
        self.demand = demand
        self.service = service
        self.timing = timing
        self.rng = rng
        self.s_gap = s_gap

        self.lane_ids = sorted(graph.lane_sets)
        self.rt = {ls: _LaneRt() for ls in self.lane_ids}
        self.speed_of = {}  # lane set -> free-flow cap of the road
        self.l_max = {}
        self.trunc_slots = {}  # queued vehicles within effective range
        self.storage = {}
        for ls_id in self.lane_ids:
            ls = graph.lane_sets[ls_id]
            self.speed_of[ls_id] = ls.max_speed
            lm = effective_range(ls.max_speed, demand.vehicle_max_speed, timing.action_duration)
            self.l_max[ls_id] = lm
            self.trunc_slots[ls_id] = (math.floor(lm / s_gap) + 1) * ls.lane_count
            self.storage[ls_id] = max(1, math.floor(ls.length / s_gap)) * ls.lane_count

        self.nodes = sorted(i.id for i in graph.real_intersections())
        self.phase_moves = {}
        self.rights_of = {}
        for nid in self.nodes:
            node = graph.intersections[nid]
            for ph in node.phases:
                self.phase_moves[(nid, ph.index)] = tuple(ph.movements)
            self.rights_of[nid] = tuple(
                m for m in node.movements if graph.movements[m].turn == RIGHT
            )

        # cumulative routing shares per movement, for one-uniform-draw sampling
        self.route_cum = {}
        if demand.routing is not None:
            for mid, m in graph.movements.items():
                shares = [demand.routing.share(mid, ls) for ls in m.out_lane_sets]
                self.route_cum[mid] = (m.out_lane_sets, np.cumsum(shares))

        self.move_by_roads = {(m.in_road, m.out_road): m for m in graph.movements.values()}
        self.arrival_lanes = sorted(demand.arrivals)
        self.uniform_speed = not demand.flows or len({f.max_speed for f in demand.flows}) <= 1

        self.t = 0.0
        self.offset = 0.0  # position inside the current period
        self.period_index = 0
        self.phase = {nid: graph.intersections[nid].phases[0].index for nid in self.nodes}
        self.switched = {nid: False for nid in self.nodes}
        self.vehicles: list[Vehicle] = []
        self._seq = 0
        self.queue_veh_periods = 0.0
        self.finished = 0

    # ---- vehicle plumbing ----

    def _effective_speed(self, vehicle: Vehicle, lane_set: str) -> float:
        return min(vehicle.max_speed, self.speed_of[lane_set])

    def _new_vehicle(self, enter_time: float, route, max_speed: float) -> Vehicle:
        v = Vehicle(id=len(self.vehicles), enter_time=enter_time, max_speed=max_speed, route=route)
        self.vehicles.append(v)
        return v

    def _start_running(self, v: Vehicle, lane_set: str, now: float) -> None:
        length = self.graph.lane_sets[lane_set].length
        v.state = RUNNING
        v.lane_set = lane_set
        v.distance_to_stopline = length
        v.t0 = now + length / self._effective_speed(v, lane_set)
        self._seq += 1
        insort(self.rt[lane_set].runners, (v.t0, self._seq, v))

    def _finish_free_flow(self, v: Vehicle, road_id: str, now: float) -> None:
        road = self.graph.roads[road_id]
        v.state = FINISHED
        v.lane_set = None
        v.exit_time = now + road.length / min(v.max_speed, road.max_speed)
        self.finished += 1

    def _occupancy(self, lane_set: str) -> int:
        rt = self.rt[lane_set]
        return len(rt.queue) + len(rt.runners)

    def _spawn_on_entry(self, v: Vehicle, lane_set: str, now: float) -> None:
        if self._occupancy(lane_set) >= self.storage[lane_set]:
            v.state = BUFFERED
            v.lane_set = lane_set
            self.rt[lane_set].buffer.append(v)
        else:
            self._start_running(v, lane_set, now)

    def _entry_lane_for_route(self, route: tuple[str, ...]) -> str | None:
        """Lane set on the first road; None when the route is free-flow only."""
        if len(route) == 1:
            return None
        m = self.move_by_roads.get((route[0], route[1]))
        if m is None:
            raise SimulationError(f"no movement for hop {route[0]} -> {route[1]}")
        return m.in_lane_set

    # ---- period phases ----

    def apply_decisions(self, decisions: dict[str, PolicyDecision]) -> None:
        if abs(self.offset) > 1e-9:
            raise SimulationError("decisions are only accepted at period boundaries")
        for nid in self.nodes:
            d = decisions.get(nid)
            if d is None:
                raise SimulationError(f"missing decision for intersection {nid}")
            if (nid, d.next_phase) not in self.phase_moves:
                raise SimulationError(f"unknown phase {d.next_phase} at {nid}")
            self.switched[nid] = d.next_phase != self.phase[nid]
            self.phase[nid] = d.next_phase

    def _service_budget(self, mid: str, frac: float) -> int:
        if self.service.distribution == "deterministic":
            cap = self.service.rates[mid]
        else:
            n = int(self.service.bounds[mid])
            cap = float(self.rng.binomial(n, self.service.rates[mid] / n))
        return int(math.floor(cap * frac + 1e-9))

    def _cross(self, v: Vehicle, mid: str, now: float) -> None:
        v.state = CROSSING
        m = self.graph.movements[mid]
        if v.route is not None:
            v.route_pos += 1
            rid = v.route[v.route_pos]
            if v.route_pos == len(v.route) - 1 or rid in self.graph.exit_roads:
                self._finish_free_flow(v, rid, now)
                return
            nxt = self.move_by_roads.get((rid, v.route[v.route_pos + 1]))
            if nxt is None:
                raise SimulationError(f"no movement for hop {rid} -> {v.route[v.route_pos + 1]}")
            self._start_running(v, nxt.in_lane_set, now)
            return
        lanes, cum = self.route_cum[mid]
        u = self.rng.random() * cum[-1]
        ls = lanes[min(bisect_right(cum, u), len(lanes) - 1)]
        if m.out_road in self.graph.exit_roads:
            self._finish_free_flow(v, m.out_road, now)
        else:
            self._start_running(v, ls, now)

    def _service_event(self) -> None:
        now = self.t
        frac_switch = self.timing.green_fraction_after_switch
        for nid in self.nodes:
            active = self.phase_moves[(nid, self.phase[nid])]
            frac = frac_switch if self.switched[nid] else 1.0
            node = self.graph.intersections[nid]
            for mid in node.movements:
                if mid in active:
                    f = frac
                elif mid in self.rights_of[nid]:
                    f = 1.0
                else:
                    continue
                m = self.graph.movements[mid]
                q = self.rt[m.in_lane_set].queue
                if not q:
                    if self.service.distribution != "deterministic":
                        self._service_budget(mid, f)  # keep the draw stream aligned
                    continue
                n = min(self._service_budget(mid, f), len(q))
                for _ in range(n):
                    self._cross(q.pop(0), mid, now)

    def _spawn_and_release(self) -> None:
        now, dt = self.t, self.timing.action_duration
        # release buffered vehicles into storage freed by the service event
        for ls in self.lane_ids:
            rt = self.rt[ls]
            while rt.buffer and self._occupancy(ls) < self.storage[ls]:
                self._start_running(rt.buffer.pop(0), ls, now)
        # chronological spawn list for the period: explicit flows and rate
        # arrivals interleaved (rate counts are drawn first, in lane order)
        todo: list[tuple[float, int, object]] = []
        if self.demand.flows is not None:
            for fi, f in enumerate(self.demand.flows):
                if f.start_time >= now + dt or f.end_time < now:
                    continue
                k = max(0, math.ceil((now - f.start_time) / f.interval - 1e-9))
                t = f.start_time + k * f.interval
                while t < now + dt - 1e-9 and t <= f.end_time + 1e-9:
                    todo.append((t, 0, fi))
                    t += f.interval
        for li, ls in enumerate(self.arrival_lanes):
            n = self.demand.arrivals[ls].draw(self.period_index, self.rng)
            for i in range(n):
                todo.append((now + i * dt / n, 1, li))
        todo.sort()
        for t, kind, key in todo:
            if kind == 0:
                f = self.demand.flows[key]
                v = self._new_vehicle(t, f.route, f.max_speed)
                ls = self._entry_lane_for_route(f.route)
                if ls is None:
                    self._finish_free_flow(v, f.route[0], t)
                else:
                    self._spawn_on_entry(v, ls, t)
            else:
                ls = self.arrival_lanes[key]
                v = self._new_vehicle(t, None, self.demand.vehicle_max_speed)
                self._spawn_on_entry(v, ls, t)

    def _process_joins(self, window_start: float, window_end: float) -> None:
        for ls_id in self.lane_ids:
            rt = self.rt[ls_id]
            if not rt.runners:
                continue
            lane = self.graph.lane_sets[ls_id]
            while rt.runners:
                t0, _, v = rt.runners[0]
                speed = self._effective_speed(v, ls_id)
                tail = (len(rt.queue) // lane.lane_count) * self.s_gap
                jt = t0 - min(tail, lane.length) / speed
                jt = max(jt, rt.last_join, window_start)
                if jt >= window_end - 1e-9:
                    break
                rt.runners.pop(0)
                v.state = QUEUED
                v.distance_to_stopline = tail
                rt.queue.append(v)
                rt.last_join = jt

    def substep(self, dt: float) -> None:
        """Advance by dt <= remaining period; boundary events fire on entry."""
        period = self.timing.action_duration
        if dt <= 0 or self.offset + dt > period + 1e-9:
            raise SimulationError(f"substep {dt} does not fit the period")
        if abs(self.offset) < 1e-9:
            self._service_event()
            self._spawn_and_release()
        self._process_joins(self.t, self.t + dt)
        self.t += dt
        self.offset += dt
        if self.offset >= period - 1e-9:
            self.offset = 0.0
            self.period_index += 1
            self.queue_veh_periods += self.total_queue()
            for nid in self.nodes:
                self.switched[nid] = False

    def advance_period(self) -> None:
        self.substep(self.timing.action_duration)

    def step(self, decisions: dict[str, PolicyDecision]) -> None:
        self.apply_decisions(decisions)
        self.advance_period()

    # ---- state views ----

    def total_queue(self) -> int:
        return sum(len(self.rt[ls].queue) for ls in self.lane_ids)

    def total_buffered(self) -> int:
        return sum(len(self.rt[ls].buffer) for ls in self.lane_ids)

    def snapshot(self) -> TrafficSnapshot:
        lanes = {}
        for ls_id in self.lane_ids:
            rt = self.rt[ls_id]
            q = len(rt.queue)
            qplus = min(q, self.trunc_slots[ls_id])
            running = self._running_within(ls_id)
            lanes[ls_id] = LaneSetState(
                queue=q, truncated=qplus, residual=q - qplus, running=running
            )
        return TrafficSnapshot(time=self.t, lanes=lanes, phases=dict(self.phase))

    def _running_within(self, ls_id: str) -> int:
        rt = self.rt[ls_id]
        if not rt.runners:
            return 0
        lm = self.l_max[ls_id]
        if self.uniform_speed:
            speed = min(self.demand.vehicle_max_speed, self.speed_of[ls_id])
            thresh = self.t + lm / speed
            return bisect_right(rt.runners, (thresh, float("inf"), None))
        return sum(
            1
            for t0, _, v in rt.runners
            if (t0 - self.t) * self._effective_speed(v, ls_id) <= lm
        )

    def check_conservation(self) -> None:
        in_network = sum(
            len(self.rt[ls].queue) + len(self.rt[ls].runners) + len(self.rt[ls].buffer)
            for ls in self.lane_ids
        )
        if in_network + self.finished != len(self.vehicles):
            raise SimulationError(
                f"vehicle count mismatch: {in_network} in network + {self.finished} finished "
                f"!= {len(self.vehicles)} generated"
            )


def step_mesoscopic(
    engine: MesoscopicEngine,
    decisions: dict[str, PolicyDecision] | None,
    dt: float,
) -> MesoscopicEngine:
    """Advance one sub-step; decisions are required exactly at boundaries."""
    if abs(engine.offset) < 1e-9:
        if decisions is None:
            raise SimulationError("period boundary needs decisions")
        engine.apply_decisions(decisions)
    engine.substep(dt)
    return engine
