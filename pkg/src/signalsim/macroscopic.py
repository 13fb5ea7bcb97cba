"""Macroscopic (distance-free) queue dynamics.

State is one expected queue count per lane set, advanced one decision
period at a time:

    Q(t+1) = Q(t) - min(C * A, Q(t)) + inflow(t+1)

Departures use begin-of-period queues everywhere, so upstream service and
downstream inflow within one period read the same state.  Served vehicles
split over the out road's lane sets proportionally to the turn
probabilities; service into an exit road leaves the network.  Queues are
real-valued expectations, which keeps deterministic scenarios
replication-exact.

A period that begins with a phase switch serves the new phase scaled by
the green fraction left after yellow plus all-red; movements outside the
new phase serve nothing that period.  Right turns always serve at full
rate.  The residual queue surrogate is max(Q - cap, 0) with cap one
green period of saturation per lane.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import sparse

from .demand import DemandSpec, ServiceModel
from .netmodel import RIGHT, NetworkGraph
from .policies import PolicyDecision, SignalTiming
from .pressure import LaneSetState, TrafficSnapshot


class SimulationError(RuntimeError):
    """Internal dynamics violation (negative queue, broken invariant)."""


class MacroscopicEngine:
    def __init__(
        self,
        graph: NetworkGraph,
        demand: DemandSpec,
        service: ServiceModel,
        timing: SignalTiming,
        rng: np.random.Generator,
        initial_queues: dict[str, float] | None = None,
    ):
        self.graph = graph
        self.demand = demand
        self.service = service
        self.timing = timing
        self.rng = rng

        self.lane_ids = sorted(graph.lane_sets)
        self.lane_pos = {ls: i for i, ls in enumerate(self.lane_ids)}
        n_lanes = len(self.lane_ids)
        cap_per_lane = math.floor(service.saturation_per_lane_per_second * timing.action_duration)
        self.trunc_cap = np.array(
            [cap_per_lane * graph.lane_sets[ls].lane_count for ls in self.lane_ids], dtype=float
        )

        self.movement_ids = sorted(graph.movements)
        self.m_pos = {m: i for i, m in enumerate(self.movement_ids)}
        n_m = len(self.movement_ids)
        self.in_idx = np.array(
            [self.lane_pos[graph.movements[m].in_lane_set] for m in self.movement_ids]
        )
        self.is_right = np.array(
            [graph.movements[m].turn == RIGHT for m in self.movement_ids]
        )
        self.to_exit = np.array(
            [graph.movements[m].out_road in graph.exit_roads for m in self.movement_ids]
        )

        routing = demand.routing
        rows, cols, vals = [], [], []
        for j, mid in enumerate(self.movement_ids):
            m = graph.movements[mid]
            if m.out_road in graph.exit_roads:
                continue
            for ls in m.out_lane_sets:
                p = routing.share(mid, ls) if routing is not None else 1.0 / len(m.out_lane_sets)
                if p > 0:
                    rows.append(self.lane_pos[ls])
                    cols.append(j)
                    vals.append(p)
        self.route_matrix = sparse.csr_matrix(
            (vals, (rows, cols)), shape=(n_lanes, n_m), dtype=float
        )

        # per (intersection, phase index): movement index array
        self.phase_moves: dict[tuple[str, int], np.ndarray] = {}
        self.rights_of: dict[str, np.ndarray] = {}
        self.nodes = sorted(i.id for i in graph.real_intersections())
        for nid in self.nodes:
            node = graph.intersections[nid]
            for ph in node.phases:
                self.phase_moves[(nid, ph.index)] = np.array(
                    [self.m_pos[m] for m in ph.movements], dtype=int
                )
            self.rights_of[nid] = np.array(
                [self.m_pos[m] for m in node.movements if graph.movements[m].turn == RIGHT],
                dtype=int,
            )

        self.arrival_lanes = sorted(demand.arrivals)
        self.arrival_idx = np.array([self.lane_pos[ls] for ls in self.arrival_lanes], dtype=int)

        self.Q = np.zeros(n_lanes)
        if initial_queues:
            for ls, q in initial_queues.items():
                self.Q[self.lane_pos[ls]] = float(q)
        self.phase = {nid: graph.intersections[nid].phases[0].index for nid in self.nodes}
        self.switched = {nid: False for nid in self.nodes}
        self.t = 0.0
        self.period_index = 0
        self.exited = 0.0
        self.entered = 0.0
        self.queue_veh_periods = 0.0
        self.last_served: np.ndarray | None = None

    # ---- state views ----

    def snapshot(self) -> TrafficSnapshot:
        qplus = np.minimum(self.Q, self.trunc_cap)
        residual = self.Q - qplus
        lanes = {
            ls: LaneSetState(queue=self.Q[i], truncated=qplus[i], residual=residual[i])
            for i, ls in enumerate(self.lane_ids)
        }
        return TrafficSnapshot(time=self.t, lanes=lanes, phases=dict(self.phase))

    def total_queue(self) -> float:
        return float(self.Q.sum())

    def queues(self) -> dict[str, float]:
        return {ls: float(self.Q[i]) for i, ls in enumerate(self.lane_ids)}

    # ---- dynamics ----

    def apply_decisions(self, decisions: dict[str, PolicyDecision]) -> None:
        for nid in self.nodes:
            d = decisions.get(nid)
            if d is None:
                raise SimulationError(f"missing decision for intersection {nid}")
            if (nid, d.next_phase) not in self.phase_moves:
                raise SimulationError(f"unknown phase {d.next_phase} at {nid}")
            self.switched[nid] = d.next_phase != self.phase[nid]
            self.phase[nid] = d.next_phase

    def advance_period(self) -> None:
        n_m = len(self.movement_ids)
        green = np.zeros(n_m)
        frac = self.timing.green_fraction_after_switch
        for nid in self.nodes:
            idx = self.phase_moves[(nid, self.phase[nid])]
            green[idx] = frac if self.switched[nid] else 1.0
            green[self.rights_of[nid]] = 1.0
        cap = self.service.draw_array(self.movement_ids, self.rng) * green
        served = np.minimum(cap, self.Q[self.in_idx])
        served[green == 0] = 0.0

        new_q = self.Q.copy()
        new_q[self.in_idx] -= served
        new_q += self.route_matrix @ served
        arrivals = np.array(
            [
                self.demand.arrivals[ls].draw(self.period_index, self.rng)
                for ls in self.arrival_lanes
            ],
            dtype=float,
        )
        if len(arrivals):
            new_q[self.arrival_idx] += arrivals
        if new_q.min() < -1e-9:
            worst = self.lane_ids[int(new_q.argmin())]
            raise SimulationError(f"negative queue on {worst}: {new_q.min()}")
        np.clip(new_q, 0.0, None, out=new_q)

        self.Q = new_q
        self.exited += float(served[self.to_exit].sum())
        self.entered += float(arrivals.sum()) if len(arrivals) else 0.0
        self.queue_veh_periods += float(new_q.sum())
        self.last_served = served
        self.t += self.timing.action_duration
        self.period_index += 1
        for nid in self.nodes:
            self.switched[nid] = False

    def step(self, decisions: dict[str, PolicyDecision]) -> None:
        self.apply_decisions(decisions)
        self.advance_period()


def step_macroscopic(engine: MacroscopicEngine, decisions: dict[str, PolicyDecision]) -> MacroscopicEngine:
    """Advance one decision period; returns the engine for chaining."""
    engine.step(decisions)
    return engine
