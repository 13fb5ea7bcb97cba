"""Run orchestration: decision loop, metrics, and trajectory logging.

One :class:`Simulation` owns an engine (macroscopic or mesoscopic), the
run RNG, and the per-period bookkeeping.  Both the policy-driven
:func:`run` loop and the externally driven env session advance through the
same code path, so a policy replayed from exported observations reproduces
the internal run exactly.

Trajectory logs are newline-delimited JSON, one record per intersection
per period: ``{"t", "intersection", "phase", "lanes": {id: [Q, Q+, Q-]}}``
where ``t`` is the period start, ``phase`` the phase active during the
period, and queues are end-of-period.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .demand import S_GAP, DemandSpec, ServiceModel
from .macroscopic import MacroscopicEngine, SimulationError
from .mesoscopic import FINISHED, MesoscopicEngine
from .netmodel import NetworkGraph
from .policies import Policy, PolicyDecision, SignalTiming, schedule_transition

MODES = ("macroscopic", "mesoscopic")


@dataclass
class RunMetrics:
    policy: str
    seed: int
    mode: str
    horizon: float
    periods: int
    avg_travel_time: float
    avg_queue_length: float
    throughput: float
    vehicles_generated: int
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunMetrics":
        return cls(**json.loads(text))


class Simulation:
    def __init__(
        self,
        graph: NetworkGraph,
        demand: DemandSpec,
        timing: SignalTiming | None = None,
        service: ServiceModel | None = None,
        mode: str = "mesoscopic",
        seed: int = 0,
        horizon: float = 3600.0,
        initial_queues: dict[str, float] | None = None,
        s_gap: float = S_GAP,
        trajectory_sink=None,
    ):
        if mode not in MODES:
            raise ValueError(f"unknown mode '{mode}', expected one of {MODES}")
        if horizon <= 0:
            raise ValueError(f"horizon must be positive, got {horizon}")
        self.graph = graph
        self.demand = demand
        self.timing = timing or SignalTiming()
        self.mode = mode
        self.seed = seed
        self.horizon = float(horizon)
        self.service = service or ServiceModel.default(graph, self.timing.action_duration)
        self.rng = np.random.default_rng(seed)
        demand.check(graph)
        if mode == "macroscopic":
            self.engine = MacroscopicEngine(
                graph, demand, self.service, self.timing, self.rng, initial_queues
            )
        else:
            if initial_queues:
                raise ValueError("initial_queues only applies to macroscopic mode")
            self.engine = MesoscopicEngine(
                graph, demand, self.service, self.timing, self.rng, s_gap=s_gap
            )
        self.total_queue_series: list[float] = []
        self.trajectory_sink = trajectory_sink
        self._nodes = [graph.intersections[n] for n in self.engine.nodes]

    @property
    def t(self) -> float:
        return self.engine.t

    @property
    def done(self) -> bool:
        return self.engine.t >= self.horizon - 1e-9

    def snapshot(self):
        return self.engine.snapshot()

    def decide(self, policy: Policy) -> dict[str, PolicyDecision]:
        snap = self.engine.snapshot()
        return {
            node.id: policy.decide(snap, node, self.graph, self.engine.t, self.rng)
            for node in self._nodes
        }

    def decisions_from_actions(self, actions: dict[str, int]) -> dict[str, PolicyDecision]:
        """Translate external phase choices; rejects bad input untouched."""
        decisions = {}
        for node in self._nodes:
            if node.id not in actions:
                raise ValueError(f"missing action for intersection {node.id}")
            phase = actions[node.id]
            if not any(ph.index == phase for ph in node.phases):
                raise ValueError(f"invalid phase {phase} for intersection {node.id}")
            decisions[node.id] = PolicyDecision(
                intersection=node.id,
                next_phase=phase,
                transition=schedule_transition(self.engine.phase[node.id], phase, self.timing),
            )
        unknown = set(actions) - {n.id for n in self._nodes}
        if unknown:
            raise ValueError(f"actions for unknown intersections: {sorted(unknown)}")
        return decisions

    def advance(self, decisions: dict[str, PolicyDecision]) -> None:
        phases = {nid: d.next_phase for nid, d in decisions.items()}
        period_start = self.engine.t
        self.engine.step(decisions)
        self.total_queue_series.append(float(self.engine.total_queue()))
        if self.trajectory_sink is not None:
            self._log_trajectory(period_start, phases)

    def _log_trajectory(self, period_start: float, phases: dict[str, int]) -> None:
        snap = self.engine.snapshot()
        for node in self._nodes:
            lanes = {}
            for mid in node.movements:
                ls = self.graph.movements[mid].in_lane_set
                st = snap.lanes[ls]
                lanes[ls] = [st.queue, st.truncated, st.residual]
            rec = {
                "t": period_start,
                "intersection": node.id,
                "phase": phases[node.id],
                "lanes": lanes,
            }
            self.trajectory_sink(json.dumps(rec, sort_keys=True))

    def run(self, policy: Policy) -> RunMetrics:
        while not self.done:
            self.advance(self.decide(policy))
        return self.metrics(policy.name)

    def metrics(self, policy_name: str) -> RunMetrics:
        eng = self.engine
        periods = max(1, eng.period_index)
        avg_q = eng.queue_veh_periods / periods / len(self.graph.lane_sets)
        meta: dict = {"service_distribution": self.service.distribution}
        notes = [n for n in self.graph.notes if "reduced phase" in n]
        if notes:
            meta["reduced_phases"] = notes
        if self.mode == "macroscopic":
            throughput = eng.exited
            meta["travel_time_estimator"] = "littles_law"
            if throughput > 0:
                att = eng.queue_veh_periods * self.timing.action_duration / throughput
            else:
                att = 0.0
                meta["no_vehicles"] = True
            generated = int(round(eng.entered))
        else:
            finished = [
                v for v in eng.vehicles if v.state == FINISHED and v.exit_time <= self.horizon
            ]
            throughput = float(len(finished))
            times = [
                (min(v.exit_time, self.horizon) if v.state == FINISHED else self.horizon)
                - v.enter_time
                for v in eng.vehicles
            ]
            if times:
                att = float(np.mean(np.maximum(times, 0.0)))
            else:
                att = 0.0
                meta["no_vehicles"] = True
            generated = len(eng.vehicles)
            meta["buffered_at_horizon"] = eng.total_buffered()
        return RunMetrics(
            policy=policy_name,
            seed=self.seed,
            mode=self.mode,
            horizon=self.horizon,
            periods=periods,
            avg_travel_time=float(att),
            avg_queue_length=float(avg_q),
            throughput=float(throughput),
            vehicles_generated=generated,
            metadata=meta,
        )


def run(
    graph: NetworkGraph,
    demand: DemandSpec,
    policy: Policy,
    timing: SignalTiming | None = None,
    horizon: float = 3600.0,
    seed: int = 0,
    mode: str = "mesoscopic",
    service: ServiceModel | None = None,
    trajectory_path: str | None = None,
    initial_queues: dict[str, float] | None = None,
) -> RunMetrics:
    """Simulate one (scenario, policy, seed) run and return its metrics."""
    sink = None
    fh = None
    if trajectory_path is not None:
        fh = open(trajectory_path, "w")
        sink = lambda line: fh.write(line + "\n")
    try:
        sim = Simulation(
            graph,
            demand,
            timing=timing,
            service=service,
            mode=mode,
            seed=seed,
            horizon=horizon,
            initial_queues=initial_queues,
            trajectory_sink=sink,
        )
        return sim.run(policy)
    finally:
        if fh is not None:
            fh.close()


def read_trajectory_totals(path: str) -> list[tuple[float, float]]:
    """Per-period (t, total queue) series from a trajectory log."""
    totals: dict[float, float] = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            totals[rec["t"]] = totals.get(rec["t"], 0.0) + sum(
                q for q, _, _ in rec["lanes"].values()
            )
    return sorted(totals.items())
