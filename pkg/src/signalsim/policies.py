"""Signal control policies.

Every policy maps a traffic snapshot to one phase per intersection.
Pressure-style policies take the argmax of a per-phase score, breaking ties
toward the lowest phase index; the score differs per policy:

- ``g2p``           residual-discounted movement pressures summed per phase
- ``max_pressure``  plain lane-set queue difference (in total minus out
                    total), no residual discount
- ``efficient_mp``  per-lane normalized pressures

``fixed_time`` cycles the phase table on the decision clock and ``random``
draws uniformly.  Phase changes pass through a yellow plus all-red
transition; holding the current phase needs none.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .netmodel import Intersection, NetworkGraph, Phase, TurnMovement
from .pressure import TrafficSnapshot, efficient_pressure, generalized_tm_pressure, phase_pressure

POLICY_NAMES = ("g2p", "max_pressure", "efficient_mp", "fixed_time", "random")


@dataclass(frozen=True)
class SignalTiming:
    """Decision cadence and transition lengths, seconds."""

    action_duration: float = 10.0
    yellow: float = 3.0
    all_red: float = 2.0

    def __post_init__(self):
        if self.action_duration <= 0 or self.yellow < 0 or self.all_red < 0:
            raise ValueError(f"invalid timing {self}")
        if self.yellow + self.all_red > self.action_duration:
            raise ValueError(
                f"transition ({self.yellow}+{self.all_red}s) exceeds action duration {self.action_duration}s"
            )

    @property
    def green_fraction_after_switch(self) -> float:
        return (self.action_duration - self.yellow - self.all_red) / self.action_duration


@dataclass(frozen=True)
class Transition:
    yellow: float
    all_red: float


@dataclass(frozen=True)
class PolicyDecision:
    intersection: str
    next_phase: int
    transition: Transition | None  # None iff next_phase == current phase


def schedule_transition(current_phase: int, next_phase: int, timing: SignalTiming) -> Transition | None:
    """Yellow + all-red interval on a phase change, nothing on a hold."""
    if next_phase == current_phase:
        return None
    return Transition(yellow=timing.yellow, all_red=timing.all_red)


def argmax_phase(scores: Sequence[float], phases: Sequence[Phase]) -> int:
    """Index of the best-scoring phase; ties go to the lowest phase index."""
    if not phases:
        raise ValueError("no phases to select from")
    best = 0
    for i in range(1, len(phases)):
        if scores[i] > scores[best] or (scores[i] == scores[best] and phases[i].index < phases[best].index):
            best = i
    return phases[best].index


def g2p_select(snapshot: TrafficSnapshot, intersection: Intersection,
               movements: Mapping[str, TurnMovement]) -> int:
    scores = [phase_pressure(ph, movements, snapshot) for ph in intersection.phases]
    return argmax_phase(scores, intersection.phases)


def max_pressure_select(snapshot: TrafficSnapshot, intersection: Intersection,
                        movements: Mapping[str, TurnMovement]) -> int:
    def mp(mid):
        m = movements[mid]
        return snapshot.lanes[m.in_lane_set].queue - sum(
            snapshot.lanes[ls].queue for ls in m.out_lane_sets
        )

    scores = [sum(mp(mid) for mid in ph.movements) for ph in intersection.phases]
    return argmax_phase(scores, intersection.phases)


def efficient_mp_select(snapshot: TrafficSnapshot, intersection: Intersection,
                        graph: NetworkGraph) -> int:
    scores = [
        sum(efficient_pressure(graph.movements[mid], graph, snapshot) for mid in ph.movements)
        for ph in intersection.phases
    ]
    return argmax_phase(scores, intersection.phases)


def fixed_time_select(clock: float, intersection: Intersection, timing: SignalTiming) -> int:
    """Cycle the phase table, one action duration per phase, from clock 0."""
    k = int(clock // timing.action_duration) % len(intersection.phases)
    return intersection.phases[k].index


def random_select(rng: np.random.Generator, intersection: Intersection) -> int:
    return intersection.phases[int(rng.integers(len(intersection.phases)))].index


class Policy:
    """Named policy producing transition-aware decisions per intersection."""

    def __init__(self, name: str, timing: SignalTiming):
        if name not in POLICY_NAMES:
            raise ValueError(f"unknown policy '{name}', expected one of {POLICY_NAMES}")
        self.name = name
        self.timing = timing

    def select(self, snapshot: TrafficSnapshot, intersection: Intersection,
               graph: NetworkGraph, clock: float, rng: np.random.Generator) -> int:
        if self.name == "g2p":
            return g2p_select(snapshot, intersection, graph.movements)
        if self.name == "max_pressure":
            return max_pressure_select(snapshot, intersection, graph.movements)
        if self.name == "efficient_mp":
            return efficient_mp_select(snapshot, intersection, graph)
        if self.name == "fixed_time":
            return fixed_time_select(clock, intersection, self.timing)
        return random_select(rng, intersection)

    def decide(self, snapshot: TrafficSnapshot, intersection: Intersection,
               graph: NetworkGraph, clock: float, rng: np.random.Generator) -> PolicyDecision:
        current = snapshot.phases[intersection.id]
        chosen = self.select(snapshot, intersection, graph, clock, rng)
        return PolicyDecision(
            intersection=intersection.id,
            next_phase=chosen,
            transition=schedule_transition(current, chosen, self.timing),
        )


def make_policy(name: str, timing: SignalTiming | None = None) -> Policy:
    return Policy(name, timing or SignalTiming())
