"""Road network data model.

A network is a directed graph of roads between intersections.  Each road
carries one *lane set* per turn direction it serves (left / straight /
right); a lane set groups homogeneous lanes that share signalling and a
downstream turn.  A *turn movement* connects the lane set of its incoming
road to all lane sets of its outgoing road.  Non-virtual intersections own
signal phases; each phase actuates one or two non-conflicting left/straight
movements.  Right turns are always permitted and never appear in phases.

Networks come from two builders: :func:`build_synthetic_grid` for
rectangular grids with virtual boundary nodes, and
:func:`load_cityflow_roadnet` for CityFlow-format ``roadnet.json`` files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

LEFT = "left"
STRAIGHT = "straight"
RIGHT = "right"
DIRECTIONS = (LEFT, STRAIGHT, RIGHT)

COMPASS = ("N", "E", "S", "W")
OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}

# Exit side of a turn, by approach (right-hand traffic).  A vehicle coming
# from the north heads south: its left turn exits east, its right turn west.
TURN_EXIT = {
    "N": {LEFT: "E", STRAIGHT: "S", RIGHT: "W"},
    "S": {LEFT: "W", STRAIGHT: "N", RIGHT: "E"},
    "E": {LEFT: "S", STRAIGHT: "W", RIGHT: "N"},
    "W": {LEFT: "N", STRAIGHT: "E", RIGHT: "S"},
}

# Canonical phase table for a four-approach intersection: opposing straights,
# opposing lefts, then the four same-approach (straight + left) pairs.
# Indices are 1-based and stable even when some phases are absent.
PHASE_TABLE = (
    (("N", STRAIGHT), ("S", STRAIGHT)),
    (("E", STRAIGHT), ("W", STRAIGHT)),
    (("N", LEFT), ("S", LEFT)),
    (("E", LEFT), ("W", LEFT)),
    (("N", STRAIGHT), ("N", LEFT)),
    (("E", STRAIGHT), ("E", LEFT)),
    (("S", STRAIGHT), ("S", LEFT)),
    (("W", STRAIGHT), ("W", LEFT)),
)


class RoadnetError(ValueError):
    """Raised for unparseable or topologically broken network inputs."""


@dataclass(frozen=True)
class LaneSet:
    """Homogeneous lanes of one road feeding one turn direction."""

    id: str
    road: str
    direction: str  # left | straight | right
    lane_count: int
    max_speed: float  # m/s
    length: float  # m


@dataclass(frozen=True)
class Road:
    id: str
    start: str  # upstream intersection id
    end: str  # downstream intersection id
    length: float
    max_speed: float
    lane_sets: tuple[str, ...]
    points: tuple[tuple[float, float], ...] = ()


@dataclass(frozen=True)
class TurnMovement:
    """One turn at an intersection: incoming lane set to an outgoing road."""

    id: str
    intersection: str
    in_road: str
    out_road: str
    in_lane_set: str
    out_lane_sets: tuple[str, ...]
    turn: str  # direction of the feeding lane set
    approach: str  # compass label of the incoming road


@dataclass(frozen=True)
class Phase:
    """A signal phase actuating one or two non-conflicting movements.

    The standard table always yields two movements; degenerate topologies
    (an approach missing its partner movement) fall back to solo phases so
    every left/straight movement stays serviceable.
    """

    index: int  # 1-based, stable across reduced tables
    movements: tuple[str, ...]


@dataclass(frozen=True)
class Intersection:
    id: str
    incoming_roads: tuple[str, ...]
    outgoing_roads: tuple[str, ...]
    movements: tuple[str, ...]
    phases: tuple[Phase, ...]
    is_virtual: bool
    # compass label per incoming road, derived from geometry
    approaches: tuple[tuple[str, str], ...] = ()


@dataclass
class NetworkGraph:
    """Immutable-by-convention container for one road network."""

    roads: dict[str, Road]
    lane_sets: dict[str, LaneSet]
    intersections: dict[str, Intersection]
    movements: dict[str, TurnMovement]
    entry_roads: frozenset[str]
    exit_roads: frozenset[str]
    internal_roads: frozenset[str]
    notes: tuple[str, ...] = ()

    def real_intersections(self) -> list[Intersection]:
        return [i for i in self.intersections.values() if not i.is_virtual]

    def movements_at(self, intersection_id: str) -> list[TurnMovement]:
        node = self.intersections[intersection_id]
        return [self.movements[m] for m in node.movements]

    def signalized_movements(self, intersection_id: str) -> list[TurnMovement]:
        """Left/straight movements, the ones phases can actuate."""
        return [m for m in self.movements_at(intersection_id) if m.turn != RIGHT]


# ---- geometry helpers ----


def _heading_to_approach(dx: float, dy: float) -> str:
    """Compass label of the side a road comes *from*, given its travel heading."""
    if abs(dx) >= abs(dy):
        return "W" if dx > 0 else "E"
    return "S" if dy > 0 else "N"


def _polyline_length(points) -> float:
    return sum(
        math.hypot(points[i + 1][0] - points[i][0], points[i + 1][1] - points[i][1])
        for i in range(len(points) - 1)
    )


def movements_conflict(m1: TurnMovement, m2: TurnMovement) -> bool:
    """True when two movements cannot share a green.

    Right turns never conflict.  Same-approach pairs and opposing
    same-turn pairs (both straights or both lefts) are compatible.
    """
    if RIGHT in (m1.turn, m2.turn):
        return False
    if m1.in_road == m2.in_road:
        return False
    if m1.turn == m2.turn and OPPOSITE.get(m1.approach) == m2.approach:
        return False
    return True


def synthesize_phases(by_key: dict[tuple[str, str], str]) -> tuple[tuple[Phase, ...], bool]:
    """Build the canonical phase set over the movements present.

    ``by_key`` maps (approach, turn) to a movement id for the left/straight
    movements of one intersection.  Returns the phases and a flag telling
    whether the table had to be reduced.
    """
    phases = []
    covered: set[str] = set()
    for idx, pair in enumerate(PHASE_TABLE, start=1):
        if all(key in by_key for key in pair):
            ids = tuple(by_key[key] for key in pair)
            phases.append(Phase(index=idx, movements=ids))
            covered.update(ids)
    # Orphans (partner movements absent on both table slots) get a solo
    # phase at their same-approach slot, which is necessarily free.
    for idx, pair in enumerate(PHASE_TABLE[4:], start=5):
        present = [by_key[key] for key in pair if key in by_key]
        if len(present) == 1 and present[0] not in covered:
            phases.append(Phase(index=idx, movements=(present[0],)))
            covered.add(present[0])
    phases.sort(key=lambda p: p.index)
    reduced = len(phases) < len(PHASE_TABLE)
    return tuple(phases), reduced


# ---- synthetic grid builder ----


def build_synthetic_grid(
    rows: int,
    cols: int,
    lanes_per_direction: int = 1,
    road_length: float = 300.0,
    max_speed: float = 16.67,
) -> NetworkGraph:
    """Rectangular rows x cols grid with virtual boundary nodes.

    Every adjacent node pair is joined by two one-way roads; every road
    carries left/straight/right lane sets with ``lanes_per_direction``
    lanes each.  Boundary roads attach to virtual nodes: inbound ones are
    entry roads, outbound ones exit roads.
    """
    if rows < 1 or cols < 1:
        raise RoadnetError(f"grid must be at least 1x1, got {rows}x{cols}")
    if lanes_per_direction < 1:
        raise RoadnetError("lanes_per_direction must be >= 1")
    if road_length <= 0 or max_speed <= 0:
        raise RoadnetError("road_length and max_speed must be positive")

    def node_point(node: str) -> tuple[float, float]:
        kind, a, b = node.split("_")
        if kind == "I":
            return (int(b) + 1.0) * road_length, (int(a) + 1.0) * road_length
        side, k = a, int(b)
        if side == "N":
            return (k + 1.0) * road_length, (rows + 1.0) * road_length
        if side == "S":
            return (k + 1.0) * road_length, 0.0
        if side == "E":
            return (cols + 1.0) * road_length, (k + 1.0) * road_length
        return 0.0, (k + 1.0) * road_length  # W

    # row r grows northward, column c grows eastward
    def neighbor(r: int, c: int, side: str) -> str:
        if side == "N":
            return f"I_{r + 1}_{c}" if r + 1 < rows else f"V_N_{c}"
        if side == "S":
            return f"I_{r - 1}_{c}" if r - 1 >= 0 else f"V_S_{c}"
        if side == "E":
            return f"I_{r}_{c + 1}" if c + 1 < cols else f"V_E_{r}"
        return f"I_{r}_{c - 1}" if c - 1 >= 0 else f"V_W_{r}"

    nodes = {f"I_{r}_{c}" for r in range(rows) for c in range(cols)}
    virtuals = set()
    road_pairs = set()
    for r in range(rows):
        for c in range(cols):
            me = f"I_{r}_{c}"
            for side in COMPASS:
                other = neighbor(r, c, side)
                if other.startswith("V"):
                    virtuals.add(other)
                road_pairs.add((other, me))
                road_pairs.add((me, other))

    roads: dict[str, Road] = {}
    lane_sets: dict[str, LaneSet] = {}
    for u, v in sorted(road_pairs):
        rid = f"{u}__{v}"
        ls_ids = tuple(f"{rid}:{d}" for d in DIRECTIONS)
        roads[rid] = Road(
            id=rid,
            start=u,
            end=v,
            length=road_length,
            max_speed=max_speed,
            lane_sets=ls_ids,
            points=(node_point(u), node_point(v)),
        )
        for d in DIRECTIONS:
            lane_sets[f"{rid}:{d}"] = LaneSet(
                id=f"{rid}:{d}",
                road=rid,
                direction=d,
                lane_count=lanes_per_direction,
                max_speed=max_speed,
                length=road_length,
            )

    movements: dict[str, TurnMovement] = {}
    intersections: dict[str, Intersection] = {}
    for r in range(rows):
        for c in range(cols):
            me = f"I_{r}_{c}"
            incoming = tuple(sorted(rid for rid, rd in roads.items() if rd.end == me))
            outgoing = tuple(sorted(rid for rid, rd in roads.items() if rd.start == me))
            approaches = {}
            for rid in incoming:
                u = roads[rid].start
                # road comes from whichever side its start node sits on
                ux, uy = node_point(u)
                mx, my = node_point(me)
                approaches[rid] = _heading_to_approach(mx - ux, my - uy)
            out_by_side = {}
            for rid in outgoing:
                vx, vy = node_point(roads[rid].end)
                mx, my = node_point(me)
                out_by_side[_heading_to_approach(mx - vx, my - vy)] = rid
            my_moves = []
            by_key: dict[tuple[str, str], str] = {}
            for rid in incoming:
                app = approaches[rid]
                for turn in DIRECTIONS:
                    out_rid = out_by_side[TURN_EXIT[app][turn]]
                    mid = f"{me}:{app}{turn[0].upper()}"
                    movements[mid] = TurnMovement(
                        id=mid,
                        intersection=me,
                        in_road=rid,
                        out_road=out_rid,
                        in_lane_set=f"{rid}:{turn}",
                        out_lane_sets=roads[out_rid].lane_sets,
                        turn=turn,
                        approach=app,
                    )
                    my_moves.append(mid)
                    if turn != RIGHT:
                        by_key[(app, turn)] = mid
            phases, _ = synthesize_phases(by_key)
            intersections[me] = Intersection(
                id=me,
                incoming_roads=incoming,
                outgoing_roads=outgoing,
                movements=tuple(sorted(my_moves)),
                phases=phases,
                is_virtual=False,
                approaches=tuple(sorted(approaches.items())),
            )
    for v in sorted(virtuals):
        incoming = tuple(sorted(rid for rid, rd in roads.items() if rd.end == v))
        outgoing = tuple(sorted(rid for rid, rd in roads.items() if rd.start == v))
        intersections[v] = Intersection(
            id=v,
            incoming_roads=incoming,
            outgoing_roads=outgoing,
            movements=(),
            phases=(),
            is_virtual=True,
        )

    entry = frozenset(r.id for r in roads.values() if intersections[r.start].is_virtual)
    exit_ = frozenset(r.id for r in roads.values() if intersections[r.end].is_virtual)
    internal = frozenset(roads) - entry - exit_
    return NetworkGraph(
        roads=roads,
        lane_sets=lane_sets,
        intersections=intersections,
        movements=movements,
        entry_roads=entry,
        exit_roads=exit_,
        internal_roads=internal,
        notes=(f"synthetic_grid rows={rows} cols={cols} lanes={lanes_per_direction}",),
    )


# ---- CityFlow ingestion ----


def load_cityflow_roadnet(path: str) -> NetworkGraph:
    """Load the supported subset of a CityFlow ``roadnet.json``.

    Lane-level links are aggregated to homogeneous lane sets by turn type.
    U-turn road links are dropped.  Signal phases come from well-formed
    ``lightphases`` (phases that actuate no left/straight movement, such as
    all-red paddings, are skipped); absent or malformed tables fall back to
    the canonical synthesis.
    """
    try:
        with open(path) as fh:
            raw = fh.read()
        data = json.loads(raw)
    except OSError as exc:
        raise RoadnetError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RoadnetError(f"{path}: parse error at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(data, dict) or "roads" not in data or "intersections" not in data:
        raise RoadnetError(f"{path}: expected object with 'roads' and 'intersections'")

    raw_roads = {r["id"]: r for r in data["roads"]}
    raw_nodes = {i["id"]: i for i in data["intersections"]}

    for rid, rr in raw_roads.items():
        for key in ("startIntersection", "endIntersection"):
            if rr.get(key) not in raw_nodes:
                raise RoadnetError(f"{path}: road '{rid}' references unknown intersection '{rr.get(key)}'")

    cf_type = {"turn_left": LEFT, "go_straight": STRAIGHT, "turn_right": RIGHT}

    def is_uturn(link) -> bool:
        a, b = raw_roads.get(link["startRoad"]), raw_roads.get(link["endRoad"])
        if a is None or b is None:
            return False
        return (
            a["startIntersection"] == b["endIntersection"]
            and a["endIntersection"] == b["startIntersection"]
        )

    # collect per-road turn lanes from the roadLinks of every intersection
    turn_lanes: dict[str, dict[str, set[int]]] = {rid: {} for rid in raw_roads}
    links_by_node: dict[str, list[dict]] = {}
    for nid, node in raw_nodes.items():
        kept = []
        for link in node.get("roadLinks", []) or []:
            if link.get("type") not in cf_type:
                raise RoadnetError(f"{path}: intersection '{nid}' has unknown roadLink type '{link.get('type')}'")
            for key in ("startRoad", "endRoad"):
                if link[key] not in raw_roads:
                    raise RoadnetError(f"{path}: intersection '{nid}' roadLink references unknown road '{link[key]}'")
            if is_uturn(link):
                continue
            kept.append(link)
            d = cf_type[link["type"]]
            lanes = {ll.get("startLaneIndex", 0) for ll in link.get("laneLinks", [])} or {0}
            turn_lanes[link["startRoad"]].setdefault(d, set()).update(lanes)
        links_by_node[nid] = kept

    roads: dict[str, Road] = {}
    lane_sets: dict[str, LaneSet] = {}
    for rid, rr in sorted(raw_roads.items()):
        pts = tuple((p["x"], p["y"]) for p in rr.get("points", []))
        if len(pts) < 2:
            raise RoadnetError(f"{path}: road '{rid}' needs at least two points")
        length = _polyline_length(pts)
        if length <= 0:
            raise RoadnetError(f"{path}: road '{rid}' has zero length")
        speeds = [ln.get("maxSpeed", 16.67) for ln in rr.get("lanes", [{}])]
        max_speed = max(speeds)
        per_dir = turn_lanes[rid]
        if per_dir:
            dirs = [d for d in DIRECTIONS if d in per_dir]
            counts = {d: len(per_dir[d]) for d in dirs}
        else:
            # no outgoing links (e.g. road into a virtual node): one set
            dirs = [STRAIGHT]
            counts = {STRAIGHT: max(1, len(rr.get("lanes", [])))}
        ls_ids = tuple(f"{rid}:{d}" for d in dirs)
        roads[rid] = Road(
            id=rid,
            start=rr["startIntersection"],
            end=rr["endIntersection"],
            length=length,
            max_speed=max_speed,
            lane_sets=ls_ids,
            points=pts,
        )
        for d in dirs:
            lane_sets[f"{rid}:{d}"] = LaneSet(
                id=f"{rid}:{d}",
                road=rid,
                direction=d,
                lane_count=counts[d],
                max_speed=max_speed,
                length=length,
            )

    movements: dict[str, TurnMovement] = {}
    intersections: dict[str, Intersection] = {}
    notes: list[str] = []
    for nid, node in sorted(raw_nodes.items()):
        incoming = tuple(sorted(r.id for r in roads.values() if r.end == nid))
        outgoing = tuple(sorted(r.id for r in roads.values() if r.start == nid))
        if node.get("virtual", False):
            intersections[nid] = Intersection(
                id=nid,
                incoming_roads=incoming,
                outgoing_roads=outgoing,
                movements=(),
                phases=(),
                is_virtual=True,
            )
            continue
        approaches = {}
        for rid in incoming:
            pts = roads[rid].points
            (x0, y0), (x1, y1) = pts[-2], pts[-1]
            approaches[rid] = _heading_to_approach(x1 - x0, y1 - y0)
        my_moves = []
        by_key: dict[tuple[str, str], str] = {}
        link_movement: dict[int, str] = {}
        for li, link in enumerate(node.get("roadLinks", []) or []):
            if link not in links_by_node[nid]:
                continue  # dropped u-turn
            d = cf_type[link["type"]]
            in_rid, out_rid = link["startRoad"], link["endRoad"]
            if in_rid not in approaches:
                raise RoadnetError(f"{path}: roadLink at '{nid}' starts at road '{in_rid}' which does not end there")
            app = approaches[in_rid]
            mid = f"{nid}:{app}{d[0].upper()}"
            if mid in movements:
                raise RoadnetError(f"{path}: duplicate movement '{mid}' (two {d} links from approach {app})")
            in_ls = f"{in_rid}:{d}"
            if in_ls not in lane_sets:
                raise RoadnetError(f"{path}: road '{in_rid}' has no {d} lanes but a {d} roadLink at '{nid}'")
            movements[mid] = TurnMovement(
                id=mid,
                intersection=nid,
                in_road=in_rid,
                out_road=out_rid,
                in_lane_set=in_ls,
                out_lane_sets=roads[out_rid].lane_sets,
                turn=d,
                approach=app,
            )
            my_moves.append(mid)
            link_movement[li] = mid
            if d != RIGHT:
                by_key[(app, d)] = mid
        phases = _phases_from_lightphases(node, link_movement, movements)
        if phases is None:
            phases, reduced = synthesize_phases(by_key)
            if reduced:
                notes.append(f"reduced phase table at {nid}")
        intersections[nid] = Intersection(
            id=nid,
            incoming_roads=incoming,
            outgoing_roads=outgoing,
            movements=tuple(sorted(my_moves)),
            phases=phases,
            is_virtual=False,
            approaches=tuple(sorted(approaches.items())),
        )

    entry = frozenset(
        r.id for r in roads.values() if intersections[r.start].is_virtual
    )
    exit_ = frozenset(
        r.id for r in roads.values() if intersections[r.end].is_virtual and r.id not in entry
    )
    internal = frozenset(roads) - entry - exit_
    return NetworkGraph(
        roads=roads,
        lane_sets=lane_sets,
        intersections=intersections,
        movements=movements,
        entry_roads=entry,
        exit_roads=exit_,
        internal_roads=internal,
        notes=tuple(notes),
    )


def _phases_from_lightphases(node, link_movement, movements) -> tuple[Phase, ...] | None:
    """Translate a lightphases table, or return None when it is unusable."""
    table = (node.get("trafficLight") or {}).get("lightphases")
    if not table:
        return None
    phases = []
    idx = 0
    for entry in table:
        links = entry.get("availableRoadLinks")
        if links is None:
            return None
        mids = []
        for li in links:
            mid = link_movement.get(li)
            if mid is not None and movements[mid].turn != RIGHT:
                mids.append(mid)
        if not mids:
            continue  # all-red / right-only padding phase
        mids = tuple(dict.fromkeys(mids))
        if len(mids) > 2:
            return None
        if len(mids) == 2 and movements_conflict(movements[mids[0]], movements[mids[1]]):
            return None
        idx += 1
        phases.append(Phase(index=idx, movements=mids))
    if not phases or len(phases) > len(PHASE_TABLE):
        return None
    covered = {m for p in phases for m in p.movements}
    signalized = {m.id for m in movements.values() if m.intersection == node["id"] and m.turn != RIGHT}
    if covered != signalized:
        return None
    return tuple(phases)


def export_cityflow_roadnet(graph: NetworkGraph, path: str) -> None:
    """Write a CityFlow-format roadnet for ``graph`` (inverse of the loader)."""
    lane_index: dict[str, dict[str, list[int]]] = {}
    for rid, road in graph.roads.items():
        idx = 0
        per = {}
        for ls_id in road.lane_sets:
            ls = graph.lane_sets[ls_id]
            per[ls.direction] = list(range(idx, idx + ls.lane_count))
            idx += ls.lane_count
        lane_index[rid] = per
    cf_type = {LEFT: "turn_left", STRAIGHT: "go_straight", RIGHT: "turn_right"}
    out_nodes = []
    for nid, node in graph.intersections.items():
        pt = {"x": 0.0, "y": 0.0}
        for rid in node.incoming_roads:
            pt = {"x": graph.roads[rid].points[-1][0], "y": graph.roads[rid].points[-1][1]}
            break
        else:
            for rid in node.outgoing_roads:
                pt = {"x": graph.roads[rid].points[0][0], "y": graph.roads[rid].points[0][1]}
                break
        entry = {
            "id": nid,
            "point": pt,
            "virtual": node.is_virtual,
            "roads": sorted(set(node.incoming_roads) | set(node.outgoing_roads)),
            "roadLinks": [],
        }
        if not node.is_virtual:
            link_of: dict[str, int] = {}
            for mid in node.movements:
                m = graph.movements[mid]
                start_lanes = lane_index[m.in_road][m.turn]
                link_of[mid] = len(entry["roadLinks"])
                entry["roadLinks"].append(
                    {
                        "type": cf_type[m.turn],
                        "startRoad": m.in_road,
                        "endRoad": m.out_road,
                        "laneLinks": [
                            {"startLaneIndex": i, "endLaneIndex": 0} for i in start_lanes
                        ],
                    }
                )
            rights = [link_of[mid] for mid in node.movements if graph.movements[mid].turn == RIGHT]
            lightphases = [{"time": 5, "availableRoadLinks": list(rights)}]
            for ph in node.phases:
                lightphases.append(
                    {
                        "time": 30,
                        "availableRoadLinks": [link_of[mid] for mid in ph.movements] + rights,
                    }
                )
            entry["trafficLight"] = {"lightphases": lightphases}
        out_nodes.append(entry)
    out_roads = []
    for rid, road in graph.roads.items():
        n_lanes = sum(graph.lane_sets[ls].lane_count for ls in road.lane_sets)
        out_roads.append(
            {
                "id": rid,
                "startIntersection": road.start,
                "endIntersection": road.end,
                "points": [{"x": x, "y": y} for x, y in road.points],
                "lanes": [{"width": 3.0, "maxSpeed": road.max_speed} for _ in range(n_lanes)],
            }
        )
    with open(path, "w") as fh:
        json.dump({"intersections": out_nodes, "roads": out_roads}, fh, indent=1)


# ---- serialization round-trip ----


def graph_to_json(graph: NetworkGraph) -> str:
    def phase(p: Phase):
        return {"index": p.index, "movements": list(p.movements)}

    doc = {
        "roads": [
            {
                "id": r.id, "start": r.start, "end": r.end, "length": r.length,
                "max_speed": r.max_speed, "lane_sets": list(r.lane_sets),
                "points": [list(p) for p in r.points],
            }
            for r in graph.roads.values()
        ],
        "lane_sets": [vars(ls) for ls in graph.lane_sets.values()],
        "movements": [
            {
                "id": m.id, "intersection": m.intersection, "in_road": m.in_road,
                "out_road": m.out_road, "in_lane_set": m.in_lane_set,
                "out_lane_sets": list(m.out_lane_sets), "turn": m.turn,
                "approach": m.approach,
            }
            for m in graph.movements.values()
        ],
        "intersections": [
            {
                "id": i.id, "incoming_roads": list(i.incoming_roads),
                "outgoing_roads": list(i.outgoing_roads), "movements": list(i.movements),
                "phases": [phase(p) for p in i.phases], "is_virtual": i.is_virtual,
                "approaches": [list(a) for a in i.approaches],
            }
            for i in graph.intersections.values()
        ],
        "entry_roads": sorted(graph.entry_roads),
        "exit_roads": sorted(graph.exit_roads),
        "internal_roads": sorted(graph.internal_roads),
        "notes": list(graph.notes),
    }
    return json.dumps(doc, sort_keys=True)


def graph_from_json(text: str) -> NetworkGraph:
    doc = json.loads(text)
    roads = {
        r["id"]: Road(
            id=r["id"], start=r["start"], end=r["end"], length=r["length"],
            max_speed=r["max_speed"], lane_sets=tuple(r["lane_sets"]),
            points=tuple(tuple(p) for p in r["points"]),
        )
        for r in doc["roads"]
    }
    lane_sets = {d["id"]: LaneSet(**d) for d in doc["lane_sets"]}
    movements = {
        m["id"]: TurnMovement(
            id=m["id"], intersection=m["intersection"], in_road=m["in_road"],
            out_road=m["out_road"], in_lane_set=m["in_lane_set"],
            out_lane_sets=tuple(m["out_lane_sets"]), turn=m["turn"],
            approach=m["approach"],
        )
        for m in doc["movements"]
    }
    intersections = {
        i["id"]: Intersection(
            id=i["id"], incoming_roads=tuple(i["incoming_roads"]),
            outgoing_roads=tuple(i["outgoing_roads"]), movements=tuple(i["movements"]),
            phases=tuple(Phase(index=p["index"], movements=tuple(p["movements"])) for p in i["phases"]),
            is_virtual=i["is_virtual"],
            approaches=tuple((a, b) for a, b in i["approaches"]),
        )
        for i in doc["intersections"]
    }
    return NetworkGraph(
        roads=roads,
        lane_sets=lane_sets,
        intersections=intersections,
        movements=movements,
        entry_roads=frozenset(doc["entry_roads"]),
        exit_roads=frozenset(doc["exit_roads"]),
        internal_roads=frozenset(doc["internal_roads"]),
        notes=tuple(doc["notes"]),
    )


# ---- validation ----


def validate(graph: NetworkGraph) -> list[str]:
    """Structural checks; returns human-readable violations (empty = clean)."""
    bad: list[str] = []
    for ls in graph.lane_sets.values():
        if ls.lane_count < 1:
            bad.append(f"lane set {ls.id}: lane_count {ls.lane_count} < 1")
        if ls.max_speed <= 0 or ls.length <= 0:
            bad.append(f"lane set {ls.id}: non-positive speed or length")
        if ls.road not in graph.roads:
            bad.append(f"lane set {ls.id}: unknown road {ls.road}")
        elif ls.id not in graph.roads[ls.road].lane_sets:
            bad.append(f"lane set {ls.id}: not listed on road {ls.road}")
    for m in graph.movements.values():
        if m.in_road not in graph.roads or m.out_road not in graph.roads:
            bad.append(f"movement {m.id}: dangling road reference")
            continue
        in_road, out_road = graph.roads[m.in_road], graph.roads[m.out_road]
        if m.in_lane_set not in in_road.lane_sets:
            bad.append(f"movement {m.id}: in_lane_set {m.in_lane_set} not on {m.in_road}")
        elif graph.lane_sets[m.in_lane_set].direction != m.turn:
            bad.append(f"movement {m.id}: lane set direction mismatch")
        if tuple(m.out_lane_sets) != tuple(out_road.lane_sets):
            bad.append(f"movement {m.id}: out_lane_sets do not cover road {m.out_road}")
        if in_road.start == out_road.end and in_road.end == out_road.start:
            bad.append(f"movement {m.id}: u-turn")
    for node in graph.intersections.values():
        for rid in node.incoming_roads:
            if graph.roads[rid].end != node.id:
                bad.append(f"intersection {node.id}: {rid} listed incoming but ends elsewhere")
        for rid in node.outgoing_roads:
            if graph.roads[rid].start != node.id:
                bad.append(f"intersection {node.id}: {rid} listed outgoing but starts elsewhere")
        if node.is_virtual:
            if node.phases or node.movements:
                bad.append(f"intersection {node.id}: virtual node with phases or movements")
            continue
        if not node.phases:
            bad.append(f"intersection {node.id}: no phases")
        if len(node.phases) > len(PHASE_TABLE):
            bad.append(f"intersection {node.id}: more than {len(PHASE_TABLE)} phases")
        seen_idx = set()
        covered = set()
        for ph in node.phases:
            if ph.index in seen_idx:
                bad.append(f"intersection {node.id}: duplicate phase index {ph.index}")
            seen_idx.add(ph.index)
            if not 1 <= len(ph.movements) <= 2:
                bad.append(f"intersection {node.id}: phase {ph.index} has {len(ph.movements)} movements")
            for mid in ph.movements:
                if mid not in graph.movements or graph.movements[mid].intersection != node.id:
                    bad.append(f"intersection {node.id}: phase {ph.index} references foreign movement {mid}")
                elif graph.movements[mid].turn == RIGHT:
                    bad.append(f"intersection {node.id}: phase {ph.index} actuates a right turn")
                else:
                    covered.add(mid)
            if len(ph.movements) == 2:
                a, b = (graph.movements.get(x) for x in ph.movements)
                if a and b and movements_conflict(a, b):
                    bad.append(f"intersection {node.id}: phase {ph.index} pairs conflicting movements")
        for mid in node.movements:
            m = graph.movements[mid]
            if m.turn != RIGHT and mid not in covered:
                bad.append(f"intersection {node.id}: movement {mid} appears in no phase")
    # partition
    all_roads = set(graph.roads)
    union = set(graph.entry_roads) | set(graph.exit_roads) | set(graph.internal_roads)
    if union != all_roads:
        bad.append("entry/exit/internal do not cover all roads")
    if (
        graph.entry_roads & graph.exit_roads
        or graph.entry_roads & graph.internal_roads
        or graph.exit_roads & graph.internal_roads
    ):
        bad.append("entry/exit/internal overlap")
    for rid in graph.internal_roads:
        road = graph.roads[rid]
        if graph.intersections[road.start].is_virtual or graph.intersections[road.end].is_virtual:
            bad.append(f"internal road {rid} touches a virtual node")
    return bad
