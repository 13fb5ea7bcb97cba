import json

import pytest

from signalsim import netmodel as nm


def test_grid_1x1_shape():
    g = nm.build_synthetic_grid(1, 1, 1, 300.0, 16.67)
    real = g.real_intersections()
    assert len(real) == 1
    node = real[0]
    assert len(node.movements) == 12
    assert len(node.phases) == 8
    assert len(g.entry_roads) == 4
    assert len(g.exit_roads) == 4
    assert not g.internal_roads
    assert not nm.validate(g)


def test_grid_2x2_shape():
    g = nm.build_synthetic_grid(2, 2)
    assert len(g.real_intersections()) == 4
    # four adjacent pairs, two one-way roads each
    assert len(g.internal_roads) == 8
    assert len(g.entry_roads) == 8
    assert len(g.exit_roads) == 8
    assert not nm.validate(g)


def test_grid_corridor_3x1_two_lanes():
    g = nm.build_synthetic_grid(3, 1, lanes_per_direction=2)
    assert len(g.real_intersections()) == 3
    for ls in g.lane_sets.values():
        assert ls.lane_count == 2
    assert not nm.validate(g)


def test_grid_rejects_bad_params():
    with pytest.raises(nm.RoadnetError):
        nm.build_synthetic_grid(0, 3)
    with pytest.raises(nm.RoadnetError):
        nm.build_synthetic_grid(1, 1, lanes_per_direction=0)
    with pytest.raises(nm.RoadnetError):
        nm.build_synthetic_grid(1, 1, road_length=-5)


def test_phase_table_structure():
    g = nm.build_synthetic_grid(1, 1)
    node = g.real_intersections()[0]
    seen = set()
    for ph in node.phases:
        assert len(ph.movements) == 2
        m1, m2 = (g.movements[m] for m in ph.movements)
        assert not nm.movements_conflict(m1, m2)
        assert m1.turn != nm.RIGHT and m2.turn != nm.RIGHT
        seen.update(ph.movements)
    signalized = {m.id for m in g.signalized_movements(node.id)}
    assert seen == signalized
    assert [p.index for p in node.phases] == list(range(1, 9))


def test_movement_lane_set_wiring():
    g = nm.build_synthetic_grid(2, 3)
    for m in g.movements.values():
        assert g.lane_sets[m.in_lane_set].road == m.in_road
        assert g.lane_sets[m.in_lane_set].direction == m.turn
        assert tuple(m.out_lane_sets) == g.roads[m.out_road].lane_sets
        in_road, out_road = g.roads[m.in_road], g.roads[m.out_road]
        assert not (in_road.start == out_road.end and in_road.end == out_road.start)


def test_conflict_predicate():
    g = nm.build_synthetic_grid(1, 1)
    node = g.real_intersections()[0]
    by_key = {(m.approach, m.turn): m for m in g.movements_at(node.id)}
    ns, ss = by_key[("N", "straight")], by_key[("S", "straight")]
    nl, el = by_key[("N", "left")], by_key[("E", "left")]
    es = by_key[("E", "straight")]
    assert not nm.movements_conflict(ns, ss)  # opposing straights
    assert not nm.movements_conflict(ns, nl)  # same approach
    assert nm.movements_conflict(ns, es)  # crossing straights
    assert nm.movements_conflict(ns, el)  # straight vs crossing left
    assert nm.movements_conflict(nl, el)  # perpendicular lefts


def test_synthesize_phases_reduced_t_junction():
    # three approaches: N and S plus E-left only; the orphaned E-left gets
    # a solo phase at its same-approach slot (index 6)
    by_key = {
        ("N", "straight"): "a",
        ("S", "straight"): "b",
        ("N", "left"): "c",
        ("S", "left"): "d",
        ("E", "left"): "e",
    }
    phases, reduced = nm.synthesize_phases(by_key)
    assert reduced
    covered = {m for p in phases for m in p.movements}
    assert covered == set("abcde")
    solo = [p for p in phases if len(p.movements) == 1]
    assert len(solo) == 1 and solo[0].movements == ("e",) and solo[0].index == 6


def test_json_round_trip():
    g = nm.build_synthetic_grid(2, 2, lanes_per_direction=2, road_length=250.0)
    text = nm.graph_to_json(g)
    g2 = nm.graph_from_json(text)
    assert g2 == g
    assert nm.graph_to_json(g2) == text


def test_cityflow_export_reload(tmp_path):
    g = nm.build_synthetic_grid(3, 4)
    path = tmp_path / "roadnet.json"
    nm.export_cityflow_roadnet(g, str(path))
    g2 = nm.load_cityflow_roadnet(str(path))
    assert len(g2.real_intersections()) == 12
    assert not nm.validate(g2)
    assert {m for m in g2.movements} == {m for m in g.movements}
    for node in g2.real_intersections():
        ref = g.intersections[node.id]
        assert [p.movements for p in node.phases] == [p.movements for p in ref.phases]
    assert g2.entry_roads == g.entry_roads
    assert g2.exit_roads == g.exit_roads


def test_cityflow_synthesizes_when_lightphases_missing(tmp_path):
    g = nm.build_synthetic_grid(1, 1)
    path = tmp_path / "roadnet.json"
    nm.export_cityflow_roadnet(g, str(path))
    data = json.loads(path.read_text())
    for node in data["intersections"]:
        node.pop("trafficLight", None)
    path.write_text(json.dumps(data))
    g2 = nm.load_cityflow_roadnet(str(path))
    node = g2.real_intersections()[0]
    assert len(node.phases) == 8
    assert not nm.validate(g2)


def test_cityflow_parse_error_reports_offset(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"intersections": [,]}')
    with pytest.raises(nm.RoadnetError) as err:
        nm.load_cityflow_roadnet(str(path))
    assert "parse error at byte" in str(err.value)


def test_cityflow_dangling_road_reference(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(
        json.dumps(
            {
                "intersections": [{"id": "a", "virtual": True, "roads": []}],
                "roads": [
                    {
                        "id": "r1",
                        "startIntersection": "a",
                        "endIntersection": "missing",
                        "points": [{"x": 0, "y": 0}, {"x": 1, "y": 0}],
                        "lanes": [{"maxSpeed": 10}],
                    }
                ],
            }
        )
    )
    with pytest.raises(nm.RoadnetError) as err:
        nm.load_cityflow_roadnet(str(path))
    assert "missing" in str(err.value)


def test_validate_flags_broken_graph():
    g = nm.build_synthetic_grid(1, 1)
    node = g.real_intersections()[0]
    # drop one phase so a movement loses coverage
    broken = nm.Intersection(
        id=node.id,
        incoming_roads=node.incoming_roads,
        outgoing_roads=node.outgoing_roads,
        movements=node.movements,
        phases=node.phases[:2],
        is_virtual=False,
        approaches=node.approaches,
    )
    g.intersections[node.id] = broken
    bad = nm.validate(g)
    assert any("appears in no phase" in b for b in bad)
