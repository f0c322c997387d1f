import json

import pytest

from levelforge.arrangement import LevelConfig
from levelforge.export import (
    DOOR_OPENING_HEIGHT,
    DOOR_OPENING_WIDTH,
    export_level_json,
    export_vmf,
    import_level_json,
    level_hash,
)
from levelforge.harness import generate_level
from levelforge.layout import SAParams
from levelforge.level import MechanicPlacement
from levelforge.geometry import Dimensions, Pose
from levelforge.vmf_reader import parse_vmf, read_vmf

from conftest import make_facility, make_level, make_room


def small_config(seed=0):
    return LevelConfig(
        width=24, length=24, height=6, floors=2, seed=seed, sa=SAParams(iterations=120)
    )


def generated_level(minimal_db, seed=5, group="DB-Baseline"):
    level, _ = generate_level(small_config(), minimal_db, group, seed)
    return level


# -- JSON round trip -----------------------------------------------------------


def test_export_import_export_is_byte_identical(minimal_db):
    level = generated_level(minimal_db)
    blob = export_level_json(level)
    again = export_level_json(import_level_json(blob))
    assert blob == again


def test_hand_written_minimal_document_imports():
    doc = {
        "schema_version": 1,
        "config": LevelConfig(width=10, length=10, height=3, floors=1).to_dict(),
        "rooms": [
            {
                "id": 1,
                "template": "Cell",
                "floor": 0,
                "origin": [0.0, 0.0],
                "dims": [10.0, 10.0, 3.0],
                "tau": 1,
                "arch_type": "enclosed",
            }
        ],
        "facilities": [],
        "mechanics": [],
        "doors": [],
        "stairs": [],
        "adjacency": [],
    }
    level = import_level_json(json.dumps(doc))
    assert len(level.rooms) == 1
    assert level.rooms[0].template == "Cell"


def test_random_levels_round_trip_hash_equal(minimal_db):
    for seed in range(10):
        level = generated_level(minimal_db, seed=seed)
        blob = export_level_json(level)
        assert level_hash(import_level_json(blob)) == level_hash(level)


def test_tau_set_is_contiguous_in_document(minimal_db):
    level = generated_level(minimal_db)
    doc = json.loads(export_level_json(level))
    taus = sorted(r["tau"] for r in doc["rooms"])
    assert taus == list(range(1, len(taus) + 1))


# -- VMF ------------------------------------------------------------------------


def test_empty_level_produces_valid_vmf():
    level = make_level([], width=10, length=10)
    summary = read_vmf(export_vmf(level))
    assert summary.brush_count == 0
    assert summary.entity_count == 0


def test_single_room_floor_brush_extents():
    level = make_level([make_room(1, (0.0, 0.0), 10, 10, h=3.0)], width=10, length=10, height=3.0)
    summary = read_vmf(export_vmf(level, scale=64.0))
    floor = [b for b in summary.boxes if b.hi[2] == 0.0]
    assert floor, "expected a floor slab ending at z=0"
    slab = floor[0]
    assert (slab.lo[0], slab.lo[1]) == (0.0, 0.0)
    assert (slab.hi[0], slab.hi[1]) == (640.0, 640.0)


def _merged_segments(run_lo, run_hi, openings):
    merged = []
    for lo, hi in sorted(openings):
        lo, hi = max(lo, run_lo), min(hi, run_hi)
        if hi - lo <= 1e-9:
            continue
        if merged and lo <= merged[-1][1] + 1e-9:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    count, cursor = 0, run_lo
    for lo, hi in merged:
        if lo - cursor > 1e-9:
            count += 1
        cursor = max(cursor, hi)
    if run_hi - cursor > 1e-9:
        count += 1
    return count


def expected_brush_count(level):
    """Independent recount: 2 slabs per room plus wall segments and headers."""
    total = 0
    eps = 1e-9
    for room in level.rooms:
        x0, y0, x1, y1 = room.footprint()
        sides = {"-x": [], "+x": [], "-y": [], "+y": []}
        headers = 0
        for door in level.doors:
            if room.id not in (door.room_a, door.room_b):
                continue
            if abs(door.x - x0) < eps or abs(door.x - x1) < eps:
                side = "-x" if abs(door.x - x0) < eps else "+x"
                sides[side].append(
                    (door.y - DOOR_OPENING_WIDTH / 2, door.y + DOOR_OPENING_WIDTH / 2)
                )
            else:
                side = "-y" if abs(door.y - y0) < eps else "+y"
                sides[side].append(
                    (door.x - DOOR_OPENING_WIDTH / 2, door.x + DOOR_OPENING_WIDTH / 2)
                )
            if room.dims.height > DOOR_OPENING_HEIGHT + eps:
                headers += 1
        for edge in level.adjacency:
            if edge.kind != "open" or room.id not in (edge.room_a, edge.room_b):
                continue
            other = level.room_by_id(
                edge.room_b if edge.room_a == room.id else edge.room_a
            )
            ox0, oy0, ox1, oy1 = other.footprint()
            if abs(x0 - ox1) < eps or abs(x1 - ox0) < eps:
                side = "-x" if abs(x0 - ox1) < eps else "+x"
                sides[side].append((max(y0, oy0), min(y1, oy1)))
            else:
                side = "-y" if abs(y0 - oy1) < eps else "+y"
                sides[side].append((max(x0, ox0), min(x1, ox1)))
        total += 2 + headers
        for side, openings in sides.items():
            run = (y0, y1) if side in ("-x", "+x") else (x0, x1)
            total += _merged_segments(run[0], run[1], openings)
    return total


def test_vmf_counts_match_level_structure(minimal_db):
    for seed in (1, 2, 3):
        level = generated_level(minimal_db, seed=seed)
        summary = read_vmf(export_vmf(level))
        assert summary.brush_count == expected_brush_count(level)
        expected_entities = (
            len(level.facilities) + len(level.mechanics) + len(level.stairs)
        )
        assert summary.entity_count == expected_entities


def test_vmf_export_is_deterministic(minimal_db):
    level = generated_level(minimal_db, seed=9)
    assert export_vmf(level) == export_vmf(level)


def test_vmf_scale_linearity(minimal_db):
    level = generated_level(minimal_db, seed=4)
    base = read_vmf(export_vmf(level, scale=32.0))
    double = read_vmf(export_vmf(level, scale=64.0))
    assert double.brush_count == base.brush_count
    for a, b in zip(base.boxes, double.boxes):
        for i in range(3):
            assert b.lo[i] == pytest.approx(2 * a.lo[i])
            assert b.hi[i] == pytest.approx(2 * a.hi[i])
    for a, b in zip(base.entity_origins, double.entity_origins):
        for i in range(3):
            assert b[i] == pytest.approx(2 * a[i])


def test_reader_rejects_inward_winding():
    bad = """versioninfo
{
\t"editorversion" "400"
}
world
{
\t"id" "1"
\t"classname" "worldspawn"
\tsolid
\t{
\t\t"id" "2"
""" + "".join(
        f"""\t\tside
\t\t{{
\t\t\t"id" "{i}"
\t\t\t"plane" "{plane}"
\t\t\t"material" "X"
\t\t}}
"""
        for i, plane in enumerate(
            [
                "(0 0 1) (0 1 1) (1 1 1)",  # +z face wound inward (normal -z... )
                "(0 1 0) (1 1 0) (1 0 0)",
                "(0 0 0) (0 0 1) (0 1 1)",
                "(1 0 0) (1 1 0) (1 1 1)",
                "(0 0 0) (1 0 0) (1 0 1)",
                "(0 1 0) (0 1 1) (1 1 1)",
            ]
        )
    ) + "\t}\n}\n"
    from levelforge.errors import ParseError

    with pytest.raises(ParseError):
        read_vmf(bad)


def test_classmap_overrides_entity_classnames():
    level = make_level([make_room(1, (0.0, 0.0), 10, 10)], width=10, length=10)
    level.facilities.append(make_facility("f", 1, 5.0, 5.0))
    level.mechanics.append(
        MechanicPlacement(
            id="key",
            def_name="FloorKey",
            room_id=1,
            pose=Pose(3.0, 3.0, 0.15, 0.0, Dimensions(0.3, 0.3, 0.3)),
        )
    )
    text = export_vmf(
        level,
        classmap={"Prop": "prop_physics"},
        facility_tags={"Crate": ["Prop"]},
    ).decode()
    blocks = parse_vmf(text)
    classnames = [b.props["classname"] for b in blocks if b.name == "entity"]
    assert "prop_physics" in classnames
    assert "prop_dynamic" in classnames  # the key keeps the default
