"""Level serialization: canonical JSON documents and Valve Map Format.

The JSON form is byte-normalized (fixed key order, shortest round-trip
floats) so that export -> import -> export reproduces identical bytes;
the sha256 of those bytes serves as the level hash everywhere determinism
is asserted.

The VMF emitter produces placeholder geometry: six axis-aligned brushes
per room with door openings split out of the walls, and one point entity
per facility, mechanic and stairwell.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .arrangement import LevelConfig
from .database import _constraint_to_json, _parse_constraint
from .errors import ParseError, SchemaError
from .geometry import Dimensions, Pose
from .level import (
    AdjacencyEdge,
    Door,
    FacilityInstance,
    Level,
    LevelSkeleton,
    MechanicPlacement,
    RoomInstance,
    Stair,
    TopoRule,
)

LEVEL_SCHEMA_VERSION = 1

DEFAULT_VMF_SCALE = 64.0  # map units per meter
WALL_THICKNESS = 0.25
SLAB_THICKNESS = 0.25
DOOR_OPENING_WIDTH = 1.0
DOOR_OPENING_HEIGHT = 2.0
DEFAULT_CLASSNAME = "prop_dynamic"


def _pose_to_json(pose: Pose) -> dict:
    return {
        "center": [pose.x, pose.y, pose.z],
        "yaw": pose.yaw,
        "dims": [pose.dims.width, pose.dims.length, pose.dims.height],
    }


def _pose_from_json(data) -> Pose:
    cx, cy, cz = data["center"]
    w, l, h = data["dims"]
    return Pose(cx, cy, cz, data["yaw"], Dimensions(w, l, h))


def _topo_to_json(rule: TopoRule) -> dict:
    return {
        "kind": rule.kind,
        "other": rule.other,
        "anchor_tau": rule.anchor_tau,
        "threshold": rule.threshold,
        "strength": rule.strength,
    }


def _topo_from_json(data) -> TopoRule:
    return TopoRule(
        kind=data["kind"],
        other=data["other"],
        anchor_tau=data["anchor_tau"],
        threshold=data["threshold"],
        strength=data["strength"],
    )


def export_level_json(level: Level) -> bytes:
    doc = {
        "schema_version": LEVEL_SCHEMA_VERSION,
        "config": level.config.to_dict(),
        "rooms": [
            {
                "id": r.id,
                "template": r.template,
                "floor": r.floor,
                "origin": [r.origin[0], r.origin[1]],
                "dims": [r.dims.width, r.dims.length, r.dims.height],
                "tau": r.tau,
                "arch_type": r.arch_type,
            }
            for r in level.rooms
        ],
        "facilities": [
            {
                "id": f.id,
                "def": f.def_name,
                "room": f.room_id,
                "pose": _pose_to_json(f.pose),
                "fixed": f.fixed,
                "constraints": [_constraint_to_json(c) for c in f.constraints],
            }
            for f in level.facilities
        ],
        "mechanics": [
            {
                "id": m.id,
                "def": m.def_name,
                "room": m.room_id,
                "pose": _pose_to_json(m.pose),
                "constraints": [_constraint_to_json(c) for c in m.standard_constraints],
                "topo": [_topo_to_json(t) for t in m.topo],
            }
            for m in level.mechanics
        ],
        "doors": [
            {"room_a": d.room_a, "room_b": d.room_b, "position": [d.x, d.y]}
            for d in level.doors
        ],
        "stairs": [
            {
                "room": s.room_id,
                "position": [s.x, s.y],
                "dims": [s.dims.width, s.dims.length, s.dims.height],
            }
            for s in level.stairs
        ],
        "adjacency": [
            {"room_a": e.room_a, "room_b": e.room_b, "kind": e.kind}
            for e in level.adjacency
        ],
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def level_hash(level: Level) -> str:
    return hashlib.sha256(export_level_json(level)).hexdigest()


def import_level_json(data: bytes | str) -> Level:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("level document must be an object")
    try:
        config = LevelConfig.from_dict(doc["config"])
        skeleton = LevelSkeleton(
            width=config.width,
            length=config.length,
            height=config.height,
            floors=config.floors,
        )
        for r in doc["rooms"]:
            skeleton.rooms.append(
                RoomInstance(
                    id=r["id"],
                    template=r["template"],
                    floor=r["floor"],
                    origin=(r["origin"][0], r["origin"][1]),
                    dims=Dimensions(*r["dims"]),
                    tau=r["tau"],
                    arch_type=r["arch_type"],
                )
            )
        for d in doc["doors"]:
            skeleton.doors.append(
                Door(d["room_a"], d["room_b"], d["position"][0], d["position"][1])
            )
        for s in doc["stairs"]:
            skeleton.stairs.append(
                Stair(s["room"], s["position"][0], s["position"][1], Dimensions(*s["dims"]))
            )
        for e in doc["adjacency"]:
            skeleton.adjacency.append(AdjacencyEdge(e["room_a"], e["room_b"], e["kind"]))
        level = Level(config=config, skeleton=skeleton)
        for f in doc["facilities"]:
            level.facilities.append(
                FacilityInstance(
                    id=f["id"],
                    def_name=f["def"],
                    room_id=f["room"],
                    pose=_pose_from_json(f["pose"]),
                    fixed=f["fixed"],
                    constraints=tuple(
                        _parse_constraint(c, "facilities.constraints")
                        for c in f["constraints"]
                    ),
                )
            )
        for m in doc["mechanics"]:
            level.mechanics.append(
                MechanicPlacement(
                    id=m["id"],
                    def_name=m["def"],
                    room_id=m["room"],
                    pose=_pose_from_json(m["pose"]),
                    standard_constraints=tuple(
                        _parse_constraint(c, "mechanics.constraints")
                        for c in m["constraints"]
                    ),
                    topo=tuple(_topo_from_json(t) for t in m["topo"]),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"level document field error: {exc}") from exc
    return level


# -- Valve Map Format ----------------------------------------------------------


def _fmt(v: float) -> str:
    return str(float(v))


class _VmfWriter:
    def __init__(self) -> None:
        self.lines: list[str] = []
        self.depth = 0
        self.next_id = 1

    def take_id(self) -> int:
        out = self.next_id
        self.next_id += 1
        return out

    def open(self, name: str) -> None:
        pad = "\t" * self.depth
        self.lines.append(f"{pad}{name}")
        self.lines.append(f"{pad}{{")
        self.depth += 1

    def close(self) -> None:
        self.depth -= 1
        self.lines.append("\t" * self.depth + "}")

    def kv(self, key: str, value) -> None:
        pad = "\t" * self.depth
        self.lines.append(f'{pad}"{key}" "{value}"')

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


_FACE_MATERIAL = "DEV/DEV_MEASUREGENERIC01B"

# (plane point triples, uaxis, vaxis) per face; points wind counterclockwise
# seen from outside so cross(B-A, C-A) is the outward normal.
def _box_faces(x0, y0, z0, x1, y1, z1):
    return [
        # +z
        (((x0, y0, z1), (x1, y0, z1), (x1, y1, z1)), "[1 0 0 0]", "[0 -1 0 0]"),
        # -z
        (((x0, y1, z0), (x1, y1, z0), (x1, y0, z0)), "[1 0 0 0]", "[0 -1 0 0]"),
        # -x
        (((x0, y0, z0), (x0, y0, z1), (x0, y1, z1)), "[0 1 0 0]", "[0 0 -1 0]"),
        # +x
        (((x1, y0, z0), (x1, y1, z0), (x1, y1, z1)), "[0 1 0 0]", "[0 0 -1 0]"),
        # -y
        (((x0, y0, z0), (x1, y0, z0), (x1, y0, z1)), "[1 0 0 0]", "[0 0 -1 0]"),
        # +y
        (((x0, y1, z0), (x0, y1, z1), (x1, y1, z1)), "[1 0 0 0]", "[0 0 -1 0]"),
    ]


def _emit_box(w: _VmfWriter, lo, hi, scale: float) -> None:
    coords = [v * scale for v in (*lo, *hi)]
    w.open("solid")
    w.kv("id", w.take_id())
    for points, uaxis, vaxis in _box_faces(*coords):
        w.open("side")
        w.kv("id", w.take_id())
        plane = " ".join(
            "(" + " ".join(_fmt(c) for c in p) + ")" for p in points
        )
        w.kv("plane", plane)
        w.kv("material", _FACE_MATERIAL)
        w.kv("uaxis", f"{uaxis} 0.25")
        w.kv("vaxis", f"{vaxis} 0.25")
        w.kv("rotation", "0")
        w.kv("lightmapscale", "16")
        w.kv("smoothing_groups", "0")
        w.close()
    w.close()


@dataclass(frozen=True)
class _Opening:
    lo: float
    hi: float
    full_height: bool  # open-room edges cut the whole wall height


def wall_openings(level: Level, room: RoomInstance) -> dict[str, list[_Opening]]:
    """Openings per wall side ("-x", "+x", "-y", "+y") of one room."""
    x0, y0, x1, y1 = room.footprint()
    eps = 1e-9
    out: dict[str, list[_Opening]] = {"-x": [], "+x": [], "-y": [], "+y": []}

    def side_of(px: float, py: float) -> str | None:
        if abs(px - x0) < eps:
            return "-x"
        if abs(px - x1) < eps:
            return "+x"
        if abs(py - y0) < eps:
            return "-y"
        if abs(py - y1) < eps:
            return "+y"
        return None

    for door in level.doors:
        if room.id not in (door.room_a, door.room_b):
            continue
        side = side_of(door.x, door.y)
        if side is None:
            continue
        run = door.y if side in ("-x", "+x") else door.x
        half = DOOR_OPENING_WIDTH / 2.0
        out[side].append(_Opening(run - half, run + half, full_height=False))

    for edge in level.adjacency:
        if edge.kind != "open" or room.id not in (edge.room_a, edge.room_b):
            continue
        other = level.room_by_id(
            edge.room_b if edge.room_a == room.id else edge.room_a
        )
        ox0, oy0, ox1, oy1 = other.footprint()
        if abs(x0 - ox1) < eps or abs(x1 - ox0) < eps:
            side = "-x" if abs(x0 - ox1) < eps else "+x"
            lo, hi = max(y0, oy0), min(y1, oy1)
        else:
            side = "-y" if abs(y0 - oy1) < eps else "+y"
            lo, hi = max(x0, ox0), min(x1, ox1)
        out[side].append(_Opening(lo, hi, full_height=True))

    for side in out:
        out[side].sort(key=lambda o: (o.lo, o.hi))
    return out


def wall_segments(
    run_lo: float, run_hi: float, openings: Sequence[_Opening]
) -> tuple[list[tuple[float, float]], int]:
    """Solid wall segments left after cutting openings, plus header count."""
    merged: list[list[float]] = []
    headers = 0
    for op in sorted(openings, key=lambda o: (o.lo, o.hi)):
        lo, hi = max(run_lo, op.lo), min(run_hi, op.hi)
        if hi - lo <= 1e-9:
            continue
        if merged and lo <= merged[-1][1] + 1e-9:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
        if not op.full_height:
            headers += 1
    segments = []
    cursor = run_lo
    for lo, hi in merged:
        if lo - cursor > 1e-9:
            segments.append((cursor, lo))
        cursor = max(cursor, hi)
    if run_hi - cursor > 1e-9:
        segments.append((cursor, run_hi))
    return segments, headers


def _emit_room(w: _VmfWriter, level: Level, room: RoomInstance, scale: float) -> int:
    """Emit the room's brushes; returns how many solids were written."""
    x0, y0, x1, y1 = room.footprint()
    fh = level.floor_height
    z0 = room.floor * fh
    z1 = z0 + room.dims.height
    count = 0

    _emit_box(w, (x0, y0, z0 - SLAB_THICKNESS), (x1, y1, z0), scale)
    _emit_box(w, (x0, y0, z1), (x1, y1, z1 + SLAB_THICKNESS), scale)
    count += 2

    openings = wall_openings(level, room)
    t = WALL_THICKNESS
    walls = {
        "-x": ((x0, x0 + t), (y0, y1), "y"),
        "+x": ((x1 - t, x1), (y0, y1), "y"),
        "-y": ((y0, y0 + t), (x0, x1), "x"),
        "+y": ((y1 - t, y1), (x0, x1), "x"),
    }
    door_h = min(DOOR_OPENING_HEIGHT, room.dims.height)
    for side in ("-x", "+x", "-y", "+y"):
        (thick_lo, thick_hi), (run_lo, run_hi), run_axis = walls[side]
        segments, _ = wall_segments(run_lo, run_hi, openings[side])
        for lo, hi in segments:
            if run_axis == "y":
                _emit_box(w, (thick_lo, lo, z0), (thick_hi, hi, z1), scale)
            else:
                _emit_box(w, (lo, thick_lo, z0), (hi, thick_hi, z1), scale)
            count += 1
        for op in openings[side]:
            if op.full_height or z0 + door_h >= z1 - 1e-9:
                continue
            lo, hi = max(run_lo, op.lo), min(run_hi, op.hi)
            if hi - lo <= 1e-9:
                continue
            if run_axis == "y":
                _emit_box(w, (thick_lo, lo, z0 + door_h), (thick_hi, hi, z1), scale)
            else:
                _emit_box(w, (lo, thick_lo, z0 + door_h), (hi, thick_hi, z1), scale)
            count += 1
    return count


def _classname(tags: Sequence[str], classmap: Mapping[str, str] | None) -> str:
    if classmap:
        for tag in tags:
            if tag in classmap:
                return classmap[tag]
    return DEFAULT_CLASSNAME


def export_vmf(
    level: Level,
    scale: float = DEFAULT_VMF_SCALE,
    classmap: Mapping[str, str] | None = None,
    facility_tags: Mapping[str, Sequence[str]] | None = None,
) -> bytes:
    """Emit the level as VMF text with placeholder geometry.

    `classmap` maps facility tags to entity classnames; `facility_tags`
    supplies the tags per facility definition name (both optional).
    """
    w = _VmfWriter()
    w.open("versioninfo")
    w.kv("editorversion", "400")
    w.kv("editorbuild", "8864")
    w.kv("mapversion", "1")
    w.kv("formatversion", "100")
    w.kv("prefab", "0")
    w.close()

    w.open("world")
    w.kv("id", w.take_id())
    w.kv("mapversion", "1")
    w.kv("classname", "worldspawn")
    for room in sorted(level.rooms, key=lambda r: r.id):
        _emit_room(w, level, room, scale)
    w.close()

    fh = level.floor_height
    tags = facility_tags or {}

    def emit_entity(name: str, classname: str, gx: float, gy: float, gz: float, yaw: float):
        w.open("entity")
        w.kv("id", w.take_id())
        w.kv("classname", classname)
        w.kv("targetname", name)
        w.kv("origin", f"{_fmt(gx * scale)} {_fmt(gy * scale)} {_fmt(gz * scale)}")
        w.kv("angles", f"0 {_fmt(math.degrees(yaw))} 0")
        w.close()

    for fac in level.facilities:
        room = level.room_by_id(fac.room_id)
        gx, gy, gz = level.global_pose_center(fac.room_id, fac.pose)
        emit_entity(
            fac.id,
            _classname(tags.get(fac.def_name, ()), classmap),
            gx,
            gy,
            room.floor * fh + gz,
            fac.pose.yaw,
        )
    for mech in level.mechanics:
        room = level.room_by_id(mech.room_id)
        gx, gy, gz = level.global_pose_center(mech.room_id, mech.pose)
        emit_entity(
            mech.id,
            _classname(tags.get(mech.def_name, ()), classmap),
            gx,
            gy,
            room.floor * fh + gz,
            mech.pose.yaw,
        )
    for idx, stair in enumerate(level.stairs):
        room = level.room_by_id(stair.room_id)
        emit_entity(
            f"stair#{idx}",
            _classname(("Structure",), classmap),
            stair.x,
            stair.y,
            room.floor * fh + stair.dims.height / 2.0,
            0.0,
        )
    return w.text().encode("utf-8")
