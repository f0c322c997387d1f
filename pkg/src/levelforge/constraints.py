"""Soft constraint penalties for facility, room and mechanic placement.

Every evaluator returns a non-negative float that is zero exactly when the
constraint is satisfied. There is no hard-rejection path: large weights
stand in for hard constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Sequence

from .errors import UnknownKind
from .geometry import (
    Pose,
    angle_diff,
    center_distance,
    penetration_depth,
    point_outside_box_distance,
    segment_intersects_box,
)

# Shared epsilon for every inverse-distance term.
DISTANCE_EPS = 0.1

# Shared door width; a wall contact shorter than this cannot host a door.
DOOR_WIDTH = 1.0

FACILITY_KINDS = frozenset(
    {
        "AxisFunction",
        "PlaceInRange",
        "PlaceByWall",
        "Near",
        "Far",
        "CanSee",
        "Focus",
        "Alignment",
        "Orientation",
    }
)

ROOM_KINDS = frozenset({"AxisFunction", "AdjacentTo", "SeparateFrom"})

# Structural room properties: folded into the template at load time,
# never scored.
STRUCTURAL_KINDS = frozenset({"MaxInstances", "SetType"})

TOPO_KINDS = frozenset({"Precedes", "TopologicalNear", "TopologicalFar"})

ALL_KINDS = FACILITY_KINDS | ROOM_KINDS | STRUCTURAL_KINDS | TOPO_KINDS


@dataclass(frozen=True)
class ConstraintSpec:
    """One constraint row: kind, kind-specific parameters, optional weight.

    A missing weight falls back to the kind default in WeightConfig.
    """

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)
    weight: float | None = None


@dataclass(frozen=True)
class RoomGeometry:
    """Local frame of one room: [0,width] x [0,length] x [0,height]."""

    width: float
    length: float
    height: float


@dataclass(frozen=True)
class WeightConfig:
    """All objective weights; defaults are the tuned experiment values."""

    penalty_scale: float = 1.0     # multiplies the summed placement penalties
    cluster_scale: float = 100.0   # multiplies the pairwise inverse-distance sum
    sparsity_scale: float = 500.0  # multiplies the worst-case empty-space term

    w_axis: float = 20.0
    w_wall: float = 20.0
    w_range: float = 20.0          # PlaceInRange; reuses the axis-class default
    w_near: float = 10.0
    near_d_min: float = 5.0
    w_far: float = 15.0
    far_d_max: float = 10.0
    w_can_see: float = 2.0
    w_focus: float = 10.0
    focus_phi_th_deg: float = 15.0
    w_align: float = 15.0
    w_orient: float = 20.0
    w_overlap: float = 30.0
    w_bounds: float = 30.0

    w_pos_room: float = 20.0
    w_adj: float = 10.0
    w_sep: float = 15.0

    w_precedes: float = 50.0
    w_mech_std: float = 1.0
    w_topo_near: float = 10.0
    topo_near_dmax: int = 4
    w_topo_far: float = 15.0
    topo_far_dmin: int = 3

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "WeightConfig":
        return cls(**dict(data))


DEFAULT_WEIGHTS = WeightConfig()

_FACILITY_DEFAULT_WEIGHT = {
    "AxisFunction": "w_axis",
    "PlaceInRange": "w_range",
    "PlaceByWall": "w_wall",
    "Near": "w_near",
    "Far": "w_far",
    "CanSee": "w_can_see",
    "Focus": "w_focus",
    "Alignment": "w_align",
    "Orientation": "w_orient",
}

_ROOM_DEFAULT_WEIGHT = {
    "AxisFunction": "w_pos_room",
    "AdjacentTo": "w_adj",
    "SeparateFrom": "w_sep",
}


def _weight(spec: ConstraintSpec, table: Mapping[str, str], weights: WeightConfig) -> float:
    if spec.weight is not None:
        return float(spec.weight)
    return float(getattr(weights, table[spec.kind]))


# -- custom axis deviation registry -----------------------------------------
#
# Closed registry of named deviation functions; each maps a center point in
# some frame (room or level) to a scalar deviation.

def _axis_centered_xy(cx, cy, cz, frame_w, frame_l, subject_h) -> float:
    return math.hypot(cx - frame_w / 2.0, cy - frame_l / 2.0)


def _axis_on_floor(cx, cy, cz, frame_w, frame_l, subject_h) -> float:
    return abs(cz - subject_h / 2.0)


def _axis_near_level_entrance(cx, cy, cz, frame_w, frame_l, subject_h) -> float:
    # The level origin corner is where floor 0's first room is seeded.
    return math.hypot(cx, cy)


AXIS_FUNCTIONS = {
    "centered_xy": _axis_centered_xy,
    "on_floor": _axis_on_floor,
    "near_level_entrance": _axis_near_level_entrance,
}


def _axis_deviation(spec: ConstraintSpec, cx, cy, cz, frame_w, frame_l, subject_h) -> float:
    name = spec.params.get("function")
    fn = AXIS_FUNCTIONS.get(name)
    if fn is None:
        raise UnknownKind(f"unknown axis function {name!r}")
    return fn(cx, cy, cz, frame_w, frame_l, subject_h)


# -- facility tier -----------------------------------------------------------

def _instances_of(name: str, others: Sequence[tuple[str, Pose]]) -> list[Pose]:
    return [pose for n, pose in others if n == name]


def _nearest(subject: Pose, candidates: Sequence[Pose]) -> Pose | None:
    if not candidates:
        return None
    return min(candidates, key=lambda p: center_distance(subject, p))


def eval_facility_penalty(
    spec: ConstraintSpec,
    subject: Pose,
    room: RoomGeometry,
    others: Sequence[tuple[str, Pose]] = (),
    weights: WeightConfig = DEFAULT_WEIGHTS,
) -> float:
    """Penalty of one facility-tier constraint for a candidate pose.

    `others` holds the already-placed facilities of the room as
    (definition name, pose) pairs; the subject itself must not be in it.
    Constraints whose named target has no placed instance score 0.
    """
    kind = spec.kind
    if kind not in FACILITY_KINDS:
        raise UnknownKind(f"{kind!r} is not a facility-tier constraint")
    w = _weight(spec, _FACILITY_DEFAULT_WEIGHT, weights)

    if kind == "AxisFunction":
        dev = _axis_deviation(
            spec, subject.x, subject.y, subject.z,
            room.width, room.length, subject.dims.height,
        )
        return w * dev * dev

    if kind == "PlaceInRange":
        lo = tuple(float(v) for v in spec.params["p1"])
        hi = tuple(float(v) for v in spec.params["p2"])
        d = point_outside_box_distance((subject.x, subject.y, subject.z), lo, hi)
        return w * d * d

    if kind == "PlaceByWall":
        x0, y0, x1, y1 = subject.footprint()
        wall_dist = max(0.0, min(x0, y0, room.width - x1, room.length - y1))
        ang = 0.0
        if "orientation" in spec.params:
            ang = angle_diff(subject.yaw, float(spec.params["orientation"]))
        e = wall_dist + ang
        return w * e * e

    if kind in ("Near", "Far"):
        target = _nearest(subject, _instances_of(spec.params["target"], others))
        if target is None:
            return 0.0
        d12 = center_distance(subject, target)
        if kind == "Near":
            d_min = float(spec.params.get("d_min", weights.near_d_min))
            if d12 > d_min:
                return w * (d_min - d12) ** 2
            return 0.0
        d_max = float(spec.params.get("d_max", weights.far_d_max))
        if d12 < d_max:
            return w * (d12 - d_max) ** 2
        return 0.0

    if kind == "CanSee":
        target = _nearest(subject, _instances_of(spec.params["target"], others))
        if target is None:
            return 0.0
        p0 = (subject.x, subject.y, subject.z)
        p1 = (target.x, target.y, target.z)
        for _, pose in others:
            if pose is target:
                continue
            if segment_intersects_box(p0, p1, pose.box3d()):
                return w
        return 0.0

    if kind == "Focus":
        if "point" in spec.params:
            px, py = (float(v) for v in spec.params["point"])
        else:
            target = _nearest(subject, _instances_of(spec.params["target"], others))
            if target is None:
                return 0.0
            px, py = target.x, target.y
        dx, dy = px - subject.x, py - subject.y
        if dx == 0.0 and dy == 0.0:
            return 0.0
        phi = angle_diff(math.atan2(dy, dx), subject.yaw)
        phi_th = float(
            spec.params.get("phi_th", math.radians(weights.focus_phi_th_deg))
        )
        if phi > phi_th:
            return w * (phi - phi_th) ** 2
        return 0.0

    if kind == "Alignment":
        target = _nearest(subject, _instances_of(spec.params["target"], others))
        if target is None:
            return 0.0
        dx, dy = target.x - subject.x, target.y - subject.y
        if dx == 0.0 and dy == 0.0:
            return 0.0
        if spec.params.get("axis", "x") == "x":
            theta = math.atan2(abs(dy), abs(dx))
        else:
            theta = math.atan2(abs(dx), abs(dy))
        return w * theta * theta

    # Orientation
    target = _nearest(subject, _instances_of(spec.params["target"], others))
    if target is None:
        return 0.0
    theta = angle_diff(subject.yaw, target.yaw)
    return w * theta * theta


def eval_overlap_penalty(a: Pose, b: Pose, w_overlap: float) -> float:
    """Quadratic penalty on the footprint penetration depth of two boxes."""
    depth = penetration_depth(a.footprint(), b.footprint())
    return w_overlap * depth * depth


def total_constraint_penalty(
    facility,
    room: RoomGeometry,
    others: Sequence[tuple[str, Pose]] = (),
    weights: WeightConfig = DEFAULT_WEIGHTS,
) -> float:
    """Sum of all facility-tier penalties for one placed facility.

    `facility` needs `.pose` and `.constraints` attributes.
    """
    total = 0.0
    for spec in facility.constraints:
        total += eval_facility_penalty(spec, facility.pose, room, others, weights)
    return total


# -- room tier ---------------------------------------------------------------

def room_center(room) -> tuple[float, float]:
    ox, oy = room.origin
    return ox + room.dims.width / 2.0, oy + room.dims.length / 2.0


def rooms_share_wall(a, b, min_segment: float = DOOR_WIDTH) -> bool:
    """True when two same-floor rooms touch along a usable wall segment."""
    if a.floor != b.floor:
        return False
    ax0, ay0 = a.origin
    ax1, ay1 = ax0 + a.dims.width, ay0 + a.dims.length
    bx0, by0 = b.origin
    bx1, by1 = bx0 + b.dims.width, by0 + b.dims.length
    eps = 1e-9
    if abs(ax1 - bx0) < eps or abs(bx1 - ax0) < eps:
        return min(ay1, by1) - max(ay0, by0) >= min_segment - eps
    if abs(ay1 - by0) < eps or abs(by1 - ay0) < eps:
        return min(ax1, bx1) - max(ax0, bx0) >= min_segment - eps
    return False


def _room_plane_distance(a, b) -> float:
    (ax, ay), (bx, by) = room_center(a), room_center(b)
    return math.hypot(ax - bx, ay - by)


def eval_room_penalty(
    spec: ConstraintSpec,
    subject,
    placed: Iterable,
    level_dims: tuple[float, float, float] = (0.0, 0.0, 0.0),
    weights: WeightConfig = DEFAULT_WEIGHTS,
) -> float:
    """Penalty of one room-tier constraint for a candidate room placement.

    Room-to-room terms only consider same-floor target instances; a target
    template with no placed instance on the floor contributes 0.
    """
    kind = spec.kind
    if kind in STRUCTURAL_KINDS:
        raise UnknownKind(f"{kind!r} is enforced structurally, not scored")
    if kind not in ROOM_KINDS:
        raise UnknownKind(f"{kind!r} is not a room-tier constraint")
    w = _weight(spec, _ROOM_DEFAULT_WEIGHT, weights)

    if kind == "AxisFunction":
        cx, cy = room_center(subject)
        dev = _axis_deviation(spec, cx, cy, 0.0, level_dims[0], level_dims[1], 0.0)
        return w * dev * dev

    target_name = spec.params["target"]
    targets = [
        r
        for r in placed
        if r.template == target_name and r is not subject and r.floor == subject.floor
    ]
    if not targets:
        return 0.0

    if kind == "AdjacentTo":
        if any(rooms_share_wall(subject, t) for t in targets):
            return 0.0
        return w * min(_room_plane_distance(subject, t) for t in targets)

    # SeparateFrom
    d = min(_room_plane_distance(subject, t) for t in targets)
    return w / (d + DISTANCE_EPS)
