"""Progression mechanic integration.

Mechanics are assigned to rooms by simulated annealing over a fitness that
scores topological-order rules (precedence, near, far) plus the best
achievable standard-constraint cost per room, then each mechanic is placed
inside its room greedily without disturbing the existing facility layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from random import Random
from typing import Callable, Mapping, Sequence

from .constraints import (
    DEFAULT_WEIGHTS,
    ConstraintSpec,
    WeightConfig,
    eval_facility_penalty,
)
from .database import Database
from .errors import NoFreeSpace, NoRooms, UnboundMechanic, UnresolvedReferenceError
from .geometry import HALF_PI, Dimensions, Pose, penetration_depth
from .layout import SAParams
from .level import Level, MechanicPlacement, RoomInstance, TopoRule
from .seeding import derive_rng

# Pose sampling budgets: assignment cost probing and final greedy placement.
CSTD_SAMPLES = 32
PLACEMENT_POSITIONS = 16
PLACEMENT_YAWS = 4

# Multiplier that turns a default topological-far rule into a "strong" one.
STRONG_TOPO_FAR = 3.0


@dataclass
class MechanicInstance:
    """One mechanic to be assigned: definition data plus resolved topo rules.

    `candidate_rooms` restricts assignment (None means any room); a single
    candidate pins the mechanic to that room.
    """

    id: str
    def_name: str
    dims: Dimensions
    standard_constraints: tuple[ConstraintSpec, ...] = ()
    topo: tuple[TopoRule, ...] = ()
    candidate_rooms: tuple[int, ...] | None = None


@dataclass(frozen=True)
class FitnessBreakdown:
    precedence: float
    standard: float
    topo_near: float
    topo_far: float
    total: float


@dataclass
class MechanicAssignment:
    rooms: dict[str, int]  # mechanic instance id -> room id
    breakdown: FitnessBreakdown


CStdEvaluator = Callable[[MechanicInstance, int], float]


def zero_cstd(_inst: MechanicInstance, _room_id: int) -> float:
    return 0.0


def make_cstd_evaluator(
    level: Level,
    weights: WeightConfig = DEFAULT_WEIGHTS,
    seed: int = 0,
    samples: int = CSTD_SAMPLES,
) -> CStdEvaluator:
    """Minimal standard-constraint cost of a mechanic in a room, estimated
    as the best of `samples` sampled poses and cached per (mechanic, room)."""
    cache: dict[tuple[str, int], float] = {}

    def evaluate(inst: MechanicInstance, room_id: int) -> float:
        key = (inst.id, room_id)
        if key in cache:
            return cache[key]
        room = level.room_by_id(room_id)
        geom = room.geometry()
        others = [(f.def_name, f.pose) for f in level.facilities_in_room(room_id)]
        rng = derive_rng(seed, "cstd", inst.id, room_id)
        best = math.inf
        for _ in range(samples):
            pose = _sample_pose(inst.dims, geom, rng)
            if pose is None:
                break
            cost = sum(
                eval_facility_penalty(spec, pose, geom, others, weights)
                for spec in inst.standard_constraints
            )
            if cost < best:
                best = cost
        if not math.isfinite(best):
            best = 1e9  # mechanic cannot fit in this room at all
        cache[key] = best
        return best

    return evaluate


def _sample_pose(dims: Dimensions, geom, rng: Random) -> Pose | None:
    yaw = rng.randrange(4) * HALF_PI
    pose = Pose(0.0, 0.0, dims.height / 2.0, yaw, dims)
    hx, hy = pose.half_extents()
    if 2 * hx > geom.width or 2 * hy > geom.length:
        pose = pose.rotated(yaw + HALF_PI)
        hx, hy = pose.half_extents()
        if 2 * hx > geom.width or 2 * hy > geom.length:
            return None
    pose.x = hx + rng.random() * (geom.width - 2 * hx)
    pose.y = hy + rng.random() * (geom.length - 2 * hy)
    return pose


def fitness(
    assignment: Mapping[str, int],
    level: Level,
    instances: Sequence[MechanicInstance],
    weights: WeightConfig = DEFAULT_WEIGHTS,
    cstd: CStdEvaluator = zero_cstd,
) -> FitnessBreakdown:
    """Evaluate the four-term assignment fitness.

    Each term is the raw (strength-scaled) sum for its rule category; the
    total applies the category weights on top.
    """
    tau = {r.id: r.tau for r in level.rooms}
    precedence = 0.0
    topo_near = 0.0
    topo_far = 0.0
    standard = 0.0
    for inst in instances:
        if inst.id not in assignment:
            raise UnboundMechanic(f"mechanic {inst.id!r} missing from assignment")

    for inst in instances:
        t_i = tau[assignment[inst.id]]
        standard += cstd(inst, assignment[inst.id])
        for rule in inst.topo:
            if rule.anchor_tau is not None:
                t_j = rule.anchor_tau
            else:
                if rule.other not in assignment:
                    raise UnboundMechanic(
                        f"mechanic {inst.id!r} references unbound {rule.other!r}"
                    )
                t_j = tau[assignment[rule.other]]
            if rule.kind == "precedes":
                e = max(0.0, t_i - t_j)
                precedence += rule.strength * e * e
            elif rule.kind == "topo_near":
                limit = rule.threshold if rule.threshold is not None else weights.topo_near_dmax
                e = max(0.0, abs(t_i - t_j) - limit)
                topo_near += rule.strength * e * e
            elif rule.kind == "topo_far":
                limit = rule.threshold if rule.threshold is not None else weights.topo_far_dmin
                e = max(0.0, limit - abs(t_i - t_j))
                topo_far += rule.strength * e * e

    total = (
        weights.w_precedes * precedence
        + weights.w_mech_std * standard
        + weights.w_topo_near * topo_near
        + weights.w_topo_far * topo_far
    )
    return FitnessBreakdown(precedence, standard, topo_near, topo_far, total)


def assign_mechanics(
    level: Level,
    mechanics: Sequence[MechanicInstance],
    weights: WeightConfig = DEFAULT_WEIGHTS,
    sa: SAParams = SAParams(),
    rng: Random | None = None,
    cstd: CStdEvaluator = zero_cstd,
) -> MechanicAssignment:
    """Anneal the mechanic-to-room assignment; returns the best seen.

    A perturbation reassigns one uniformly chosen mechanic to a uniformly
    chosen candidate room, accepted by the Metropolis rule under the same
    cooling schedule the facility layout uses.
    """
    if not level.rooms:
        raise NoRooms("level has no rooms")
    rng = rng or Random(0)
    all_rooms = tuple(r.id for r in level.rooms)
    candidates: dict[str, tuple[int, ...]] = {}
    for inst in mechanics:
        cands = inst.candidate_rooms if inst.candidate_rooms is not None else all_rooms
        if not cands:
            raise NoRooms(f"mechanic {inst.id!r} has no candidate rooms")
        candidates[inst.id] = cands

    if not mechanics:
        return MechanicAssignment({}, FitnessBreakdown(0, 0, 0, 0, 0))

    free = [inst for inst in mechanics if len(candidates[inst.id]) > 1]

    best_assign: dict[str, int] | None = None
    best: FitnessBreakdown | None = None
    for _ in range(max(1, sa.restarts)):
        assign = {
            inst.id: candidates[inst.id][rng.randrange(len(candidates[inst.id]))]
            for inst in mechanics
        }
        cur = fitness(assign, level, mechanics, weights, cstd)
        if best is None or cur.total < best.total:
            best, best_assign = cur, dict(assign)
        if not free:
            continue
        temperature = sa.initial_temperature
        for _ in range(sa.iterations):
            inst = free[rng.randrange(len(free))]
            cands = candidates[inst.id]
            old_room = assign[inst.id]
            assign[inst.id] = cands[rng.randrange(len(cands))]
            cand = fitness(assign, level, mechanics, weights, cstd)
            delta = cand.total - cur.total
            if delta <= 0 or (
                temperature > 0 and rng.random() < math.exp(-delta / temperature)
            ):
                cur = cand
            else:
                assign[inst.id] = old_room
            if cur.total < best.total:
                best, best_assign = cur, dict(assign)
            temperature *= sa.cooling_rate

    return MechanicAssignment(best_assign, best)


def place_mechanic_in_room(
    mechanic: MechanicInstance,
    room: RoomInstance,
    others: Sequence[tuple[str, Pose]],
    rng: Random,
    weights: WeightConfig = DEFAULT_WEIGHTS,
    obstacles: Sequence[Pose] = (),
) -> MechanicPlacement:
    """Greedy intra-room placement over sampled poses.

    Scores sampled positions at the four yaw steps by standard-constraint
    penalty plus overlap penalty; existing facilities are never moved.
    Raises NoFreeSpace when every candidate overlaps something.
    """
    geom = room.geometry()
    occupied = [p.footprint() for _, p in others] + [o.footprint() for o in obstacles]

    best: tuple[float, Pose] | None = None
    any_clear = False
    for _ in range(PLACEMENT_POSITIONS):
        px = rng.random() * geom.width
        py = rng.random() * geom.length
        for k in range(PLACEMENT_YAWS):
            pose = Pose(0.0, 0.0, mechanic.dims.height / 2.0, k * HALF_PI, mechanic.dims)
            hx, hy = pose.half_extents()
            if 2 * hx > geom.width or 2 * hy > geom.length:
                continue
            pose.x = min(max(px, hx), geom.width - hx)
            pose.y = min(max(py, hy), geom.length - hy)
            fp = pose.footprint()
            overlap = 0.0
            clear = True
            for ofp in occupied:
                depth = penetration_depth(fp, ofp)
                if depth > 0.0:
                    clear = False
                    overlap += weights.w_overlap * depth * depth
            score = overlap + sum(
                eval_facility_penalty(spec, pose, geom, others, weights)
                for spec in mechanic.standard_constraints
            )
            any_clear = any_clear or clear
            if best is None or score < best[0]:
                best = (score, pose)

    if best is None or not any_clear:
        raise NoFreeSpace(
            f"no overlap-free pose for mechanic {mechanic.id!r} in room {room.id}"
        )
    return MechanicPlacement(
        id=mechanic.id,
        def_name=mechanic.def_name,
        room_id=room.id,
        pose=best[1],
        standard_constraints=mechanic.standard_constraints,
        topo=mechanic.topo,
    )


# -- experiment-group parameterizations ---------------------------------------

def _floor_exit_room(level: Level, floor: int) -> RoomInstance:
    """The stair room of a floor, or its highest-order room on the top floor."""
    rooms = level.rooms_on_floor(floor)
    for stair in level.stairs:
        lower = level.room_by_id(stair.room_id)
        if lower.floor == floor:
            return lower
    return max(rooms, key=lambda r: r.tau)


def _mechanic_def(db: Database, name: str):
    d = db.mechanic(name)
    if d is None:
        raise UnresolvedReferenceError(f"mechanic {name!r} not in database")
    return d


def db_group_mechanics(
    group: str,
    level: Level,
    floor: int,
    db: Database,
    weights: WeightConfig = DEFAULT_WEIGHTS,
) -> list[MechanicInstance]:
    """Mechanic instances for one floor of a database-parameterized group.

    baseline: one FloorKey pulled topologically near the floor's tau
    midpoint. exploration: three KeyFragments preceding the floor exit and
    strongly spread apart in tau. speedrun: one FloorKey pulled near the
    floor's start room.
    """
    rooms = level.rooms_on_floor(floor)
    if not rooms:
        return []
    taus = [r.tau for r in rooms]
    floor_ids = tuple(r.id for r in sorted(rooms, key=lambda r: r.tau))
    t_min, t_max = min(taus), max(taus)

    if group == "baseline":
        key = _mechanic_def(db, "FloorKey")
        anchor = (t_min + t_max) / 2.0
        return [
            MechanicInstance(
                id=f"FloorKey@f{floor}",
                def_name=key.name,
                dims=key.dims,
                standard_constraints=key.standard_constraints,
                topo=(
                    TopoRule(
                        "topo_near", anchor_tau=anchor, threshold=weights.topo_near_dmax
                    ),
                ),
                candidate_rooms=floor_ids,
            )
        ]

    if group == "speedrun":
        key = _mechanic_def(db, "FloorKey")
        return [
            MechanicInstance(
                id=f"FloorKey@f{floor}",
                def_name=key.name,
                dims=key.dims,
                standard_constraints=key.standard_constraints,
                topo=(
                    TopoRule(
                        "topo_near",
                        anchor_tau=float(t_min),
                        threshold=weights.topo_near_dmax,
                    ),
                ),
                candidate_rooms=floor_ids,
            )
        ]

    if group == "exploration":
        frag = _mechanic_def(db, "KeyFragment")
        exit_tau = float(_floor_exit_room(level, floor).tau)
        ids = [f"KeyFragment@f{floor}#{k}" for k in range(3)]
        out = []
        for k in range(3):
            rules = [TopoRule("precedes", anchor_tau=exit_tau)]
            for j in range(k + 1, 3):
                rules.append(
                    TopoRule(
                        "topo_far",
                        other=ids[j],
                        threshold=weights.topo_far_dmin,
                        strength=STRONG_TOPO_FAR,
                    )
                )
            out.append(
                MechanicInstance(
                    id=ids[k],
                    def_name=frag.name,
                    dims=frag.dims,
                    standard_constraints=frag.standard_constraints,
                    topo=tuple(rules),
                    candidate_rooms=floor_ids,
                )
            )
        return out

    raise ValueError(f"unknown pacing group {group!r}")
