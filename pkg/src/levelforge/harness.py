"""End-to-end pipeline driver and six-group batch experiment runner.

A level runs through: room arrangement, per-room facility annealing,
group-specific key placement, two-phase repair, rerun validation and the
objective simulation. The experiment runner fans levels out over worker
processes; per-level seeds are pre-derived so results are byte-identical
regardless of worker count.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .arrangement import LevelConfig, arrange_rooms
from .database import Database, load_database, save_database
from .errors import ArrangementFailed, GenerationFailed, NoFreeSpace
from .export import level_hash
from .geometry import Pose
from .layout import optimize_room_layout
from .level import FacilityInstance, Level, MechanicPlacement, TopoRule
from .mechanics import (
    MechanicInstance,
    assign_mechanics,
    db_group_mechanics,
    make_cstd_evaluator,
    place_mechanic_in_room,
)
from .navsim import (
    AgentParams,
    MetricsRecord,
    agent_repair,
    build_nav_grid,
    geometric_repair,
    rerun_validation,
    simulate_objectives,
)
from .seeding import derive_rng, derive_seed
from .strategies import bfs_balanced_room, build_floor_graph, centrality_room, mc_dispersion_rooms

log = logging.getLogger("levelforge")

# Table column order used everywhere groups are reported.
GROUPS = (
    "A-Baseline",
    "DB-Baseline",
    "A-Exploration",
    "DB-Exploration",
    "A-Speedrun",
    "DB-Speedrun",
)

EXPLORATION_KEYS_PER_FLOOR = 3
MC_SAMPLES = 200
MC_SIGMA = 3.0


def canonical_group(name: str) -> str:
    for g in GROUPS:
        if g.lower() == name.lower():
            return g
    raise ValueError(f"unknown group {name!r}; expected one of {', '.join(GROUPS)}")


@dataclass
class ExperimentConfig:
    groups: tuple[str, ...] = GROUPS
    levels_per_group: int = 30
    base_seed: int = 42
    level: LevelConfig = field(default_factory=LevelConfig)
    output_dir: Path | None = None


def level_seed(base_seed: int, group: str, index: int) -> int:
    return derive_seed(base_seed, group, index)


# -- single level pipeline -----------------------------------------------------

def _instantiate_room_facilities(level: Level, db: Database, room) -> list[FacilityInstance]:
    template = db.room(room.template)
    out: list[FacilityInstance] = []
    for cf in template.characteristic_facilities:
        fdef = db.facility(cf.facility)
        fixed = fdef.positioning == "fixed"
        for k in range(cf.count):
            if fixed:
                p = cf.positions[k]
                pose = Pose(p.x, p.y, fdef.dims.height / 2.0, p.yaw, fdef.dims)
            else:
                # placeholder; the annealer samples the real initial pose
                pose = Pose(
                    room.dims.width / 2.0,
                    room.dims.length / 2.0,
                    fdef.dims.height / 2.0,
                    0.0,
                    fdef.dims,
                )
            out.append(
                FacilityInstance(
                    id=f"r{room.id}.{fdef.name}.{k}",
                    def_name=fdef.name,
                    room_id=room.id,
                    pose=pose,
                    fixed=fixed,
                    constraints=fdef.constraints,
                )
            )
    return out


def _strategy_of(group: str) -> tuple[str, str]:
    family, strategy = group.split("-", 1)
    return family, strategy.lower()


def _pinned_instance(db: Database, def_name: str, inst_id: str, room_id: int) -> MechanicInstance:
    mdef = db.mechanic(def_name)
    return MechanicInstance(
        id=inst_id,
        def_name=mdef.name,
        dims=mdef.dims,
        standard_constraints=mdef.standard_constraints,
        candidate_rooms=(room_id,),
    )


def _generic_instances(config: LevelConfig, db: Database) -> list[MechanicInstance]:
    """Instances for config-selected mechanics; definition topo rules bind
    to the first instance of the referenced definition."""
    out: list[MechanicInstance] = []
    for name, count in config.selected_mechanics:
        mdef = db.mechanic(name)
        if mdef is None:
            raise GenerationFailed(f"selected mechanic {name!r} not in database")
        for k in range(count):
            rules = tuple(
                TopoRule(
                    kind=tc.kind,
                    other=f"{tc.other}#0",
                    threshold=tc.threshold,
                    strength=tc.strength,
                )
                for tc in mdef.topo_constraints
            )
            out.append(
                MechanicInstance(
                    id=f"{mdef.name}#{k}",
                    def_name=mdef.name,
                    dims=mdef.dims,
                    standard_constraints=mdef.standard_constraints,
                    topo=rules,
                )
            )
    return out


def _mechanic_instances(
    level: Level, db: Database, group: str | None, seed: int
) -> tuple[list[MechanicInstance], dict[str, int]]:
    """Build instances and their room assignment for the given group."""
    config = level.config
    weights = config.weights

    if group is None:
        instances = _generic_instances(config, db)
        if not instances:
            return [], {}
        cstd = make_cstd_evaluator(level, weights, seed)
        assignment = assign_mechanics(
            level, instances, weights, config.sa, derive_rng(seed, "assign"), cstd
        )
        return instances, assignment.rooms

    family, strategy = _strategy_of(group)
    floors = sorted({r.floor for r in level.rooms})

    if family == "A":
        instances: list[MechanicInstance] = []
        assignment: dict[str, int] = {}
        for floor in floors:
            g = build_floor_graph(level, floor)
            if strategy == "baseline":
                chosen = [bfs_balanced_room(g)]
                def_name = "FloorKey"
            elif strategy == "speedrun":
                chosen = [centrality_room(g)]
                def_name = "FloorKey"
            elif strategy == "exploration":
                chosen = mc_dispersion_rooms(
                    g,
                    existing_keys=(),
                    n=EXPLORATION_KEYS_PER_FLOOR,
                    sigma=MC_SIGMA,
                    samples=MC_SAMPLES,
                    rng=derive_rng(seed, "strategy", floor),
                )
                def_name = "KeyFragment"
            else:
                raise GenerationFailed(f"unknown strategy {strategy!r}")
            for k, room_id in enumerate(chosen):
                inst = _pinned_instance(
                    db, def_name, f"{def_name}@f{floor}#{k}", room_id
                )
                instances.append(inst)
                assignment[inst.id] = room_id
        return instances, assignment

    # DB family: constraints drive the assignment
    instances = []
    for floor in floors:
        instances.extend(db_group_mechanics(strategy, level, floor, db, weights))
    if not instances:
        return [], {}
    cstd = make_cstd_evaluator(level, weights, seed)
    assignment = assign_mechanics(
        level, instances, weights, config.sa, derive_rng(seed, "assign"), cstd
    )
    return instances, assignment.rooms


def _place_mechanics(
    level: Level,
    instances: list[MechanicInstance],
    assignment: dict[str, int],
    seed: int,
) -> None:
    weights = level.config.weights
    placed: list[MechanicPlacement] = []
    for inst in instances:
        room = level.room_by_id(assignment[inst.id])
        others = [
            (f.def_name, f.pose) for f in level.facilities_in_room(room.id)
        ] + [(p.def_name, p.pose) for p in placed if p.room_id == room.id]
        obstacles = level.stair_obstacles(room.id)
        rng = derive_rng(seed, "place", inst.id)
        try:
            placement = place_mechanic_in_room(
                inst, room, others, rng, weights, obstacles
            )
        except NoFreeSpace:
            # fully tiled room: drop the key at the room center and let the
            # repair phase clear a path to it
            placement = MechanicPlacement(
                id=inst.id,
                def_name=inst.def_name,
                room_id=room.id,
                pose=Pose(
                    room.dims.width / 2.0,
                    room.dims.length / 2.0,
                    inst.dims.height / 2.0,
                    0.0,
                    inst.dims,
                ),
                standard_constraints=inst.standard_constraints,
                topo=inst.topo,
            )
        placed.append(placement)
    level.mechanics = placed


def generate_level(
    config: LevelConfig,
    db: Database,
    group: str | None,
    seed: int,
    agent: AgentParams = AgentParams(),
    level_id: str | None = None,
) -> tuple[Level, MetricsRecord]:
    """Run the full pipeline for one seed; never raises in-level repair
    failures, they land in the record's status."""
    config = replace(config, seed=seed)
    group_label = group or "custom"
    level_id = level_id or f"{group_label}-{seed:x}"
    try:
        skeleton = arrange_rooms(config, db, derive_rng(seed, "arrange"))
    except ArrangementFailed as exc:
        raise GenerationFailed(str(exc)) from exc

    level = Level(config=config, skeleton=skeleton)
    for room in skeleton.rooms:
        facilities = _instantiate_room_facilities(level, db, room)
        if facilities:
            layout = optimize_room_layout(
                room,
                facilities,
                config.weights,
                config.sa,
                derive_rng(seed, "layout", room.id),
                obstacles=level.stair_obstacles(room.id),
            )
            for inst in facilities:
                inst.pose = layout.placements[inst.id]
        level.facilities.extend(facilities)

    instances, assignment = _mechanic_instances(level, db, group, seed)
    _place_mechanics(level, instances, assignment, seed)

    adaptable_count = sum(1 for f in level.facilities if not f.fixed)
    grid = build_nav_grid(level)
    level, phase1 = geometric_repair(level, grid)
    level, report = agent_repair(level, agent, grid, phase1)

    record = MetricsRecord(
        level_id=level_id,
        group=group_label,
        seed=seed,
        status=report.status,
        repair_time=report.repair_time,
        facilities_removed=report.facilities_removed,
        adaptable_facilities=adaptable_count,
        phase1_moves=report.phase1_moves,
        phase2_moves=report.phase2_moves,
    )
    if report.status != "repaired":
        record.status = "unrepairable"
        record.level_hash = level_hash(level)
        return level, record

    rerun = rerun_validation(level, agent, grid)
    sim = simulate_objectives(level, level.mechanics, agent, grid)
    total_cells = grid.total_cells
    record.status = "abnormal" if rerun.abnormal else "valid"
    record.rerun_time = rerun.rerun_time
    record.simulation_time = sim.simulation_time
    record.avg_completion_time = (rerun.rerun_time + sim.simulation_time) / 2.0
    record.grid_exploration = rerun.grid_cells
    record.sim_grid_exploration = sim.sim_grid_cells
    record.avg_grid_exploration = (rerun.grid_cells + sim.sim_grid_cells) / 2.0
    record.coverage = rerun.grid_cells / total_cells
    record.sim_coverage = sim.sim_grid_cells / total_cells
    record.avg_coverage = record.avg_grid_exploration / total_cells
    record.level_hash = level_hash(level)
    return level, record


# -- batch runner ---------------------------------------------------------------

_METRIC_FIELDS = (
    "repair_time",
    "facilities_removed",
    "rerun_time",
    "simulation_time",
    "avg_completion_time",
    "grid_exploration",
    "sim_grid_exploration",
    "avg_grid_exploration",
)

_STATUSES = ("valid", "unrepairable", "abnormal", "failed")

_CSV_FIELDS = (
    "group",
    "index",
    "seed",
    "level_id",
    "status",
    "repair_time",
    "facilities_removed",
    "adaptable_facilities",
    "phase1_moves",
    "phase2_moves",
    "rerun_time",
    "simulation_time",
    "avg_completion_time",
    "grid_exploration",
    "sim_grid_exploration",
    "avg_grid_exploration",
    "coverage",
    "sim_coverage",
    "avg_coverage",
    "level_hash",
)


@dataclass(frozen=True)
class MetricStats:
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n: int


@dataclass
class AggregateStats:
    groups: tuple[str, ...]
    metrics: dict[str, dict[str, MetricStats]]  # group -> metric -> stats
    tallies: dict[str, dict[str, int]]  # group -> status -> count
    total_cells: int


def _mean_std(values: list[float]) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return 0.0, 0.0
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def compute_stats(
    records: list[MetricsRecord], groups: tuple[str, ...], total_cells: int
) -> AggregateStats:
    """Aggregate over valid levels only; tallies cover every record."""
    metrics: dict[str, dict[str, MetricStats]] = {}
    tallies: dict[str, dict[str, int]] = {}
    for group in groups:
        rows = [r for r in records if r.group == group]
        tallies[group] = {s: sum(1 for r in rows if r.status == s) for s in _STATUSES}
        valid = [r for r in rows if r.status == "valid"]
        per_metric = {}
        for name in _METRIC_FIELDS:
            values = [float(getattr(r, name)) for r in valid]
            mean, std = _mean_std(values)
            half = 1.96 * std / math.sqrt(len(values)) if values else 0.0
            per_metric[name] = MetricStats(
                mean=mean, std=std, ci_low=mean - half, ci_high=mean + half, n=len(values)
            )
        metrics[group] = per_metric
    return AggregateStats(
        groups=groups, metrics=metrics, tallies=tallies, total_cells=total_cells
    )


_WORKER_STATE: dict = {}


def _init_worker(db_bytes: bytes, config_dict: dict) -> None:
    _WORKER_STATE["db"] = load_database(db_bytes)
    _WORKER_STATE["config"] = LevelConfig.from_dict(config_dict)


def _run_task(task: tuple[str, int, int]) -> tuple[str, int, int, dict]:
    group, index, seed = task
    record = _generate_record(
        _WORKER_STATE["config"], _WORKER_STATE["db"], group, index, seed
    )
    return group, index, seed, record.__dict__


def _generate_record(
    config: LevelConfig, db: Database, group: str, index: int, seed: int
) -> MetricsRecord:
    try:
        _, record = generate_level(
            config, db, group, seed, level_id=f"{group}-{index:04d}"
        )
        return record
    except GenerationFailed:
        return MetricsRecord(
            level_id=f"{group}-{index:04d}", group=group, seed=seed, status="failed"
        )


def worker_count() -> int:
    env = os.environ.get("LEVELFORGE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(
    exp: ExperimentConfig, db: Database
) -> tuple[list[MetricsRecord], AggregateStats]:
    """Generate every (group, index) level and aggregate the metrics.

    Writes records.csv, stats.md and stats.csv when an output directory is
    configured. Ordering and content are independent of the worker count.
    """
    tasks = [
        (group, index, level_seed(exp.base_seed, group, index))
        for group in exp.groups
        for index in range(exp.levels_per_group)
    ]
    workers = min(worker_count(), len(tasks)) if tasks else 1
    results: dict[tuple[str, int], MetricsRecord] = {}

    if workers > 1:
        db_bytes = save_database(db)
        config_dict = exp.level.to_dict()
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(db_bytes, config_dict)
        ) as pool:
            for group, index, seed, data in pool.map(_run_task, tasks, chunksize=1):
                record = MetricsRecord(**data)
                results[(group, index)] = record
                log.info(
                    "level %s-%04d seed=%d status=%s", group, index, seed, record.status
                )
    else:
        for group, index, seed in tasks:
            record = _generate_record(exp.level, db, group, index, seed)
            results[(group, index)] = record
            log.info(
                "level %s-%04d seed=%d status=%s", group, index, seed, record.status
            )

    records = [
        results[(group, index)]
        for group in exp.groups
        for index in range(exp.levels_per_group)
    ]
    total_cells = (
        math.ceil(exp.level.width - 1e-9)
        * math.ceil(exp.level.length - 1e-9)
        * exp.level.floors
    )
    stats = compute_stats(records, exp.groups, total_cells)

    if exp.output_dir is not None:
        out = Path(exp.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "records.csv").write_text(records_csv(records, exp))
        markdown, stats_csv_text = emit_table(stats)
        (out / "stats.md").write_text(markdown)
        (out / "stats.csv").write_text(stats_csv_text)
    return records, stats


def records_csv(records: list[MetricsRecord], exp: ExperimentConfig) -> str:
    """Per-level rows in deterministic (group, index) order."""
    seed_of = {
        (g, i): level_seed(exp.base_seed, g, i)
        for g in exp.groups
        for i in range(exp.levels_per_group)
    }
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for pos, record in enumerate(records):
        group = exp.groups[pos // exp.levels_per_group]
        index = pos % exp.levels_per_group
        row = [group, index, seed_of[(group, index)]]
        row += [getattr(record, f) for f in _CSV_FIELDS[3:]]
        writer.writerow(row)
    return buf.getvalue()


# -- table emission ----------------------------------------------------------------

_TABLE_ROWS = (
    ("repair_time", "Repair Time (s)"),
    ("facilities_removed", "Facilities Removed"),
    ("rerun_time", "Rerun Time (s)"),
    ("simulation_time", "Simulation Time (s)"),
    ("avg_completion_time", "Avg. Completion Time (s)"),
    ("grid_exploration", "Grid Exploration"),
    ("sim_grid_exploration", "Sim. Grid Exploration"),
    ("avg_grid_exploration", "Avg. Grid Exploration"),
)

_COVERAGE_ROWS = {
    "grid_exploration": "(Coverage %)",
    "sim_grid_exploration": "(Sim. Coverage %)",
    "avg_grid_exploration": "(Avg. Coverage %)",
}


def emit_table(stats: AggregateStats) -> tuple[str, str]:
    """Markdown table plus a lossless CSV of the aggregate statistics."""
    lines = ["| Metric | " + " | ".join(stats.groups) + " |"]
    lines.append("|---" * (len(stats.groups) + 1) + "|")
    if stats.groups:
        for key, label in _TABLE_ROWS:
            cells = []
            for group in stats.groups:
                m = stats.metrics[group][key]
                cells.append(f"{m.mean:.2f} ± {m.std:.2f}")
            lines.append(f"| {label} | " + " | ".join(cells) + " |")
            if key in _COVERAGE_ROWS and stats.total_cells:
                pct = [
                    f"({stats.metrics[g][key].mean / stats.total_cells * 100:.1f}%)"
                    for g in stats.groups
                ]
                lines.append(f"| {_COVERAGE_ROWS[key]} | " + " | ".join(pct) + " |")
        tally_cells = [
            "/".join(str(stats.tallies[g][s]) for s in _STATUSES) for g in stats.groups
        ]
        lines.append(
            "| Status (valid/unrepairable/abnormal/failed) | "
            + " | ".join(tally_cells)
            + " |"
        )
    markdown = "\n".join(lines) + "\n"

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["group", "name", "mean", "std", "ci_low", "ci_high", "n"])
    writer.writerow(["_total_cells", "", "", "", "", "", stats.total_cells])
    for group in stats.groups:
        for key, _ in _TABLE_ROWS:
            m = stats.metrics[group][key]
            writer.writerow(
                [group, key, repr(m.mean), repr(m.std), repr(m.ci_low), repr(m.ci_high), m.n]
            )
        for status in _STATUSES:
            writer.writerow(
                [group, f"count:{status}", "", "", "", "", stats.tallies[group][status]]
            )
    return markdown, buf.getvalue()


def parse_stats_csv(text: str) -> AggregateStats:
    """Rebuild AggregateStats from its CSV form (round-trip identical)."""
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    assert header[0] == "group"
    total_cells = 0
    groups: list[str] = []
    metrics: dict[str, dict[str, MetricStats]] = {}
    tallies: dict[str, dict[str, int]] = {}
    for row in body:
        group, name = row[0], row[1]
        if group == "_total_cells":
            total_cells = int(row[6])
            continue
        if group not in metrics:
            metrics[group] = {}
            tallies[group] = {}
            groups.append(group)
        if name.startswith("count:"):
            tallies[group][name.split(":", 1)[1]] = int(row[6])
        else:
            metrics[group][name] = MetricStats(
                mean=float(row[2]),
                std=float(row[3]),
                ci_low=float(row[4]),
                ci_high=float(row[5]),
                n=int(row[6]),
            )
    return AggregateStats(
        groups=tuple(groups), metrics=metrics, tallies=tallies, total_cells=total_cells
    )
