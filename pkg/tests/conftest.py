import pytest

import levelforge

# acceptance criteria outcomes, printed as one line each at session end
ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((number, ok, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {number:2d} {status} {detail}")
from levelforge.arrangement import LevelConfig
from levelforge.geometry import Dimensions, Pose
from levelforge.layout import SAParams
from levelforge.level import (
    AdjacencyEdge,
    Door,
    FacilityInstance,
    Level,
    LevelSkeleton,
    RoomInstance,
)


@pytest.fixture(scope="session")
def hospital_db():
    return levelforge.load_sample_database("sh_hospital")


@pytest.fixture(scope="session")
def minimal_db():
    return levelforge.load_sample_database("test_minimal")


def make_room(room_id, origin, w, l, floor=0, tau=None, arch="enclosed", template="Cell", h=3.0):
    return RoomInstance(
        id=room_id,
        template=template,
        floor=floor,
        origin=origin,
        dims=Dimensions(w, l, h),
        tau=tau if tau is not None else room_id,
        arch_type=arch,
    )


def make_level(rooms, doors=(), adjacency=(), stairs=(), width=50.0, length=50.0,
               height=30.0, floors=1, config=None):
    skeleton = LevelSkeleton(width=width, length=length, height=height, floors=floors)
    skeleton.rooms = list(rooms)
    skeleton.doors = list(doors)
    skeleton.adjacency = list(adjacency)
    skeleton.stairs = list(stairs)
    cfg = config or LevelConfig(width=width, length=length, height=height, floors=floors)
    return Level(config=cfg, skeleton=skeleton)


def make_facility(fac_id, room_id, x, y, w=1.0, l=1.0, h=1.0, yaw=0.0, fixed=False,
                  def_name="Crate", constraints=()):
    return FacilityInstance(
        id=fac_id,
        def_name=def_name,
        room_id=room_id,
        pose=Pose(x, y, h / 2.0, yaw, Dimensions(w, l, h)),
        fixed=fixed,
        constraints=tuple(constraints),
    )


@pytest.fixture
def two_room_level():
    """Two enclosed 10x10 rooms side by side, door at the shared midpoint."""
    rooms = [
        make_room(1, (0.0, 0.0), 10, 10, tau=1),
        make_room(2, (10.0, 0.0), 10, 10, tau=2),
    ]
    doors = [Door(1, 2, 10.0, 5.0)]
    adjacency = [AdjacencyEdge(1, 2, "door")]
    return make_level(rooms, doors, adjacency, width=20.0, length=10.0, height=3.0)


def fast_sa(iterations=150, restarts=1):
    return SAParams(iterations=iterations, restarts=restarts)
