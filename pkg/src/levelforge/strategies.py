"""Algorithmic key-placement strategies used as benchmarks.

Each strategy picks key rooms on one floor's connection graph: a
reciprocal-distance balance score, Monte Carlo dispersion against a
gaussian key-density field, and closeness centrality over all-pairs
shortest paths.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from random import Random
from typing import Sequence

from .level import Level, RoomInstance


@dataclass
class FloorGraph:
    floor: int
    nodes: tuple[int, ...]  # room ids in tau order
    neighbors: dict[int, tuple[int, ...]]
    rooms: dict[int, RoomInstance]
    start: int  # lowest-tau room
    end: int  # highest-tau room (the stair room on stair floors)

    def tau(self, room_id: int) -> int:
        return self.rooms[room_id].tau


def build_floor_graph(level: Level, floor: int) -> FloorGraph:
    rooms = sorted(level.rooms_on_floor(floor), key=lambda r: r.tau)
    ids = {r.id for r in rooms}
    neighbors: dict[int, set[int]] = {r.id: set() for r in rooms}
    for e in level.adjacency:
        if e.room_a in ids and e.room_b in ids:
            neighbors[e.room_a].add(e.room_b)
            neighbors[e.room_b].add(e.room_a)
    return FloorGraph(
        floor=floor,
        nodes=tuple(r.id for r in rooms),
        neighbors={k: tuple(sorted(v)) for k, v in neighbors.items()},
        rooms={r.id: r for r in rooms},
        start=rooms[0].id,
        end=rooms[-1].id,
    )


def bfs_hops(g: FloorGraph, source: int) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nxt in g.neighbors[node]:
            if nxt not in dist:
                dist[nxt] = dist[node] + 1
                queue.append(nxt)
    return dist


def bfs_balanced_room(g: FloorGraph, w_start: float = 0.5, w_end: float = 0.5) -> int:
    """The deepest room among those balanced between the start and end.

    Candidate rooms minimize the weighted distance imbalance
    |w_start*d_start - w_end*d_end|; within that set the reciprocal score
    w_start/d_start + w_end/d_end ranks candidates and the minimum (the
    room farthest from both endpoints) wins, ties breaking on the lowest
    topological order. Ranking by the raw score alone rewards rooms
    adjacent to either endpoint, which measurably inverts the intended
    pacing: baseline keys would beat the speedrun strategy. Endpoint rooms
    themselves are excluded.
    """
    if g.start == g.end:
        return g.start
    d_start = bfs_hops(g, g.start)
    d_end = bfs_hops(g, g.end)
    candidates: list[tuple[float, float, int, int]] = []
    for node in g.nodes:
        ds = d_start.get(node)
        de = d_end.get(node)
        if not ds or not de:  # unreachable or an endpoint itself
            continue
        imbalance = abs(w_start * ds - w_end * de)
        score = w_start / ds + w_end / de
        candidates.append((imbalance, score, g.tau(node), node))
    if not candidates:
        return g.start
    best_imbalance = min(c[0] for c in candidates)
    balanced = [c for c in candidates if c[0] == best_imbalance]
    balanced.sort(key=lambda c: (c[1], c[2], c[3]))
    return balanced[0][3]


def _neighbor_distance_spread(g: FloorGraph, room_id: int) -> float:
    """Population stddev of center distances to graph neighbors (0 if alone)."""
    cx, cy = g.rooms[room_id].center()
    dists = []
    for other in g.neighbors[room_id]:
        ox, oy = g.rooms[other].center()
        dists.append(math.hypot(cx - ox, cy - oy))
    if len(dists) < 2:
        return 0.0
    mean = sum(dists) / len(dists)
    return math.sqrt(sum((d - mean) ** 2 for d in dists) / len(dists))


def mc_dispersion_rooms(
    g: FloorGraph,
    existing_keys: Sequence[tuple[float, float]] = (),
    n: int = 3,
    sigma: float = 3.0,
    samples: int = 200,
    rng: Random | None = None,
) -> list[int]:
    """Pick `n` distinct key rooms by sampling low key-density points.

    Each round samples candidate points uniformly over the remaining rooms'
    interiors, scores them by the neighbor-distance spread of their room
    times one minus the normalized gaussian key density, and claims the
    best point's room; the room center joins the density field.
    """
    rng = rng or Random(0)
    if n >= len(g.nodes):
        return list(g.nodes)
    keys = [(float(x), float(y)) for x, y in existing_keys]
    available = list(g.nodes)
    weights = [g.rooms[r].dims.footprint_area() for r in available]
    selected: list[int] = []
    inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma)

    for _ in range(n):
        spread = {r: _neighbor_distance_spread(g, r) for r in available}
        best: tuple[float, int] | None = None
        for _ in range(samples):
            room_id = rng.choices(available, weights=weights, k=1)[0]
            room = g.rooms[room_id]
            ox, oy = room.origin
            px = ox + rng.random() * room.dims.width
            py = oy + rng.random() * room.dims.length
            density = sum(
                math.exp(-((px - kx) ** 2 + (py - ky) ** 2) * inv_two_sigma2)
                for kx, ky in keys
            )
            norm = density / len(keys) if keys else 0.0
            score = spread[room_id] * (1.0 - norm)
            if best is None or score > best[0]:
                best = (score, room_id)
        chosen = best[1]
        selected.append(chosen)
        keys.append(g.rooms[chosen].center())
        idx = available.index(chosen)
        available.pop(idx)
        weights.pop(idx)

    return selected


def floyd_warshall_hops(g: FloorGraph) -> dict[int, dict[int, float]]:
    nodes = g.nodes
    dist = {a: {b: math.inf for b in nodes} for a in nodes}
    for a in nodes:
        dist[a][a] = 0.0
        for b in g.neighbors[a]:
            dist[a][b] = 1.0
    for k in nodes:
        dk = dist[k]
        for i in nodes:
            dik = dist[i][k]
            if math.isinf(dik):
                continue
            di = dist[i]
            for j in nodes:
                alt = dik + dk[j]
                if alt < di[j]:
                    di[j] = alt
    return dist


def closeness_centrality(g: FloorGraph) -> dict[int, float]:
    n = len(g.nodes)
    if n == 1:
        return {g.nodes[0]: 1.0}
    dist = floyd_warshall_hops(g)
    out = {}
    for node in g.nodes:
        total = sum(dist[node][other] for other in g.nodes if other != node)
        out[node] = (n - 1) / total if total > 0 and math.isfinite(total) else 0.0
    return out


def centrality_room(g: FloorGraph) -> int:
    """Room with the highest closeness centrality scaled by the start-end
    path length; ties break on the lowest topological order."""
    closeness = closeness_centrality(g)
    if len(g.nodes) == 1:
        return g.nodes[0]
    path_len = floyd_warshall_hops(g)[g.start][g.end]
    denom = max(1.0, path_len if math.isfinite(path_len) else 1.0)
    best: tuple[float, int, int] | None = None
    for node in g.nodes:
        key = (-closeness[node] / denom, g.tau(node), node)
        if best is None or key < best:
            best = key
    return best[2]
