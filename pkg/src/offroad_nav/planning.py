"""Global D* Lite with incremental repair; local Hybrid A* over motion primitives."""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .world import VehicleParams, VehiclePose, wrap_angle

SQRT2 = math.sqrt(2.0)
# 8-connected moves, diagonals cost sqrt(2); fixed order keeps runs deterministic.
MOTIONS = (
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2),
)


class InitError(Exception):
    pass


Cell = tuple[int, int]


@dataclass
class DStarState:
    occupied: np.ndarray          # bool, shape (n_x, n_y)
    start: Cell
    goal: Cell
    g: np.ndarray
    rhs: np.ndarray
    k_m: float = 0.0
    queue: list = field(default_factory=list)
    entry: dict = field(default_factory=dict)   # cell -> live queue key
    seq: itertools.count = field(default_factory=itertools.count)
    expanded_count: int = 0
    queue_peak: int = 0

    def in_bounds(self, c: Cell) -> bool:
        return 0 <= c[0] < self.occupied.shape[0] and 0 <= c[1] < self.occupied.shape[1]


def _h(a: Cell, b: Cell) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


# Keys are sums of sqrt(2) edge costs and Euclidean heuristics; the same exact
# value can differ by ulps depending on addition order, and a tie mistaken for
# "greater" ends the repair loop with a stale start value. Snapping key
# components to a fixed grid makes exact-arithmetic ties compare equal.
KEY_QUANTUM = 1e-9


def _quantize(v: float) -> float:
    if not math.isfinite(v):
        return v
    return round(v / KEY_QUANTUM) * KEY_QUANTUM


def _key(state: DStarState, c: Cell) -> tuple[float, float]:
    m = min(state.g[c], state.rhs[c])
    return (_quantize(m + _h(state.start, c) + state.k_m), _quantize(m))


def _neighbors(state: DStarState, c: Cell):
    x, y = c
    for dx, dy, cost in MOTIONS:
        n = (x + dx, y + dy)
        if state.in_bounds(n):
            yield n, cost


def _push(state: DStarState, c: Cell):
    k = _key(state, c)
    entry = (k[0], k[1], next(state.seq))
    state.entry[c] = entry
    heapq.heappush(state.queue, (*entry, c))
    state.queue_peak = max(state.queue_peak, len(state.queue))


def _update_vertex(state: DStarState, u: Cell):
    if u != state.goal:
        best = math.inf
        for v, cost in _neighbors(state, u):
            if not state.occupied[v]:
                best = min(best, cost + state.g[v])
        state.rhs[u] = best
    state.entry.pop(u, None)
    if state.g[u] != state.rhs[u]:
        _push(state, u)


def _top_key(state: DStarState):
    while state.queue:
        k1, k2, seq, c = state.queue[0]
        if state.entry.get(c) == (k1, k2, seq):
            return (k1, k2)
        heapq.heappop(state.queue)
    return None


def dstar_init(occupied: np.ndarray, start: Cell, goal: Cell) -> DStarState:
    """Fresh search state: all costs infinite except rhs(goal) = 0."""
    occupied = np.asarray(occupied, dtype=bool).copy()
    for name, c in (("start", start), ("goal", goal)):
        if not (0 <= c[0] < occupied.shape[0] and 0 <= c[1] < occupied.shape[1]):
            raise InitError(f"{name} cell {c} out of bounds")
        if occupied[c]:
            raise InitError(f"{name} cell {c} is occupied")
    shape = occupied.shape
    state = DStarState(occupied=occupied, start=tuple(start), goal=tuple(goal),
                       g=np.full(shape, math.inf), rhs=np.full(shape, math.inf))
    state.rhs[state.goal] = 0.0
    _push(state, state.goal)
    return state


def dstar_compute(state: DStarState) -> list[Cell] | None:
    """Repair until the start is consistent; return the start-to-goal cell path."""
    start = state.start
    while True:
        top = _top_key(state)
        k_start = _key(state, start)
        if top is None or (top > k_start and state.rhs[start] == state.g[start]):
            break
        k1, k2, seq, u = heapq.heappop(state.queue)
        if state.entry.get(u) != (k1, k2, seq):
            continue
        del state.entry[u]
        state.expanded_count += 1
        k_new = _key(state, u)
        if (k1, k2) < k_new:
            _push(state, u)
        elif state.g[u] > state.rhs[u]:
            state.g[u] = state.rhs[u]
            for v, _ in _neighbors(state, u):
                _update_vertex(state, v)
        else:
            state.g[u] = math.inf
            _update_vertex(state, u)
            for v, _ in _neighbors(state, u):
                _update_vertex(state, v)
    if math.isinf(state.rhs[start]):
        return None
    return _extract_path(state)


def _extract_path(state: DStarState) -> list[Cell]:
    path = [state.start]
    current = state.start
    limit = state.occupied.size + 1
    while current != state.goal and limit > 0:
        best, best_cost = None, math.inf
        for v, cost in _neighbors(state, current):
            if state.occupied[v]:
                continue
            total = cost + state.g[v]
            if total < best_cost:
                best, best_cost = v, total
        if best is None or math.isinf(best_cost):
            return None
        path.append(best)
        current = best
        limit -= 1
    if current != state.goal:
        return None
    return path


def dstar_cost(state: DStarState) -> float:
    return float(state.rhs[state.start])


def dstar_update(state: DStarState, changes: list[tuple[Cell, bool]], new_start: Cell) -> DStarState:
    """Apply occupancy flips and a start move; repair lazily on next compute."""
    new_start = tuple(new_start)
    if new_start != state.start:
        state.k_m += _h(state.start, new_start)
        state.start = new_start
    for cell, _ in changes:
        if not state.in_bounds(cell):
            raise ValueError(f"change cell {cell} out of bounds")
    for cell, occ in changes:
        state.occupied[cell] = occ
    for cell, _ in changes:
        # A cell flip changes the edges into it, so its neighbors' rhs values.
        for v, _ in _neighbors(state, cell):
            _update_vertex(state, v)
    return state


def dstar_debug(state: DStarState, path: list[Cell] | None) -> dict:
    return {
        "expanded_count": state.expanded_count,
        "path": [list(c) for c in path] if path else None,
        "cost": None if path is None else dstar_cost(state),
        "queue_peak": state.queue_peak,
    }


def select_local_goal(global_path: list[Cell], pose: VehiclePose,
                      window_radius: float, s: float) -> Cell:
    """Farthest path waypoint within the radius; nearest waypoint as fallback."""
    if not global_path:
        raise ValueError("empty global path")

    def dist(c: Cell) -> float:
        return math.hypot((c[0] + 0.5) * s - pose.x, (c[1] + 0.5) * s - pose.y)

    for c in reversed(global_path):
        if dist(c) <= window_radius:
            return c
    return min(global_path, key=dist)


@dataclass
class MotionPrimitive:
    steering: float     # rad
    arc_length: float   # m


def default_primitives(delta_max: float, arc_length: float) -> list[MotionPrimitive]:
    return [MotionPrimitive(d, arc_length)
            for d in (-delta_max, -delta_max / 2, 0.0, delta_max / 2, delta_max)]


@dataclass
class Trajectory:
    poses: list[VehiclePose]
    total_cost: float
    expanded_count: int = 0
    queue_peak: int = 0


def _collides(occupied: np.ndarray, s: float, x: float, y: float, inflation: int) -> bool:
    cx, cy = int(math.floor(x / s)), int(math.floor(y / s))
    n_x, n_y = occupied.shape
    if not (0 <= cx < n_x and 0 <= cy < n_y):
        return True
    if inflation <= 0:
        return bool(occupied[cx, cy])
    x0, x1 = max(0, cx - inflation), min(n_x, cx + inflation + 1)
    y0, y1 = max(0, cy - inflation), min(n_y, cy + inflation + 1)
    return bool(occupied[x0:x1, y0:y1].any())


def hybrid_astar(occupied: np.ndarray, s: float, start_pose: VehiclePose, local_goal: Cell,
                 params: VehicleParams, primitives: list[MotionPrimitive] | None = None, *,
                 theta_bins: int = 72, arc_length_cells: float = 1.5,
                 lambda_steer: float | None = None, budget: int = 50000,
                 window_radius_cells: float | None = None, inflation_cells: int = 0,
                 sample_step_cells: float = 0.25, goal_tol_cells: float = 1.0) -> Trajectory | None:
    """Forward-only kinematic search toward the local goal cell.

    Cost is traveled arc length plus lambda_steer * |steering change|; buckets
    (cell_x, cell_y, theta_bin) are expanded at most once.
    """
    arc = arc_length_cells * s
    if primitives is None:
        primitives = default_primitives(params.delta_max, arc)
    if lambda_steer is None:
        lambda_steer = 0.1 * arc
    goal_xy = ((local_goal[0] + 0.5) * s, (local_goal[1] + 0.5) * s)
    goal_tol = goal_tol_cells * s
    window_r = None if window_radius_cells is None else window_radius_cells * s
    origin_xy = (start_pose.x, start_pose.y)

    if _collides(occupied, s, start_pose.x, start_pose.y, inflation_cells):
        return None

    def bucket(x: float, y: float, theta: float) -> tuple[int, int, int]:
        tb = int((theta % (2 * math.pi)) / (2 * math.pi) * theta_bins) % theta_bins
        return int(math.floor(x / s)), int(math.floor(y / s)), tb

    # nodes: (x, y, theta, steer, parent_idx, edge poses from parent)
    nodes: list[tuple] = [(start_pose.x, start_pose.y, start_pose.theta, 0.0, -1, [])]
    start_b = bucket(start_pose.x, start_pose.y, start_pose.theta)
    best_g = {start_b: 0.0}
    closed: set = set()
    seq = itertools.count()
    h0 = math.hypot(goal_xy[0] - start_pose.x, goal_xy[1] - start_pose.y)
    open_heap = [(h0, next(seq), 0.0, 0)]
    expanded = 0
    queue_peak = 1

    n_sub = max(1, math.ceil(arc_length_cells / sample_step_cells))
    ds = arc / n_sub

    while open_heap:
        f, _, g, idx = heapq.heappop(open_heap)
        x, y, theta, steer, _, _ = nodes[idx]
        b = bucket(x, y, theta)
        if b in closed:
            continue
        closed.add(b)
        if math.hypot(goal_xy[0] - x, goal_xy[1] - y) <= goal_tol:
            return _reconstruct(nodes, idx, start_pose, g, expanded, queue_peak)
        expanded += 1
        if expanded >= budget:
            return None
        for prim in primitives:
            nx, ny, nth = x, y, theta
            edge = []
            ok = True
            for _ in range(n_sub):
                nx += ds * math.cos(nth)
                ny += ds * math.sin(nth)
                nth = wrap_angle(nth + ds * math.tan(prim.steering) / params.wheelbase)
                if _collides(occupied, s, nx, ny, inflation_cells):
                    ok = False
                    break
                if window_r is not None and math.hypot(nx - origin_xy[0], ny - origin_xy[1]) > window_r:
                    ok = False
                    break
                edge.append(VehiclePose(nx, ny, nth, 0.0))
            if not ok:
                continue
            nb = bucket(nx, ny, nth)
            if nb in closed:
                continue
            ng = g + prim.arc_length + lambda_steer * abs(prim.steering - steer)
            if ng >= best_g.get(nb, math.inf):
                continue
            best_g[nb] = ng
            nodes.append((nx, ny, nth, prim.steering, idx, edge))
            nf = ng + math.hypot(goal_xy[0] - nx, goal_xy[1] - ny)
            heapq.heappush(open_heap, (nf, next(seq), ng, len(nodes) - 1))
            queue_peak = max(queue_peak, len(open_heap))
    return None


def _reconstruct(nodes, idx, start_pose, cost, expanded, queue_peak) -> Trajectory:
    edges = []
    while idx >= 0:
        x, y, theta, steer, parent, edge = nodes[idx]
        edges.append(edge)
        idx = parent
    poses = [VehiclePose(start_pose.x, start_pose.y, start_pose.theta, 0.0)]
    for edge in reversed(edges):
        poses.extend(edge)
    return Trajectory(poses=poses, total_cost=cost,
                      expanded_count=expanded, queue_peak=queue_peak)
