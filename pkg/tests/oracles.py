"""Independent reference implementations the tests check the package against.

These stay deliberately naive (brute force, exhaustive enumeration) and share
no code with the implementations they verify.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from fractions import Fraction

import numpy as np

SQRT2 = math.sqrt(2.0)
MOVES8 = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2)]


def dijkstra_cost(occupied: np.ndarray, start, goal) -> float:
    """Plain Dijkstra over the 8-connected grid; inf when disconnected."""
    n_x, n_y = occupied.shape
    dist = {tuple(start): 0.0}
    heap = [(0.0, tuple(start))]
    goal = tuple(goal)
    while heap:
        d, cell = heapq.heappop(heap)
        if d > dist.get(cell, math.inf):
            continue
        if cell == goal:
            return d
        x, y = cell
        for dx, dy, c in MOVES8:
            nx, ny = x + dx, y + dy
            if 0 <= nx < n_x and 0 <= ny < n_y and not occupied[nx, ny]:
                nd = d + c
                if nd < dist.get((nx, ny), math.inf):
                    dist[(nx, ny)] = nd
                    heapq.heappush(heap, (nd, (nx, ny)))
    return math.inf


def path_cost(path) -> float:
    total = 0.0
    for (ax, ay), (bx, by) in zip(path[:-1], path[1:]):
        total += math.hypot(bx - ax, by - ay)
    return total


def bfs_drivable_connected(world, start, goal) -> bool:
    """4-connected BFS over ground-truth drivable cells."""
    drivable = world.drivable_mask()          # (height, width) [y, x]
    sx, sy = start
    gx, gy = goal
    if not drivable[sy, sx] or not drivable[gy, gx]:
        return False
    seen = {(sx, sy)}
    q = deque([(sx, sy)])
    while q:
        x, y = q.popleft()
        if (x, y) == (gx, gy):
            return True
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < world.width and 0 <= ny < world.height \
                    and drivable[ny, nx] and (nx, ny) not in seen:
                seen.add((nx, ny))
                q.append((nx, ny))
    return False


def centroid_bruteforce(bitmap: np.ndarray) -> tuple[float, float]:
    sx = sy = n = 0
    for y in range(bitmap.shape[0]):
        for x in range(bitmap.shape[1]):
            if bitmap[y, x]:
                sx += x
                sy += y
                n += 1
    return sx / n, sy / n


def iou_bruteforce(a: np.ndarray, b: np.ndarray) -> float:
    inter = union = 0
    for y in range(a.shape[0]):
        for x in range(a.shape[1]):
            if a[y, x] and b[y, x]:
                inter += 1
            if a[y, x] or b[y, x]:
                union += 1
    return 0.0 if union == 0 else inter / union


def floor_div_fraction(value: float, s: float) -> int:
    """Exact rational floor of value / s."""
    return int(Fraction(value) / Fraction(s) // 1)


def point_segment_distance(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    if dx == dy == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def min_trajectory_distance(px, py, xs, ys) -> float:
    return min(point_segment_distance(px, py, xs[i], ys[i], xs[i + 1], ys[i + 1])
               for i in range(len(xs) - 1))


def compose_gt_bruteforce(masks: dict[int, np.ndarray], states: dict[int, str], shape):
    out = np.zeros(shape, dtype=bool)
    for y in range(shape[0]):
        for x in range(shape[1]):
            added = any(state == "add" and masks[i][y, x] for i, state in states.items())
            subtracted = any(state == "subtract" and masks[i][y, x] for i, state in states.items())
            out[y, x] = added and not subtracted
    return out


def connected_4(bitmap: np.ndarray) -> bool:
    """Is the set of ones a single 4-connected component?"""
    ys, xs = np.nonzero(bitmap)
    if ys.size == 0:
        return True
    seen = np.zeros_like(bitmap)
    q = deque([(int(ys[0]), int(xs[0]))])
    seen[ys[0], xs[0]] = True
    count = 1
    while q:
        y, x = q.popleft()
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ny, nx = y + dy, x + dx
            if 0 <= ny < bitmap.shape[0] and 0 <= nx < bitmap.shape[1] \
                    and bitmap[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                count += 1
                q.append((ny, nx))
    return count == int(ys.size)
