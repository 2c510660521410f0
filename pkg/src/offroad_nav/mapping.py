"""Drivability masks + sensed points -> occupancy grid with change-lists."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .world import SensorPatch, TerrainWorld

FREE, OCCUPIED, UNKNOWN = 0, 1, 2


@dataclass
class LabeledPoint:
    x: float          # world meters
    y: float
    occupied: int     # 0 drivable, 1 everything else


@dataclass
class GridUpdate:
    changed: list[tuple[tuple[int, int], int, int]]   # (cell, old_state, new_state)
    frame_id: int = 0


@dataclass
class OccupancyGrid:
    n_x: int
    n_y: int
    s: float                      # world units per cell (downsampling factor)
    cells: np.ndarray = None      # uint8 states, shape (n_x, n_y), [ix, iy]

    def __post_init__(self):
        if self.cells is None:
            self.cells = np.full((self.n_x, self.n_y), UNKNOWN, dtype=np.uint8)

    @classmethod
    def for_world(cls, world: TerrainWorld, s: float) -> "OccupancyGrid":
        n_x = math.ceil(world.width * world.cell_size / s)
        n_y = math.ceil(world.height * world.cell_size / s)
        return cls(n_x=n_x, n_y=n_y, s=s)

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        return 0 <= cell[0] < self.n_x and 0 <= cell[1] < self.n_y

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        cell = voxelize((x, y), self.s)
        if not self.in_bounds(cell):
            raise ValueError(f"point ({x}, {y}) outside grid extent")
        return cell

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        return (cell[0] + 0.5) * self.s, (cell[1] + 0.5) * self.s

    def planner_view(self, unknown_as_free: bool = True,
                     force_free: tuple[tuple[int, int], ...] = ()) -> np.ndarray:
        """Boolean occupied array for a planner, with the unknown policy applied."""
        if unknown_as_free:
            occ = self.cells == OCCUPIED
        else:
            occ = self.cells != FREE
        if force_free:
            occ = occ.copy()
            for cx, cy in force_free:
                if self.in_bounds((cx, cy)):
                    occ[cx, cy] = False
        return occ

    def dump_pgm(self, path: str | Path, frame_id: int = 0) -> None:
        """ASCII dump (free=0, occupied=1, unknown=2) plus a JSON metadata line."""
        import json
        lines = [f"# {json.dumps({'s': self.s, 'n_x': self.n_x, 'n_y': self.n_y, 'frame_id': frame_id})}"]
        for iy in range(self.n_y):
            lines.append(" ".join(str(int(self.cells[ix, iy])) for ix in range(self.n_x)))
        Path(path).write_text("\n".join(lines) + "\n")


def voxelize(p: tuple[float, float], s: float,
             extent: tuple[float, float] | None = None) -> tuple[int, int]:
    """Componentwise floor(p / s); optionally validate against a world extent."""
    if s <= 0:
        raise ValueError("downsampling factor must be positive")
    if extent is not None:
        if not (0.0 <= p[0] < extent[0] and 0.0 <= p[1] < extent[1]):
            raise ValueError(f"point {p} outside world extent {extent}")
    return int(math.floor(p[0] / s)), int(math.floor(p[1] / s))


def label_points(patch: SensorPatch, mask: np.ndarray, cell_size: float = 1.0) -> list[LabeledPoint]:
    """One point per patch cell at its world-coordinate center; 0 inside the mask."""
    if mask.shape != (patch.height, patch.width):
        raise ValueError("mask dims must match patch dims")
    ox, oy = patch.origin
    out = []
    for iy in range(patch.height):
        y = (oy + iy + 0.5) * cell_size
        row = mask[iy]
        for ix in range(patch.width):
            out.append(LabeledPoint((ox + ix + 0.5) * cell_size, y, 0 if row[ix] else 1))
    return out


def update_grid(grid: OccupancyGrid, points: list[LabeledPoint], frame_id: int = 0) -> GridUpdate:
    """Fold labeled points into the grid; a cell is occupied if ANY point in it says so."""
    agg: dict[tuple[int, int], int] = {}
    for p in points:
        cell = voxelize((p.x, p.y), grid.s)
        if not grid.in_bounds(cell):
            raise ValueError(f"labeled point ({p.x}, {p.y}) outside grid")
        if p.occupied:
            agg[cell] = OCCUPIED
        else:
            agg.setdefault(cell, FREE)
    changed = []
    for cell, new_state in agg.items():
        old_state = int(grid.cells[cell])
        if old_state != new_state:
            grid.cells[cell] = new_state
            changed.append((cell, old_state, new_state))
    return GridUpdate(changed=changed, frame_id=frame_id)
