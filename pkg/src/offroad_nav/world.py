"""Synthetic terrain world, kinematic vehicle, and viewport sensor."""
from __future__ import annotations

import enum
import itertools
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class TerrainClass(enum.Enum):
    DIRT = "dirt"
    SAND = "sand"
    ASPHALT = "asphalt"
    GRAVEL = "gravel"
    MULCH = "mulch"
    CONCRETE = "concrete"
    ROCKBED = "rockbed"
    PATCHY_GRASS = "patchy_grass"
    DENSE_GRASS = "dense_grass"
    ROCKS = "rocks"
    WATER = "water"
    OBSTACLE = "obstacle"


# Byte codes for serialization; order is part of the world file format.
CLASS_ORDER: tuple[TerrainClass, ...] = tuple(TerrainClass)
CLASS_TO_BYTE = {c: i for i, c in enumerate(CLASS_ORDER)}
BYTE_TO_CLASS = {i: c for i, c in enumerate(CLASS_ORDER)}

DEFAULT_DRIVABLE: frozenset[TerrainClass] = frozenset({
    TerrainClass.DIRT,
    TerrainClass.SAND,
    TerrainClass.ASPHALT,
    TerrainClass.GRAVEL,
    TerrainClass.MULCH,
    TerrainClass.CONCRETE,
    TerrainClass.ROCKBED,
})

WORLD_MAGIC = b"OFRW1"


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if -math.pi < theta <= math.pi:
        return theta
    w = (theta + math.pi) % (2.0 * math.pi) - math.pi
    if w == -math.pi:
        w = math.pi
    return w


@dataclass
class VehicleParams:
    wheelbase: float = 2.3        # m
    delta_max: float = 0.6        # rad
    accel_min: float = -4.0       # m/s^2
    accel_max: float = 2.5        # m/s^2
    v_max: float = 8.0            # m/s

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise ValueError("wheelbase must be positive")
        if not (0.0 < self.delta_max < math.pi / 2):
            raise ValueError("delta_max must be in (0, pi/2)")
        if not (self.accel_min < 0.0 < self.accel_max):
            raise ValueError("accel limits must straddle zero")


@dataclass
class VehiclePose:
    x: float
    y: float
    theta: float
    v: float = 0.0


@dataclass
class ControlCommand:
    delta: float   # rad, already saturated to +-delta_max
    accel: float   # m/s^2, within [accel_min, accel_max]


@dataclass
class SensorPatch:
    origin: tuple[int, int]       # world cell coords of the patch's (x0, y0)
    width: int
    height: int
    classes: np.ndarray           # uint8 class codes, shape (height, width)
    frame_id: int

    def class_grid(self) -> np.ndarray:
        return self.classes


@dataclass
class TerrainWorld:
    width: int                    # cells
    height: int                   # cells
    cell_size: float              # meters per cell
    cells: np.ndarray             # uint8 class codes, shape (height, width)
    drivable_classes: frozenset[TerrainClass] = DEFAULT_DRIVABLE
    anchors: dict = field(default_factory=dict)          # name -> [cx, cy]
    hazard_cells: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("world dimensions must be >= 1")
        if self.cells.shape != (self.height, self.width):
            raise ValueError("cells shape must be (height, width)")

    def in_bounds(self, cx: int, cy: int) -> bool:
        return 0 <= cx < self.width and 0 <= cy < self.height

    def class_at(self, cx: int, cy: int) -> TerrainClass:
        return BYTE_TO_CLASS[int(self.cells[cy, cx])]

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(x / self.cell_size)), int(math.floor(y / self.cell_size))

    def contains_point(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.width * self.cell_size and 0.0 <= y < self.height * self.cell_size

    def drivable_mask(self) -> np.ndarray:
        """Boolean (height, width) grid of ground-truth drivable cells."""
        codes = np.array([CLASS_TO_BYTE[c] for c in self.drivable_classes], dtype=np.uint8)
        return np.isin(self.cells, codes)

    def cell_center(self, cx: int, cy: int) -> tuple[float, float]:
        return (cx + 0.5) * self.cell_size, (cy + 0.5) * self.cell_size


@dataclass
class WorldGenSpec:
    width: int = 64
    height: int = 64
    cell_size: float = 1.0
    feasible: bool = True
    layout: str = "corridor"      # corridor | blobs | all_obstacle | hazard_u
    corridor_width: int = 3       # cells
    corridor_class: TerrainClass = TerrainClass.DIRT
    n_blobs: int = 40
    background_classes: tuple[TerrainClass, ...] = (
        TerrainClass.DENSE_GRASS,
        TerrainClass.ROCKS,
        TerrainClass.WATER,
        TerrainClass.OBSTACLE,
        TerrainClass.PATCHY_GRASS,
    )
    drivable_classes: frozenset[TerrainClass] = DEFAULT_DRIVABLE

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise ValueError("world spec dimensions must be >= 32x32")
        if self.corridor_width < 3:
            raise ValueError("corridor width must be >= 3 cells")


def _blob_background(rng: np.random.Generator, spec: WorldGenSpec) -> np.ndarray:
    """Nearest-seed class blobs: a cheap stand-in for sculpted terrain."""
    h, w = spec.height, spec.width
    n = max(1, spec.n_blobs)
    seeds_x = rng.integers(0, w, size=n)
    seeds_y = rng.integers(0, h, size=n)
    seed_cls = rng.integers(0, len(spec.background_classes), size=n)
    ys, xs = np.mgrid[0:h, 0:w]
    d2 = (xs[..., None] - seeds_x) ** 2 + (ys[..., None] - seeds_y) ** 2
    nearest = np.argmin(d2, axis=-1)
    codes = np.array([CLASS_TO_BYTE[spec.background_classes[k]] for k in range(len(spec.background_classes))],
                     dtype=np.uint8)
    return codes[seed_cls[nearest]]


def _carve_polyline(cells: np.ndarray, pts: list[tuple[int, int]], half: int, code: int) -> None:
    h, w = cells.shape
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        steps = max(abs(x1 - x0), abs(y1 - y0), 1)
        for t in range(steps + 1):
            cx = round(x0 + (x1 - x0) * t / steps)
            cy = round(y0 + (y1 - y0) * t / steps)
            xa, xb = max(0, cx - half), min(w, cx + half + 1)
            ya, yb = max(0, cy - half), min(h, cy + half + 1)
            cells[ya:yb, xa:xb] = code


def generate_world(seed: int, spec: WorldGenSpec) -> TerrainWorld:
    """Deterministic synthetic world; feasible specs contain a drivable corridor."""
    if spec.corridor_width > min(spec.width, spec.height):
        raise ValueError("corridor wider than world")
    rng = np.random.default_rng(seed)

    if spec.layout == "all_obstacle":
        cells = np.full((spec.height, spec.width), CLASS_TO_BYTE[TerrainClass.OBSTACLE], dtype=np.uint8)
        return TerrainWorld(spec.width, spec.height, spec.cell_size, cells,
                            drivable_classes=spec.drivable_classes)

    cells = _blob_background(rng, spec)
    anchors: dict = {}
    hazard: set[tuple[int, int]] = set()
    half = spec.corridor_width // 2
    code = CLASS_TO_BYTE[spec.corridor_class]

    if spec.layout == "blobs":
        pass
    elif spec.layout == "corridor" and spec.feasible:
        # Gently wandering corridor from a left anchor to a right anchor.
        start = (4, spec.height // 2)
        goal = (spec.width - 5, spec.height // 2)
        n_way = 4
        xs = np.linspace(start[0], goal[0], n_way + 2).astype(int)
        ys = [start[1]]
        for _ in range(n_way):
            lo = max(half + 1, start[1] - spec.height // 4)
            hi = min(spec.height - half - 2, start[1] + spec.height // 4)
            ys.append(int(rng.integers(lo, hi + 1)))
        ys.append(goal[1])
        _carve_polyline(cells, list(zip(xs, ys)), half, code)
        anchors = {"start": list(start), "goal": list(goal)}
    elif spec.layout == "hazard_u":
        # Long clear U route plus a straight water "bridge" between the start
        # and goal pockets: looks like terrain, is not drivable ground truth,
        # and is lethal to enter (the ditch analog). The U's arms sit one
        # turning radius to the side of the pockets so a forward-only vehicle
        # can swing into them; the bridge is dead ahead from the start.
        m = 8
        pocket = 6
        arm_off = 4
        start = (m, m)
        goal = (spec.width - m - 1, m)
        bot = spec.height - m - 1
        left_arm_x = m + arm_off
        right_arm_x = spec.width - 1 - m - arm_off
        _carve_polyline(cells, [(left_arm_x, m), (left_arm_x, bot),
                                (right_arm_x, bot), (right_arm_x, m)], half, code)
        for cx, cy in (start, goal):
            cells[cy - pocket:cy + pocket + 1, cx - pocket:cx + pocket + 1] = code
        bridge_code = CLASS_TO_BYTE[TerrainClass.WATER]
        wall = CLASS_TO_BYTE[TerrainClass.OBSTACLE]
        bx0, bx1 = start[0] + pocket + 1, goal[0] - pocket
        by0, by1 = m - half, m + half + 1
        cells[by0:by1, bx0:bx1] = bridge_code
        cells[by0 - 2:by0, bx0:bx1] = wall
        cells[by1:by1 + 2, bx0:bx1] = wall
        for cy in range(by0, by1):
            for cx in range(bx0, bx1):
                hazard.add((cx, cy))
        anchors = {"start": list(start), "goal": list(goal)}
    elif spec.layout not in ("corridor",):
        raise ValueError(f"unknown layout {spec.layout!r}")

    return TerrainWorld(spec.width, spec.height, spec.cell_size, cells,
                        drivable_classes=spec.drivable_classes,
                        anchors=anchors, hazard_cells=frozenset(hazard))


def step_vehicle(pose: VehiclePose, cmd: ControlCommand, dt: float, params: VehicleParams) -> VehiclePose:
    """Forward-Euler kinematic bicycle step."""
    vals = (pose.x, pose.y, pose.theta, pose.v, cmd.delta, cmd.accel, dt)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("non-finite input to step_vehicle")
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = pose.x + pose.v * math.cos(pose.theta) * dt
    y = pose.y + pose.v * math.sin(pose.theta) * dt
    theta = wrap_angle(pose.theta + (pose.v / params.wheelbase) * math.tan(cmd.delta) * dt)
    v = min(max(pose.v + cmd.accel * dt, 0.0), params.v_max)
    return VehiclePose(x, y, theta, v)


_frame_counter = itertools.count(1)


def capture_patch(world: TerrainWorld, pose: VehiclePose, window: int,
                  frame_id: int | None = None) -> SensorPatch:
    """Window of ground-truth classes centered on the vehicle cell, clipped to bounds."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if not world.contains_point(pose.x, pose.y):
        raise ValueError("pose outside world")
    cx, cy = world.cell_of(pose.x, pose.y)
    x0 = max(0, cx - window // 2)
    y0 = max(0, cy - window // 2)
    x1 = min(world.width, cx - window // 2 + window)
    y1 = min(world.height, cy - window // 2 + window)
    if frame_id is None:
        frame_id = next(_frame_counter)
    return SensorPatch(origin=(x0, y0), width=x1 - x0, height=y1 - y0,
                       classes=world.cells[y0:y1, x0:x1].copy(), frame_id=frame_id)


def save_world(world: TerrainWorld, path: str | Path) -> None:
    """Binary grid (magic, u32 w, u32 h, f64 cell_size, row-major bytes) + JSON sidecar."""
    path = Path(path)
    header = WORLD_MAGIC + struct.pack("<IId", world.width, world.height, world.cell_size)
    path.write_bytes(header + world.cells.tobytes())
    sidecar = {
        "drivable_classes": sorted(c.value for c in world.drivable_classes),
        "anchors": world.anchors,
        "hazard_cells": sorted(list(c) for c in world.hazard_cells),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_world(path: str | Path) -> TerrainWorld:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:5] != WORLD_MAGIC:
        raise ValueError("bad world file magic")
    width, height, cell_size = struct.unpack("<IId", raw[5:21])
    cells = np.frombuffer(raw[21:21 + width * height], dtype=np.uint8).reshape(height, width).copy()
    sidecar_path = Path(str(path) + ".json")
    drivable = DEFAULT_DRIVABLE
    anchors: dict = {}
    hazard: frozenset = frozenset()
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text())
        drivable = frozenset(TerrainClass(v) for v in meta.get("drivable_classes", []))
        anchors = meta.get("anchors", {})
        hazard = frozenset(tuple(c) for c in meta.get("hazard_cells", []))
    return TerrainWorld(width, height, cell_size, cells,
                        drivable_classes=drivable, anchors=anchors, hazard_cells=hazard)
