"""Deterministic raster rendering for frames, grids, and run logs."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .mapping import FREE, OCCUPIED, UNKNOWN, OccupancyGrid
from .segmentation import AnnotatedFrame
from .world import CLASS_TO_BYTE, TerrainClass, TerrainWorld

CLASS_COLORS = {
    TerrainClass.DIRT: (148, 104, 60),
    TerrainClass.SAND: (220, 200, 140),
    TerrainClass.ASPHALT: (90, 90, 95),
    TerrainClass.GRAVEL: (150, 145, 135),
    TerrainClass.MULCH: (120, 80, 40),
    TerrainClass.CONCRETE: (180, 180, 175),
    TerrainClass.ROCKBED: (130, 120, 110),
    TerrainClass.PATCHY_GRASS: (130, 170, 80),
    TerrainClass.DENSE_GRASS: (40, 120, 40),
    TerrainClass.ROCKS: (105, 100, 95),
    TerrainClass.WATER: (50, 90, 180),
    TerrainClass.OBSTACLE: (25, 25, 25),
}
_PALETTE = np.zeros((256, 3), dtype=np.uint8)
for _cls, _rgb in CLASS_COLORS.items():
    _PALETTE[CLASS_TO_BYTE[_cls]] = _rgb

MASK_TINTS = [
    (255, 80, 80), (80, 255, 80), (80, 120, 255), (255, 255, 80),
    (255, 80, 255), (80, 255, 255), (255, 160, 60), (160, 60, 255),
    (120, 255, 160), (255, 120, 160), (160, 255, 60), (60, 160, 255),
]

GRID_COLORS = {FREE: (235, 235, 235), OCCUPIED: (30, 30, 30), UNKNOWN: (140, 140, 160)}


def render_classes(classes: np.ndarray, scale: int = 1) -> np.ndarray:
    """RGB render of a class-code grid, upscaled by integer factor."""
    img = _PALETTE[classes]
    if scale > 1:
        img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    return img


def render_annotated(classes: np.ndarray, frame: AnnotatedFrame, scale: int = 8) -> np.ndarray:
    """Terrain render with translucent mask tints and numeric labels at centroids."""
    base = render_classes(classes, scale).astype(np.float32)
    for i, mask in enumerate(frame.masks):
        tint = np.array(MASK_TINTS[i % len(MASK_TINTS)], dtype=np.float32)
        up = np.repeat(np.repeat(mask.bitmap, scale, axis=0), scale, axis=1)
        base[up] = 0.55 * base[up] + 0.45 * tint
    img = Image.fromarray(base.astype(np.uint8))
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    for idx, (cx, cy) in zip(frame.indices, frame.centroids):
        text = str(idx)
        px, py = (cx + 0.5) * scale, (cy + 0.5) * scale
        tw = draw.textlength(text, font=font)
        draw.text((px - tw / 2 + 1, py - 4 + 1), text, fill=(0, 0, 0), font=font)
        draw.text((px - tw / 2, py - 4), text, fill=(255, 255, 255), font=font)
    return np.asarray(img)


def render_occupancy(grid: OccupancyGrid, scale: int = 1) -> np.ndarray:
    lut = np.zeros((256, 3), dtype=np.uint8)
    for state, rgb in GRID_COLORS.items():
        lut[state] = rgb
    img = lut[grid.cells.T]            # cells is (n_x, n_y); render as (row=y, col=x)
    if scale > 1:
        img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    return img


def to_png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(to_png_bytes(img))


KNOWN_LAYERS = ("terrain", "masks", "occupancy", "global_path", "trajectory", "trace")


def render_run(world: TerrainWorld, layers: list[str], scale: int = 8,
               frame: AnnotatedFrame | None = None,
               grid: OccupancyGrid | None = None,
               global_path: list[tuple[int, int]] | None = None,
               trajectory_xy: list[tuple[float, float]] | None = None,
               trace_xy: list[tuple[float, float]] | None = None) -> np.ndarray:
    """Composable world-view render; layers stack in the order given."""
    for layer in layers:
        if layer not in KNOWN_LAYERS:
            raise ValueError(f"unknown layer {layer!r}")
    img = np.full((world.height * scale, world.width * scale, 3), 255, dtype=np.uint8)
    if "terrain" in layers:
        img = render_classes(world.cells, scale)
    if "occupancy" in layers and grid is not None:
        occ = render_occupancy(grid)
        occ = np.array(Image.fromarray(occ).resize((world.width * scale, world.height * scale),
                                                   Image.NEAREST))
        img = (0.5 * img + 0.5 * occ).astype(np.uint8)
    if "masks" in layers and frame is not None:
        img = render_annotated(world.cells, frame, scale)
    pil = Image.fromarray(img)
    draw = ImageDraw.Draw(pil)

    def world_to_px(x: float, y: float) -> tuple[float, float]:
        return x / world.cell_size * scale, y / world.cell_size * scale

    if "global_path" in layers and global_path:
        pts = [((cx + 0.5) * scale, (cy + 0.5) * scale) for cx, cy in global_path]
        draw.line(pts, fill=(20, 60, 220), width=max(1, scale // 4))
    if "trajectory" in layers and trajectory_xy:
        pts = [world_to_px(x, y) for x, y in trajectory_xy]
        draw.line(pts, fill=(220, 60, 20), width=max(1, scale // 4))
    if "trace" in layers and trace_xy:
        pts = [world_to_px(x, y) for x, y in trace_xy]
        if len(pts) >= 2:
            draw.line(pts, fill=(10, 150, 10), width=max(1, scale // 3))
        for px, py in (pts[0], pts[-1]):
            r = max(2, scale // 2)
            draw.ellipse((px - r, py - r, px + r, py + r), outline=(10, 150, 10))
    return np.asarray(pil)
