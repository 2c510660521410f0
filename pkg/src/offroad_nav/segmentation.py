"""Point-prompt mask extraction, IoU merging, area filtering, centroids, tracking."""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .world import SensorPatch


@dataclass
class Mask:
    bitmap: np.ndarray            # bool, shape (height, width)
    area: int = -1

    def __post_init__(self):
        if self.bitmap.dtype != bool:
            self.bitmap = self.bitmap.astype(bool)
        if self.area < 0:
            self.area = int(self.bitmap.sum())

    def bbox(self) -> tuple[int, int, int, int] | None:
        """(y0, y1, x0, x1) half-open bounds of set pixels, None if empty."""
        ys, xs = np.nonzero(self.bitmap)
        if ys.size == 0:
            return None
        return int(ys.min()), int(ys.max()) + 1, int(xs.min()), int(xs.max()) + 1


@dataclass
class PromptGrid:
    points: list[tuple[int, int]]   # (x, y) pixel coords, row-major
    bounds: tuple[int, int]         # (margin_min, margin_max)


@dataclass
class AnnotatedFrame:
    masks: list[Mask]
    centroids: list[tuple[float, float]]   # (x, y) per mask
    indices: list[int]                     # 1-based labels
    source_frame_id: int = 0

    def mask_by_index(self, index: int) -> Mask:
        return self.masks[index - 1]


@dataclass
class TrackState:
    tracked_masks: AnnotatedFrame
    drivable_indices: frozenset[int]
    frames_since_reset: int = 0
    lost: bool = False
    patch_origin: tuple[int, int] = (0, 0)


@dataclass
class SegmentationConfig:
    n_side: int = 8                # 64 prompt points
    margin: int = 2                # pixels kept clear on every edge
    tau_iou: float = 0.5
    area_mode: str = "fraction"    # "absolute" (full-resolution frames) or "fraction"
    tau_area_abs: int = 10000
    tau_area_frac: float = 0.01
    tau_track: float = 0.3
    reset_period: int = 20

    def tau_area(self, patch_height: int, patch_width: int) -> int:
        if self.area_mode == "absolute":
            return self.tau_area_abs
        return int(self.tau_area_frac * patch_height * patch_width)


def generate_prompt_grid(patch_dims: tuple[int, int], n_side: int,
                         margins: int | tuple[int, int]) -> PromptGrid:
    """n_side^2 points uniformly spaced inside the margins, row-major order.

    patch_dims is (height, width); points are (x, y) pixel coordinates.
    """
    if n_side < 1:
        raise ValueError("n_side must be >= 1")
    h, w = patch_dims
    m_min, m_max = (margins, margins) if isinstance(margins, int) else margins
    lo_x, hi_x = m_min, w - 1 - m_max
    lo_y, hi_y = m_min, h - 1 - m_max
    if lo_x > hi_x or lo_y > hi_y:
        raise ValueError("margins leave no interior")
    if n_side == 1:
        xs = [round((lo_x + hi_x) / 2)]
        ys = [round((lo_y + hi_y) / 2)]
    else:
        xs = [round(lo_x + (hi_x - lo_x) * i / (n_side - 1)) for i in range(n_side)]
        ys = [round(lo_y + (hi_y - lo_y) * i / (n_side - 1)) for i in range(n_side)]
    points = [(x, y) for y in ys for x in xs]
    return PromptGrid(points=points, bounds=(m_min, m_max))


def _flood_fill(classes: np.ndarray, x: int, y: int) -> np.ndarray:
    """4-connected component of cells sharing the class at (x, y)."""
    same = classes == classes[y, x]
    comp = np.zeros_like(same)
    frontier = np.zeros_like(same)
    frontier[y, x] = True
    while frontier.any():
        comp |= frontier
        grown = np.zeros_like(same)
        grown[1:, :] |= frontier[:-1, :]
        grown[:-1, :] |= frontier[1:, :]
        grown[:, 1:] |= frontier[:, :-1]
        grown[:, :-1] |= frontier[:, 1:]
        frontier = grown & same & ~comp
    return comp


def extract_masks(patch: SensorPatch, grid: PromptGrid) -> list[Mask]:
    """One mask per prompt point: its 4-connected same-class component.

    Points landing in an already-filled component reuse the computed bitmap
    (the flood fill runs once per component); duplicates are still emitted per
    point and collapse later in the merge step.
    """
    classes = patch.classes
    h, w = classes.shape
    filled = np.full((h, w), -1, dtype=np.int32)
    components: list[np.ndarray] = []
    out: list[Mask] = []
    for x, y in grid.points:
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"prompt point ({x}, {y}) outside patch")
        cid = filled[y, x]
        if cid < 0:
            comp = _flood_fill(classes, x, y)
            cid = len(components)
            components.append(comp)
            filled[comp] = cid
        out.append(Mask(components[cid].copy()))
    return out


def extract_all_components(patch: SensorPatch) -> list[Mask]:
    """Every 4-connected class component in the patch (exhaustive generator analog)."""
    classes = patch.classes
    h, w = classes.shape
    filled = np.full((h, w), -1, dtype=np.int32)
    out: list[Mask] = []
    for y in range(h):
        for x in range(w):
            if filled[y, x] < 0:
                comp = _flood_fill(classes, x, y)
                filled[comp] = len(out)
                out.append(Mask(comp))
    return out


def iou(a: Mask, b: Mask) -> float:
    """|a & b| / |a | b|, zero when both masks are empty."""
    if a.bitmap.shape != b.bitmap.shape:
        raise ValueError("mask dims mismatch")
    union = int(np.count_nonzero(a.bitmap | b.bitmap))
    if union == 0:
        return 0.0
    inter = int(np.count_nonzero(a.bitmap & b.bitmap))
    return inter / union


def _bbox_overlap(a, b) -> bool:
    if a is None or b is None:
        return False
    return a[0] < b[1] and b[0] < a[1] and a[2] < b[3] and b[2] < a[3]


def merge_masks(masks: list[Mask], tau_iou: float) -> list[Mask]:
    """OR-merge any pair with IoU >= tau_iou, restarting until a fixpoint.

    Output keeps first-appearance order; the result is pairwise IoU < tau_iou.
    """
    if not (0.0 < tau_iou <= 1.0):
        raise ValueError("tau_iou must be in (0, 1]")
    # Collapse bit-identical masks first (IoU 1 merges to the same bitmap);
    # point prompting emits one copy per prompt hit, so duplicates are common.
    seen: dict[bytes, None] = {}
    unique: list[Mask] = []
    for m in masks:
        key = m.bitmap.tobytes()
        if key not in seen:
            seen[key] = None
            unique.append(m)
    work = [Mask(m.bitmap.copy(), m.area) for m in unique]
    boxes = [m.bbox() for m in work]
    merged = True
    while merged:
        merged = False
        i = 0
        while i < len(work):
            j = i + 1
            while j < len(work):
                # IoU > 0 needs intersecting bounding boxes; skip the cheap misses.
                if _bbox_overlap(boxes[i], boxes[j]) and iou(work[i], work[j]) >= tau_iou:
                    work[i] = Mask(work[i].bitmap | work[j].bitmap)
                    boxes[i] = work[i].bbox()
                    del work[j], boxes[j]
                    merged = True
                else:
                    j += 1
            i += 1
    return work


def filter_by_area(masks: list[Mask], tau_area: int) -> list[Mask]:
    """Keep masks with area >= tau_area, order preserved."""
    if tau_area < 0:
        raise ValueError("tau_area must be >= 0")
    return [m for m in masks if m.area >= tau_area]


def centroid(mask: Mask) -> tuple[float, float]:
    if mask.area == 0:
        raise ValueError("centroid undefined for empty mask")
    ys, xs = np.nonzero(mask.bitmap)
    return float(xs.sum() / xs.size), float(ys.sum() / ys.size)


def annotate(masks: list[Mask], source_frame_id: int = 0) -> AnnotatedFrame:
    """Assign 1-based labels in list order and compute pixel centroids."""
    cents = [centroid(m) for m in masks]
    return AnnotatedFrame(masks=list(masks), centroids=cents,
                          indices=list(range(1, len(masks) + 1)),
                          source_frame_id=source_frame_id)


def segment_patch(patch: SensorPatch, cfg: SegmentationConfig) -> AnnotatedFrame:
    """Full per-frame pipeline: prompt grid, extract, merge, area filter, annotate."""
    grid = generate_prompt_grid((patch.height, patch.width), cfg.n_side, cfg.margin)
    masks = extract_masks(patch, grid)
    masks = merge_masks(masks, cfg.tau_iou)
    masks = filter_by_area(masks, cfg.tau_area(patch.height, patch.width))
    return annotate(masks, source_frame_id=patch.frame_id)


def _world_aligned_iou(mask_a: Mask, origin_a: tuple[int, int],
                       mask_b: Mask, origin_b: tuple[int, int]) -> float:
    """IoU of two masks positioned at their patch origins in world cells."""
    if origin_a == origin_b and mask_a.bitmap.shape == mask_b.bitmap.shape:
        return iou(mask_a, mask_b)
    ha, wa = mask_a.bitmap.shape
    hb, wb = mask_b.bitmap.shape
    ax0, ay0 = origin_a
    bx0, by0 = origin_b
    x0, x1 = min(ax0, bx0), max(ax0 + wa, bx0 + wb)
    y0, y1 = min(ay0, by0), max(ay0 + ha, by0 + hb)
    a = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    b = np.zeros_like(a)
    a[ay0 - y0:ay0 - y0 + ha, ax0 - x0:ax0 - x0 + wa] = mask_a.bitmap
    b[by0 - y0:by0 - y0 + hb, bx0 - x0:bx0 - x0 + wb] = mask_b.bitmap
    return iou(Mask(a), Mask(b))


def track_masks(prev: TrackState, patch: SensorPatch, cfg: SegmentationConfig) -> TrackState:
    """Re-segment the new patch and associate previous drivable masks by overlap.

    Association requires best IoU >= tau_track for every tracked drivable mask;
    any miss sets lost. The counter wraps every reset_period frames, forcing a
    lost state so the caller re-queries the oracle.
    """
    frame = segment_patch(patch, cfg)
    fsr = prev.frames_since_reset + 1
    forced = fsr >= cfg.reset_period
    if forced:
        fsr = 0
    lost = forced
    new_indices: set[int] = set()
    if not lost:
        for idx in sorted(prev.drivable_indices):
            prev_mask = prev.tracked_masks.mask_by_index(idx)
            best_iou, best_idx = 0.0, None
            for j, m in zip(frame.indices, frame.masks):
                v = _world_aligned_iou(prev_mask, prev.patch_origin, m, patch.origin)
                if v > best_iou:
                    best_iou, best_idx = v, j
            if best_idx is None or best_iou < cfg.tau_track:
                lost = True
                break
            new_indices.add(best_idx)
    return TrackState(tracked_masks=frame,
                      drivable_indices=frozenset() if lost else frozenset(new_indices),
                      frames_since_reset=fsr, lost=lost, patch_origin=patch.origin)


def encode_rle(bitmap: np.ndarray) -> list[int]:
    """Row-major run lengths, alternating zero-run then one-run, starting with zeros."""
    flat = np.asarray(bitmap, dtype=bool).ravel()
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = [0, *changes.tolist(), flat.size]
    runs = [b - a for a, b in zip(bounds[:-1], bounds[1:])]
    if flat[0]:
        runs.insert(0, 0)
    return runs


def decode_rle(runs: list[int], height: int, width: int) -> np.ndarray:
    flat = np.zeros(height * width, dtype=bool)
    pos = 0
    val = False
    for r in runs:
        if val:
            flat[pos:pos + r] = True
        pos += r
        val = not val
    if pos != height * width:
        raise ValueError("RLE length does not match dims")
    return flat.reshape(height, width)


def frame_to_json(patch: SensorPatch, frame: AnnotatedFrame, cell_size: float = 1.0) -> dict:
    return {
        "frame_id": patch.frame_id,
        "width": patch.width,
        "height": patch.height,
        "origin": list(patch.origin),
        "cell_size": cell_size,
        "classes_b64": base64.b64encode(patch.classes.tobytes()).decode("ascii"),
        "masks": [
            {"index": i, "area": m.area, "centroid": [cx, cy], "rle": encode_rle(m.bitmap)}
            for i, m, (cx, cy) in zip(frame.indices, frame.masks, frame.centroids)
        ],
    }


def frame_from_json(data: dict) -> tuple[SensorPatch, AnnotatedFrame]:
    h, w = data["height"], data["width"]
    classes = np.frombuffer(base64.b64decode(data["classes_b64"]), dtype=np.uint8).reshape(h, w).copy()
    patch = SensorPatch(origin=tuple(data["origin"]), width=w, height=h,
                        classes=classes, frame_id=data["frame_id"])
    masks = [Mask(decode_rle(m["rle"], h, w), m["area"]) for m in data["masks"]]
    frame = AnnotatedFrame(masks=masks,
                           centroids=[tuple(m["centroid"]) for m in data["masks"]],
                           indices=[m["index"] for m in data["masks"]],
                           source_frame_id=data["frame_id"])
    return patch, frame


def save_frame(directory: str | Path, patch: SensorPatch, frame: AnnotatedFrame,
               cell_size: float = 1.0, write_pngs: bool = True) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"frame_{patch.frame_id:06d}.json"
    path.write_text(json.dumps(frame_to_json(patch, frame, cell_size), sort_keys=True))
    if write_pngs:
        from .render import render_annotated, render_classes, save_png
        stem = f"frame_{patch.frame_id:06d}"
        save_png(render_classes(patch.classes, 8), directory / f"{stem}_original.png")
        save_png(render_annotated(patch.classes, frame, 8), directory / f"{stem}_annotated.png")
    return path


def load_frame(directory: str | Path, frame_id: int) -> tuple[SensorPatch, AnnotatedFrame, float]:
    path = Path(directory) / f"frame_{frame_id:06d}.json"
    data = json.loads(path.read_text())
    patch, frame = frame_from_json(data)
    return patch, frame, float(data.get("cell_size", 1.0))


def list_frames(directory: str | Path) -> list[int]:
    ids = []
    for p in Path(directory).glob("frame_*.json"):
        try:
            ids.append(int(p.stem.split("_")[1]))
        except (IndexError, ValueError):
            continue
    return sorted(ids)
