"""Scenario configs, the closed-loop runner, and the benchmark suites."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import planning
from .control import ControllerGains, TrackingState, step_controller
from .drivability import (
    ExternalOracle,
    GroundTruthOracle,
    NoDrivableSelection,
    NoisyOracle,
    OracleResponse,
    PromptSpec,
    iou_eval,
    mask_majority_class,
    parse_response,
    render_query,
    score_selection,
    select_masks,
)
from .mapping import OccupancyGrid, label_points, update_grid
from .segmentation import (
    AnnotatedFrame,
    SegmentationConfig,
    TrackState,
    extract_all_components,
    extract_masks,
    filter_by_area,
    generate_prompt_grid,
    merge_masks,
    save_frame,
    segment_patch,
    track_masks,
)
from .world import (
    ControlCommand,
    TerrainClass,
    TerrainWorld,
    VehicleParams,
    VehiclePose,
    WorldGenSpec,
    capture_patch,
    generate_world,
    load_world,
    step_vehicle,
)

OUTCOMES = ("success", "timeout", "stuck", "no_path")


@dataclass
class ScenarioConfig:
    # world: either a file or seed + generation spec
    world_file: str | None = None
    world_seed: int = 7
    world: WorldGenSpec = field(default_factory=WorldGenSpec)
    start_cell: tuple[int, int] | None = None        # defaults to world anchors
    goal_cell: tuple[int, int] | None = None
    goals: list[tuple[str, tuple[int, int]]] | None = None   # reachability suite
    start_theta: float | None = None                 # None -> face the goal

    # oracle
    oracle: str = "gt"                               # gt | noisy | extern
    p_fp: float = 0.0
    p_fn: float = 0.0
    fallback_oracle: str = "gt"                      # gt | noisy | none
    oracle_cmd: list[str] | None = None
    oracle_url: str | None = None

    prompt: PromptSpec = field(default_factory=PromptSpec)
    seg: SegmentationConfig = field(default_factory=lambda: SegmentationConfig(n_side=8, margin=1))
    coverage_threshold: float = 0.5

    # mapping + planning
    grid_s: float = 1.0
    unknown_global_free: bool = True
    unknown_local_occupied: bool = True
    window_radius_cells: float = 12.0
    theta_bins: int = 72
    arc_length_cells: float = 1.5
    expansion_budget: int = 50000
    inflation_cells: int = 1      # vehicle half-width in grid cells
    local_replan_period: int = 10
    goal_tolerance_cells: float = 2.0

    # control + vehicle
    gains: ControllerGains = field(default_factory=ControllerGains)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    v_ref: float = 2.5

    # run
    dt: float = 0.05
    step_budget: int = 2000
    repetitions: int = 5
    sensor_window: int = 32
    stuck_window: int = 200
    stuck_eps: float = 0.1
    seed: int = 0
    render_scale: int = 4
    export_frames: str | None = None


@dataclass
class RunLog:
    records: list[dict]
    outcome: str
    elapsed_steps: int
    oracle_queries: int
    reason: str = ""

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as f:
            for rec in self.records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")

    def summary_row(self) -> dict:
        last = self.records[-1] if self.records else {}
        return {
            "outcome": self.outcome,
            "elapsed_steps": self.elapsed_steps,
            "oracle_queries": self.oracle_queries,
            "reason": self.reason,
            "final_x": last.get("x"),
            "final_y": last.get("y"),
        }


@dataclass
class ReachabilityReport:
    per_goal: list[dict]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["goal", "success_rate", "avg_steps",
                                                   "avg_time_s", "outcomes"])
            writer.writeheader()
            for row in self.per_goal:
                writer.writerow({**row, "outcomes": " ".join(row["outcomes"])})


def make_oracle(kind: str, config: ScenarioConfig, seed: int):
    if kind == "gt":
        return GroundTruthOracle()
    if kind == "noisy":
        return NoisyOracle(config.p_fp, config.p_fn, seed)
    if kind == "extern":
        return ExternalOracle(cmd=config.oracle_cmd, url=config.oracle_url)
    if kind == "none":
        return None
    raise ValueError(f"unknown oracle kind {kind!r}")


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Read the YAML scenario file (schema documented in the README)."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    kwargs = dict(data)
    if "world" in kwargs and isinstance(kwargs["world"], dict):
        wspec = dict(kwargs["world"])
        if "corridor_class" in wspec:
            wspec["corridor_class"] = TerrainClass(wspec["corridor_class"])
        if "background_classes" in wspec:
            wspec["background_classes"] = tuple(TerrainClass(c) for c in wspec["background_classes"])
        if "drivable_classes" in wspec:
            wspec["drivable_classes"] = frozenset(TerrainClass(c) for c in wspec["drivable_classes"])
        kwargs["world"] = WorldGenSpec(**wspec)
    if "prompt" in kwargs and isinstance(kwargs["prompt"], dict):
        pspec = dict(kwargs["prompt"])
        if "drivable_classes" in pspec:
            pspec["drivable_classes"] = tuple(TerrainClass(c) for c in pspec["drivable_classes"])
        kwargs["prompt"] = PromptSpec(**pspec)
    if "seg" in kwargs and isinstance(kwargs["seg"], dict):
        kwargs["seg"] = SegmentationConfig(**kwargs["seg"])
    if "gains" in kwargs and isinstance(kwargs["gains"], dict):
        kwargs["gains"] = ControllerGains(**kwargs["gains"])
    if "vehicle" in kwargs and isinstance(kwargs["vehicle"], dict):
        kwargs["vehicle"] = VehicleParams(**kwargs["vehicle"])
    for key in ("start_cell", "goal_cell"):
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(kwargs[key])
    if kwargs.get("goals"):
        kwargs["goals"] = [(name, tuple(cell)) for name, cell in kwargs["goals"]]
    return ScenarioConfig(**kwargs)


def _resolve_world(config: ScenarioConfig) -> TerrainWorld:
    if config.world_file:
        return load_world(config.world_file)
    return generate_world(config.world_seed, config.world)


def _drivable_indices_for(frame: AnnotatedFrame, patch, spec: PromptSpec) -> list[int]:
    drivable = set(spec.drivable_classes)
    return [i for i, m in zip(frame.indices, frame.masks)
            if mask_majority_class(m, patch) in drivable]


class _OracleChain:
    """Primary oracle plus a single contingency retry, counting every query."""

    def __init__(self, config: ScenarioConfig, world: TerrainWorld, seed: int):
        self.config = config
        self.world = world
        self.primary = make_oracle(config.oracle, config, seed)
        self.fallback = make_oracle(config.fallback_oracle, config, seed + 1)
        self.queries = 0

    def select(self, frame: AnnotatedFrame, patch) -> list[int] | None:
        query = render_query(frame, patch, self.config.prompt, scale=self.config.render_scale)
        for oracle in (self.primary, self.fallback):
            if oracle is None:
                continue
            self.queries += 1
            try:
                resp = oracle.query(query, self.world, patch)
                parsed = parse_response(resp.raw_text, frame, self.config.prompt.cardinality)
                return parsed.indices
            except NoDrivableSelection:
                continue
        return None


def run_scenario(config: ScenarioConfig, seed: int | None = None,
                 world: TerrainWorld | None = None) -> RunLog:
    """Closed loop: sense -> segment -> (track|query) -> map -> plan -> control -> step."""
    seed = config.seed if seed is None else seed
    if world is None:
        world = _resolve_world(config)
    start_cell = tuple(config.start_cell or world.anchors.get("start") or (1, 1))
    goal_cell = tuple(config.goal_cell or world.anchors.get("goal") or
                      (world.width - 2, world.height - 2))
    sx, sy = world.cell_center(*start_cell)
    gx, gy = world.cell_center(*goal_cell)
    theta0 = config.start_theta
    if theta0 is None:
        theta0 = math.atan2(gy - sy, gx - sx)
    pose = VehiclePose(sx, sy, theta0, 0.0)

    grid = OccupancyGrid.for_world(world, config.grid_s)
    goal_grid = grid.cell_of(gx, gy)
    goal_tol = config.goal_tolerance_cells * config.grid_s
    oracle = _OracleChain(config, world, seed)

    track: TrackState | None = None
    dstar = None
    prev_view = None
    global_path = None
    trajectory = None
    tracking = TrackingState()
    records: list[dict] = []
    outcome, reason = "timeout", ""
    elapsed = config.step_budget
    pose_history: list[tuple[float, float]] = []
    exported = 0

    for t in range(config.step_budget):
        if math.hypot(pose.x - gx, pose.y - gy) <= goal_tol:
            outcome, elapsed = "success", t
            break
        if not world.contains_point(pose.x, pose.y):
            outcome, elapsed, reason = "stuck", t, "out_of_bounds"
            break

        frame_id = t + 1
        patch = capture_patch(world, pose, config.sensor_window, frame_id=frame_id)

        queried = False
        if track is None:
            frame = segment_patch(patch, config.seg)
            indices = oracle.select(frame, patch)
            queried = True
            track = TrackState(frame, frozenset(indices or []), 0,
                               lost=indices is None, patch_origin=patch.origin)
        else:
            track = track_masks(track, patch, config.seg)
            if track.lost:
                indices = oracle.select(track.tracked_masks, patch)
                queried = True
                track = TrackState(track.tracked_masks, frozenset(indices or []), 0,
                                   lost=indices is None, patch_origin=patch.origin)
        if queried and config.export_frames and not track.lost:
            save_frame(config.export_frames, patch, track.tracked_masks, world.cell_size)
            exported += 1

        have_selection = not track.lost and track.drivable_indices
        changes = []
        if have_selection:
            dmask = select_masks(track.tracked_masks,
                                 OracleResponse("", sorted(track.drivable_indices)))
            pts = label_points(patch, dmask.bitmap, world.cell_size)
            update_grid(grid, pts, frame_id)

        ego_cell = grid.cell_of(pose.x, pose.y)
        view = grid.planner_view(unknown_as_free=config.unknown_global_free,
                                 force_free=(ego_cell,))
        if prev_view is not None:
            diff = np.argwhere(view != prev_view)
            changes = [((int(cx), int(cy)), bool(view[cx, cy])) for cx, cy in diff]
        prev_view = view

        if dstar is None and have_selection:
            try:
                dstar = planning.dstar_init(view, ego_cell, goal_grid)
            except planning.InitError:
                outcome, elapsed, reason = "no_path", 0, "initial plan failed"
                break
        elif dstar is not None:
            planning.dstar_update(dstar, changes, ego_cell)

        # The D* repair stays lazy; the path is only extracted when the local
        # planner actually needs a fresh goal.
        need_local = dstar is not None and (trajectory is None
                                            or t % config.local_replan_period == 0)
        if need_local:
            global_path = planning.dstar_compute(dstar)
            if t == 0 and global_path is None:
                outcome, elapsed, reason = "no_path", 0, "initial plan failed"
                break
            if global_path:
                local_view = grid.planner_view(unknown_as_free=not config.unknown_local_occupied,
                                               force_free=(ego_cell,))
                local_goal = planning.select_local_goal(
                    global_path, pose, config.window_radius_cells * config.grid_s, config.grid_s)
                new_traj = planning.hybrid_astar(
                    local_view, config.grid_s, pose, local_goal, config.vehicle,
                    theta_bins=config.theta_bins, arc_length_cells=config.arc_length_cells,
                    budget=config.expansion_budget,
                    window_radius_cells=config.window_radius_cells * 1.5,
                    inflation_cells=config.inflation_cells)
                if new_traj is not None and len(new_traj.poses) >= 2:
                    trajectory = new_traj

        if trajectory is not None and len(trajectory.poses) >= 2:
            cmd, tracking = step_controller(pose, trajectory, config.v_ref, tracking,
                                            config.gains, config.vehicle, config.dt)
        else:
            cmd = ControlCommand(0.0, config.vehicle.accel_min)

        pose = step_vehicle(pose, cmd, config.dt, config.vehicle)
        pose_history.append((pose.x, pose.y))
        wc = world.cell_of(pose.x, pose.y) if world.contains_point(pose.x, pose.y) else None

        records.append({
            "step": t, "x": pose.x, "y": pose.y, "theta": pose.theta, "v": pose.v,
            "delta": cmd.delta, "accel": cmd.accel, "cte": tracking.cte,
            "cell": list(wc) if wc else None, "grid_frame_id": frame_id,
            "oracle_query": queried, "lost": track.lost,
            "replan_changes": len(changes),
        })

        if wc is not None and tuple(wc) in world.hazard_cells:
            outcome, elapsed, reason = "stuck", t + 1, "hazard"
            break
        if t + 1 >= config.stuck_window:
            ox, oy = pose_history[t + 1 - config.stuck_window]
            if math.hypot(pose.x - ox, pose.y - oy) <= config.stuck_eps:
                outcome, elapsed, reason = "stuck", t + 1, "no progress"
                break
    else:
        if math.hypot(pose.x - gx, pose.y - gy) <= goal_tol:
            outcome, elapsed = "success", config.step_budget

    return RunLog(records=records, outcome=outcome, elapsed_steps=elapsed,
                  oracle_queries=oracle.queries, reason=reason)


def reachability_suite(config: ScenarioConfig) -> ReachabilityReport:
    """Repeat each (start, goal) pair and aggregate success rate and mean steps."""
    world = _resolve_world(config)
    goals = config.goals
    if not goals:
        goal = tuple(config.goal_cell or world.anchors.get("goal"))
        goals = [("goal", goal)]
    per_goal = []
    for name, goal in goals:
        outcomes, steps = [], []
        for rep in range(config.repetitions):
            cfg = replace(config, goal_cell=tuple(goal))
            log = run_scenario(cfg, seed=config.seed + rep, world=world)
            outcomes.append(log.outcome)
            if log.outcome == "success":
                steps.append(log.elapsed_steps)
        rate = sum(o == "success" for o in outcomes) / len(outcomes)
        avg_steps = float(np.mean(steps)) if steps else None
        per_goal.append({
            "goal": name, "success_rate": rate, "avg_steps": avg_steps,
            "avg_time_s": None if avg_steps is None else avg_steps * config.dt,
            "outcomes": outcomes,
        })
    return ReachabilityReport(per_goal=per_goal)


def _point_pipeline(patch, cfg: SegmentationConfig):
    grid = generate_prompt_grid((patch.height, patch.width), cfg.n_side, cfg.margin)
    masks = extract_masks(patch, grid)
    masks = merge_masks(masks, cfg.tau_iou)
    return filter_by_area(masks, cfg.tau_area(patch.height, patch.width))


def _full_pipeline(patch, cfg: SegmentationConfig):
    masks = extract_all_components(patch)
    masks = merge_masks(masks, cfg.tau_iou)
    return filter_by_area(masks, cfg.tau_area(patch.height, patch.width))


def timing_compare(patches, cfg: SegmentationConfig | None = None,
                   methods: tuple[str, str] = ("point", "full"), repeats: int = 3) -> list[dict]:
    """Wall-clock per frame for point prompting vs exhaustive extraction."""
    cfg = cfg or SegmentationConfig(n_side=8, margin=1)
    table = {"point": _point_pipeline, "full": _full_pipeline}
    rows = []
    for patch in patches:
        row = {"frame_id": patch.frame_id,
               "n_components": len(extract_all_components(patch))}
        for method in methods:
            fn = table[method]
            best = math.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                fn(patch, cfg)
                best = min(best, time.perf_counter() - t0)
            row[f"t_{method}"] = best
        row["ratio"] = row[f"t_{methods[0]}"] / row[f"t_{methods[1]}"]
        rows.append(row)
    return rows


def generate_frame_set(seed: int, count: int, seg_cfg: SegmentationConfig | None = None,
                       world_spec: WorldGenSpec | None = None, out_dir: str | None = None,
                       window: int = 32):
    """Synthetic mixed-terrain frames for evaluation, labeling, and timing.

    Frames must contain at least one drivable and one non-drivable mask; the
    rubric's all-indices rule makes single-sided frames unscorable, so those
    are regenerated rather than emitted.
    """
    seg_cfg = seg_cfg or SegmentationConfig(n_side=4, margin=1)
    world_spec = world_spec or WorldGenSpec(
        layout="blobs", n_blobs=25,
        background_classes=(
            TerrainClass.DIRT, TerrainClass.DENSE_GRASS, TerrainClass.ROCKS,
            TerrainClass.SAND, TerrainClass.WATER, TerrainClass.GRAVEL,
            TerrainClass.OBSTACLE, TerrainClass.PATCHY_GRASS,
        ))
    out = []
    attempt = 0
    while len(out) < count and attempt < count * 20:
        i = attempt
        attempt += 1
        w = generate_world(int(np.random.default_rng((seed, i)).integers(0, 2**31)), world_spec)
        pose = VehiclePose(w.width * w.cell_size / 2, w.height * w.cell_size / 2, 0.0)
        patch = capture_patch(w, pose, window, frame_id=len(out) + 1)
        frame = segment_patch(patch, seg_cfg)
        if not frame.masks:
            continue
        drivable = [mask_majority_class(m, patch) in w.drivable_classes for m in frame.masks]
        if not (any(drivable) and not all(drivable)):
            continue
        out.append((patch, frame, w))
        if out_dir:
            save_frame(out_dir, patch, frame, w.cell_size)
    return out


def eval_suite(frames, oracle, prompt_spec: PromptSpec,
               coverage_threshold: float = 0.5, labels: dict[int, np.ndarray] | None = None,
               csv_path: str | None = None) -> dict:
    """Per-frame IoU + rubric score against class-derived or labeled ground truth."""
    per_frame = []
    missing = []
    for item in frames:
        patch, frame = item[0], item[1]
        world = item[2] if len(item) > 2 and isinstance(item[2], TerrainWorld) else None
        gt_indices = _drivable_indices_for(frame, patch, prompt_spec)
        if labels is not None:
            if patch.frame_id not in labels:
                missing.append(patch.frame_id)
                continue
            truth = labels[patch.frame_id]
        else:
            truth = select_masks(frame, OracleResponse("", gt_indices)).bitmap
        query = render_query(frame, patch, prompt_spec, scale=2)
        try:
            resp = oracle.query(query, world, patch)
            parsed = parse_response(resp.raw_text, frame, prompt_spec.cardinality)
        except NoDrivableSelection:
            parsed = OracleResponse("", [])
        predicted = select_masks(frame, parsed).bitmap
        has_truth = bool(np.count_nonzero(truth))
        per_frame.append({
            "frame_id": patch.frame_id,
            "iou": iou_eval(predicted, truth) if has_truth else None,
            "rubric": score_selection(frame, parsed, gt_indices, coverage_threshold),
            "selected": parsed.indices,
            "gt_indices": gt_indices,
        })
    ious = [r["iou"] for r in per_frame if r["iou"] is not None]
    result = {
        "per_frame": per_frame,
        "miou": float(np.mean(ious)) if ious else None,
        "mean_rubric": float(np.mean([r["rubric"] for r in per_frame])) if per_frame else None,
        "missing_labels": missing,
    }
    if csv_path:
        with open(csv_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["frame_id", "iou", "rubric",
                                                   "selected", "gt_indices"])
            writer.writeheader()
            for row in per_frame:
                writer.writerow({**row,
                                 "selected": " ".join(map(str, row["selected"])),
                                 "gt_indices": " ".join(map(str, row["gt_indices"]))})
    return result
