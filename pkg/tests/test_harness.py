import json
import math

import numpy as np
import pytest

from offroad_nav.drivability import OracleResponse, PromptSpec
from offroad_nav.harness import (
    ScenarioConfig,
    eval_suite,
    generate_frame_set,
    load_scenario,
    reachability_suite,
    run_scenario,
    scenario_from_dict,
    timing_compare,
)
from offroad_nav.segmentation import SegmentationConfig
from offroad_nav.world import (
    CLASS_TO_BYTE,
    TerrainClass,
    TerrainWorld,
    WorldGenSpec,
    generate_world,
)

from .oracles import bfs_drivable_connected

CORRIDOR = ScenarioConfig(world=WorldGenSpec(corridor_width=5), world_seed=7,
                          step_budget=1200, v_ref=2.5)


@pytest.fixture(scope="module")
def corridor_log():
    return run_scenario(CORRIDOR, seed=0)


def test_corridor_run_succeeds(corridor_log):
    world = generate_world(7, WorldGenSpec(corridor_width=5))
    assert bfs_drivable_connected(world, tuple(world.anchors["start"]),
                                  tuple(world.anchors["goal"]))
    assert corridor_log.outcome == "success"


def test_success_final_pose_within_tolerance(corridor_log):
    world = generate_world(7, WorldGenSpec(corridor_width=5))
    gx, gy = world.cell_center(*world.anchors["goal"])
    last = corridor_log.records[-1]
    assert math.hypot(last["x"] - gx, last["y"] - gy) <= \
        CORRIDOR.goal_tolerance_cells * CORRIDOR.grid_s + 1e-9


def test_success_traverses_only_drivable_cells(corridor_log):
    world = generate_world(7, WorldGenSpec(corridor_width=5))
    drivable = world.drivable_mask()
    for rec in corridor_log.records:
        cx, cy = rec["cell"]
        assert drivable[cy, cx], f"non-drivable cell {(cx, cy)} at step {rec['step']}"


def test_run_is_deterministic(tmp_path):
    cfg = ScenarioConfig(world=WorldGenSpec(corridor_width=5), world_seed=7,
                         step_budget=300, v_ref=2.5)
    a = run_scenario(cfg, seed=3)
    b = run_scenario(cfg, seed=3)
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    a.write_jsonl(pa)
    b.write_jsonl(pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_noisy_run_is_deterministic(tmp_path):
    cfg = ScenarioConfig(world=WorldGenSpec(layout="hazard_u", corridor_width=5),
                         world_seed=3, step_budget=300, oracle="noisy", p_fp=0.2,
                         fallback_oracle="none")
    a = run_scenario(cfg, seed=5)
    b = run_scenario(cfg, seed=5)
    assert a.outcome == b.outcome
    assert json.dumps(a.records, sort_keys=True) == json.dumps(b.records, sort_keys=True)


def test_oracle_query_economy():
    cfg = ScenarioConfig(world=WorldGenSpec(corridor_width=5), world_seed=7,
                         step_budget=100, v_ref=2.5)
    log = run_scenario(cfg, seed=0)
    assert log.oracle_queries <= math.ceil(100 / 20) + 1


def _enclosed_world():
    """Drivable pocket sealed by an obstacle ring, all inside the sensor patch."""
    cells = np.full((64, 64), CLASS_TO_BYTE[TerrainClass.OBSTACLE], dtype=np.uint8)
    cells[12:19, 12:19] = CLASS_TO_BYTE[TerrainClass.DIRT]
    return TerrainWorld(64, 64, 1.0, cells,
                        anchors={"start": [15, 15], "goal": [50, 50]})


def test_enclosed_start_is_no_path():
    cfg = ScenarioConfig(step_budget=50)
    log = run_scenario(cfg, seed=0, world=_enclosed_world())
    assert log.outcome == "no_path"
    assert log.elapsed_steps == 0


def test_full_dropout_never_moves_times_out():
    cfg = ScenarioConfig(world=WorldGenSpec(corridor_width=5), world_seed=7,
                         step_budget=120, oracle="noisy", p_fn=0.999999,
                         fallback_oracle="none")
    log = run_scenario(cfg, seed=0)
    assert log.outcome == "timeout"
    first, last = log.records[0], log.records[-1]
    assert math.hypot(last["x"] - first["x"], last["y"] - first["y"]) < 1e-6
    assert last["v"] == 0.0


def test_hazard_entry_terminates_run():
    cfg = ScenarioConfig(world=WorldGenSpec(layout="hazard_u", corridor_width=5),
                         world_seed=3, step_budget=2500, oracle="noisy", p_fp=0.5,
                         fallback_oracle="none")
    # with heavy false positives the bridge shortcut is taken almost immediately
    log = run_scenario(cfg, seed=1)
    assert log.outcome in ("stuck", "timeout")


def test_reachability_aggregation():
    cfg = ScenarioConfig(world=WorldGenSpec(corridor_width=5), world_seed=7,
                         step_budget=1200, v_ref=2.5, repetitions=2)
    report = reachability_suite(cfg)
    row = report.per_goal[0]
    assert row["success_rate"] == 1.0
    assert row["avg_steps"] > 0
    assert row["avg_time_s"] == pytest.approx(row["avg_steps"] * cfg.dt)
    assert len(row["outcomes"]) == 2


def test_reachability_infeasible_goal():
    world = generate_world(7, WorldGenSpec(corridor_width=5))
    # a goal cell in untraversable terrain can never be reached
    drivable = world.drivable_mask()
    bad = None
    for y in range(60, 0, -1):
        for x in range(60, 0, -1):
            if not drivable[y, x]:
                bad = (x, y)
                break
        if bad:
            break
    cfg = ScenarioConfig(world=WorldGenSpec(corridor_width=5), world_seed=7,
                         step_budget=400, repetitions=2,
                         goals=[("bad", bad)])
    report = reachability_suite(cfg)
    assert report.per_goal[0]["success_rate"] == 0.0


# ----------------------------------------------------------------- eval suite

@pytest.fixture(scope="module")
def frame_set():
    return generate_frame_set(42, 30)


def test_eval_perfect_oracle(frame_set):
    from offroad_nav.drivability import GroundTruthOracle
    result = eval_suite(frame_set, GroundTruthOracle(), PromptSpec())
    assert result["miou"] == 1.0
    assert all(r["rubric"] == 1.0 for r in result["per_frame"])


def test_eval_all_indices_responder_scores_zero(frame_set):
    class AllIndices:
        def query(self, query, world, patch):
            return OracleResponse(", ".join(map(str, query.frame.indices)),
                                  list(query.frame.indices))

    result = eval_suite(frame_set, AllIndices(), PromptSpec())
    assert all(r["rubric"] == 0.0 for r in result["per_frame"])


def test_eval_noise_sweep_strictly_decreasing(frame_set):
    from offroad_nav.drivability import NoisyOracle
    mious = []
    for level in (0.0, 0.1, 0.2):
        oracle = NoisyOracle(p_fp=level, p_fn=level, seed=17)
        mious.append(eval_suite(frame_set, oracle, PromptSpec())["miou"])
    assert mious[0] > mious[1] > mious[2]


def test_eval_missing_labels_reported(frame_set):
    from offroad_nav.drivability import GroundTruthOracle
    patch, frame, _ = frame_set[0]
    labels = {patch.frame_id: np.zeros((patch.height, patch.width), bool)}
    result = eval_suite(frame_set[:2], GroundTruthOracle(), PromptSpec(), labels=labels)
    assert result["missing_labels"] == [frame_set[1][0].frame_id]


def test_eval_csv_export(frame_set, tmp_path):
    from offroad_nav.drivability import GroundTruthOracle
    out = tmp_path / "eval.csv"
    eval_suite(frame_set[:5], GroundTruthOracle(), PromptSpec(), csv_path=str(out))
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("frame_id,")
    assert len(lines) == 6


# -------------------------------------------------------------------- timing

def fragmented_frames(seed=42, count=4):
    """Many-component frames: the Table 1 point-vs-generator analog set."""
    spec = WorldGenSpec(layout="blobs", n_blobs=150, background_classes=(
        TerrainClass.DIRT, TerrainClass.DENSE_GRASS, TerrainClass.ROCKS,
        TerrainClass.SAND, TerrainClass.WATER, TerrainClass.GRAVEL,
        TerrainClass.OBSTACLE, TerrainClass.PATCHY_GRASS))
    return generate_frame_set(seed, count, world_spec=spec)


def test_timing_point_faster_on_multicomponent_frames():
    patches = [f[0] for f in fragmented_frames()]
    rows = timing_compare(patches, SegmentationConfig(n_side=8, margin=1))
    assert all(row["n_components"] > 10 for row in rows)
    mean_ratio = sum(r["ratio"] for r in rows) / len(rows)
    assert mean_ratio < 1.0


def test_timing_single_class_frame_runs():
    from offroad_nav.world import SensorPatch
    patch = SensorPatch(origin=(0, 0), width=24, height=24,
                        classes=np.zeros((24, 24), dtype=np.uint8), frame_id=1)
    rows = timing_compare([patch], SegmentationConfig(n_side=4, margin=1))
    assert rows[0]["n_components"] == 1


# -------------------------------------------------------------- configuration

def test_scenario_yaml_roundtrip(tmp_path):
    text = """
world_seed: 9
world:
  layout: corridor
  corridor_width: 5
  drivable_classes: [dirt, gravel]
oracle: noisy
p_fp: 0.25
prompt:
  cardinality: SNP
  style: specific
  drivable_classes: [dirt]
seg:
  n_side: 6
gains:
  k: 2.0
vehicle:
  wheelbase: 2.0
goal_cell: [50, 40]
"""
    path = tmp_path / "cfg.yaml"
    path.write_text(text)
    cfg = load_scenario(path)
    assert cfg.world_seed == 9
    assert cfg.world.drivable_classes == frozenset({TerrainClass.DIRT, TerrainClass.GRAVEL})
    assert cfg.oracle == "noisy" and cfg.p_fp == 0.25
    assert cfg.prompt.cardinality == "SNP"
    assert cfg.seg.n_side == 6
    assert cfg.gains.k == 2.0
    assert cfg.vehicle.wheelbase == 2.0
    assert cfg.goal_cell == (50, 40)


def test_scenario_rejects_unknown_field():
    with pytest.raises(TypeError):
        scenario_from_dict({"not_a_field": 1})


def test_frame_export_during_run(tmp_path):
    cfg = ScenarioConfig(world=WorldGenSpec(corridor_width=5), world_seed=7,
                         step_budget=60, export_frames=str(tmp_path / "frames"))
    run_scenario(cfg, seed=0)
    from offroad_nav.segmentation import list_frames
    assert len(list_frames(tmp_path / "frames")) >= 1


def test_generate_frame_set_deterministic():
    a = generate_frame_set(42, 5)
    b = generate_frame_set(42, 5)
    assert len(a) == len(b)
    for (pa, fa, _), (pb, fb, _) in zip(a, b):
        assert np.array_equal(pa.classes, pb.classes)
        assert fa.indices == fb.indices
