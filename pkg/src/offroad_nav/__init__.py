"""Deterministic desk-scale off-road navigation stack and benchmark harness."""

from .control import ControllerGains, TrackingState, cross_track_error, pid_accel, stanley_steer, step_controller
from .drivability import (
    DrivabilityMask,
    DrivabilityQuery,
    ExternalOracle,
    GroundTruthOracle,
    NoDrivableSelection,
    NoisyOracle,
    OracleResponse,
    PromptSpec,
    ground_truth_oracle,
    iou_eval,
    mean_iou,
    noisy_oracle,
    parse_response,
    render_query,
    score_selection,
    select_masks,
)
from .harness import ReachabilityReport, RunLog, ScenarioConfig, eval_suite, reachability_suite, run_scenario, timing_compare
from .mapping import FREE, OCCUPIED, UNKNOWN, GridUpdate, LabeledPoint, OccupancyGrid, label_points, update_grid, voxelize
from .planning import (
    DStarState,
    InitError,
    MotionPrimitive,
    Trajectory,
    dstar_compute,
    dstar_init,
    dstar_update,
    hybrid_astar,
    select_local_goal,
)
from .segmentation import (
    AnnotatedFrame,
    Mask,
    PromptGrid,
    SegmentationConfig,
    TrackState,
    annotate,
    extract_masks,
    filter_by_area,
    generate_prompt_grid,
    iou,
    merge_masks,
    segment_patch,
    track_masks,
)
from .world import (
    ControlCommand,
    SensorPatch,
    TerrainClass,
    TerrainWorld,
    VehicleParams,
    VehiclePose,
    WorldGenSpec,
    capture_patch,
    generate_world,
    load_world,
    save_world,
    step_vehicle,
    wrap_angle,
)

__version__ = "0.1.0"
