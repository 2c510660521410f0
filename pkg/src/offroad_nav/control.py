"""Stanley lateral steering and PID velocity tracking."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .planning import Trajectory
from .world import ControlCommand, VehicleParams, VehiclePose, wrap_angle


@dataclass
class ControllerGains:
    k: float = 1.5         # Stanley cross-track gain
    K_P: float = 1.0
    K_I: float = 0.2
    K_D: float = 0.05
    v_eps: float = 0.1     # m/s, softens the arctan denominator at standstill

    def __post_init__(self):
        if self.k <= 0 or self.v_eps <= 0:
            raise ValueError("k and v_eps must be positive")


@dataclass
class TrackingState:
    integral_error: float = 0.0
    prev_error: float = 0.0
    cte: float = 0.0
    heading_error: float = 0.0


def _nearest_segment(pose: VehiclePose, trajectory: Trajectory) -> tuple[int, float, float]:
    """Nearest segment index, signed lateral offset (left positive), tangent heading."""
    poses = trajectory.poses
    best = (math.inf, 0, 0.0, 0.0)
    for i in range(len(poses) - 1):
        ax, ay = poses[i].x, poses[i].y
        bx, by = poses[i + 1].x, poses[i + 1].y
        dx, dy = bx - ax, by - ay
        seg_len2 = dx * dx + dy * dy
        if seg_len2 == 0.0:
            continue
        t = max(0.0, min(1.0, ((pose.x - ax) * dx + (pose.y - ay) * dy) / seg_len2))
        px, py = ax + t * dx, ay + t * dy
        d2 = (pose.x - px) ** 2 + (pose.y - py) ** 2
        if d2 < best[0]:
            # magnitude is the clamped distance to the segment; the sign comes
            # from the side of the segment line (positive left).
            cross = dx * (pose.y - ay) - dy * (pose.x - ax)
            signed = math.copysign(math.sqrt(d2), cross) if cross else math.sqrt(d2)
            best = (d2, i, signed, math.atan2(dy, dx))
    if math.isinf(best[0]):
        raise ValueError("trajectory has no nonzero segment")
    return best[1], best[2], best[3]


def cross_track_error(pose: VehiclePose, trajectory: Trajectory) -> float:
    """Signed perpendicular distance to the nearest segment; left of path is positive."""
    if len(trajectory.poses) < 2:
        raise ValueError("trajectory needs at least 2 poses")
    _, cte, _ = _nearest_segment(pose, trajectory)
    return cte


def stanley_steer(psi: float, e: float, v: float, gains: ControllerGains,
                  delta_max: float) -> float:
    """Heading error plus arctan(k e / (v + v_eps)), saturated to +-delta_max."""
    raw = psi + math.atan(gains.k * e / (v + gains.v_eps))
    if raw >= delta_max:
        return delta_max
    if raw <= -delta_max:
        return -delta_max
    return raw


def pid_accel(v_ref: float, v: float, state: TrackingState, gains: ControllerGains,
              dt: float, accel_min: float = -math.inf,
              accel_max: float = math.inf) -> tuple[float, TrackingState]:
    """Discrete PID on velocity error with integral anti-windup."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    err = v_ref - v
    integral = state.integral_error + err * dt
    if gains.K_I > 0 and math.isfinite(accel_max):
        # Keep the integral contribution alone within the actuator's reach.
        bound = accel_max / gains.K_I
        integral = max(-bound, min(bound, integral))
    derivative = (err - state.prev_error) / dt
    out = gains.K_P * err + gains.K_I * integral + gains.K_D * derivative
    out = max(accel_min, min(accel_max, out))
    return out, replace(state, integral_error=integral, prev_error=err)


def step_controller(pose: VehiclePose, trajectory: Trajectory, v_ref: float,
                    state: TrackingState, gains: ControllerGains,
                    params: VehicleParams, dt: float) -> tuple[ControlCommand, TrackingState]:
    """One control cycle: Stanley steering toward the path, PID on speed."""
    if len(trajectory.poses) < 2:
        raise ValueError("trajectory needs at least 2 poses")
    _, cte, tangent = _nearest_segment(pose, trajectory)
    psi = wrap_angle(tangent - pose.theta)
    # cte is positive-left; the steering law expects positive-right.
    delta = stanley_steer(psi, -cte, pose.v, gains, params.delta_max)
    accel, new_state = pid_accel(v_ref, pose.v, state, gains, dt,
                                 params.accel_min, params.accel_max)
    new_state = replace(new_state, cte=cte, heading_error=psi)
    return ControlCommand(delta=delta, accel=accel), new_state
