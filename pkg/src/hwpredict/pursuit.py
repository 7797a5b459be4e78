"""Pure pursuit trajectory generation over a kinematic bicycle model.

Generates a 10 Hz, 5 s closed-loop rollout tracking a target path laterally
and a target motion profile longitudinally, with hard acceleration and jerk
caps so every emitted trajectory is physically feasible by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .lane_map import Path
from .mdn import MotionProfile

LATERAL_STD = 0.5  # m; fixed lateral position uncertainty per state


@dataclass(frozen=True)
class VehicleGeometry:
    wheelbase: float  # L, metres
    rear_to_centre: float  # L_r, metres

    def __post_init__(self):
        if not 0.0 < self.rear_to_centre < self.wheelbase:
            raise ValueError("need 0 < rear_to_centre < wheelbase")


@dataclass(frozen=True)
class ControlInput:
    acceleration: float
    steering: float


@dataclass(frozen=True)
class PursuitParams:
    lookahead: float = 10.0  # l_d
    gain: float = 2.0  # k_p, shared by steer and accel loops
    delay_steps: int = 5  # tau
    max_accel: float = 6.0  # m/s^2
    max_jerk: float = 10.0  # m/s^3
    dt: float = 0.1
    horizon: float = 5.0


@dataclass(frozen=True)
class Trajectory:
    """10 Hz rollout: states exclude the initial condition."""

    states: np.ndarray  # (T, 4): x, y, theta, speed
    controls: np.ndarray  # (T, 2): acceleration, steering
    covariances: np.ndarray  # (T, 2, 2) position covariance
    max_lateral_accel: float


def side_slip(geom: VehicleGeometry, steering: float) -> float:
    """Side slip angle beta for a centre-referenced bicycle model."""
    return math.atan(geom.rear_to_centre / geom.wheelbase * math.tan(steering))


def bicycle_step(state, u: ControlInput, geom: VehicleGeometry, dt: float):
    """One kinematic bicycle update of (x, y, theta, speed).

    Displacement uses the trapezoidal d = s*dt + a*dt^2/2; speed is floored
    at 0 (no reversing).
    """
    x, y, theta, speed = state
    beta = side_slip(geom, u.steering)
    d = speed * dt + 0.5 * u.acceleration * dt * dt
    x += d * math.cos(theta + beta)
    y += d * math.sin(theta + beta)
    theta += d / geom.wheelbase * math.cos(beta) * math.tan(u.steering)
    speed = max(0.0, speed + u.acceleration * dt)
    return (x, y, theta, speed)


def lookahead_goal(path: Path, rear_axle, lookahead: float) -> tuple[float, float]:
    """Path point one lookahead distance ahead of the rear axle projection.

    Past the end of the path the terminal tangent is extrapolated.
    """
    s, _ = geometry.project_point(path.points, path.cumulative_arclength, rear_axle)
    g = geometry.point_at(path.points, path.cumulative_arclength, s + lookahead)
    return (float(g[0]), float(g[1]))


def steering_from_error(heading_error: float, lookahead: float, wheelbase: float) -> float:
    """Pure pursuit steering: curvature of the circle through the goal."""
    kappa = 2.0 * math.sin(heading_error) / lookahead
    return math.atan(kappa * wheelbase)


def interpolate_profile(profile: MotionProfile, current_speed: float,
                        params: PursuitParams) -> tuple[np.ndarray, np.ndarray]:
    """(target speeds, distance stds) at 10 Hz for steps 1..T.

    The 1 Hz profile is linearly interpolated, anchored at the current speed
    (std 0) at step 0.
    """
    n_steps = int(round(params.horizon / params.dt))
    t_profile = np.arange(0, len(profile.speeds) + 1, dtype=float)
    speeds = np.concatenate(([current_speed], profile.speeds))
    stds = np.concatenate(([0.0], profile.distance_stds))
    t_query = np.arange(1, n_steps + 1) * params.dt
    return (np.interp(t_query, t_profile, speeds),
            np.interp(t_query, t_profile, stds))


def accel_command(target_speeds: np.ndarray, speed: float, step: int,
                  prev_accel: float, params: PursuitParams) -> float:
    """Proportional speed control toward the delayed target, with hard
    acceleration clamp and jerk rate limit."""
    # target_speeds[i] is the target at time (i + 1) * dt; the current time
    # at `step` is step * dt, so the delayed target sits at index
    # step + delay_steps - 1. The final speed covers the tail.
    idx = min(step + params.delay_steps - 1, len(target_speeds) - 1)
    a = params.gain * (target_speeds[idx] - speed)
    a = max(-params.max_accel, min(params.max_accel, a))
    max_da = params.max_jerk * params.dt
    return max(prev_accel - max_da, min(prev_accel + max_da, a))


def lateral_accel(speed: float, steering: float, wheelbase: float) -> float:
    """|v^2 / r| with r = L / tan(sigma); 0 for zero steer."""
    return speed * speed * abs(math.tan(steering)) / wheelbase


def generate_trajectory(state, path: Path, profile: MotionProfile,
                        geom: VehicleGeometry, params: PursuitParams) -> Trajectory:
    """Closed-loop pure pursuit rollout.

    state: anything with .position, .heading, .speed. A degenerate path
    (under two distinct points) falls back to a straight zero-steer rollout.
    """
    n_steps = int(round(params.horizon / params.dt))
    target_speeds, dist_stds = interpolate_profile(profile, state.speed, params)

    degenerate = (len(path.points) < 2
                  or path.cumulative_arclength[-1] <= 1e-9)

    x, y = float(state.position[0]), float(state.position[1])
    theta, speed = float(state.heading), float(state.speed)
    prev_a = 0.0
    states = np.empty((n_steps, 4))
    controls = np.empty((n_steps, 2))
    covs = np.empty((n_steps, 2, 2))
    max_alpha = 0.0

    for t in range(n_steps):
        if degenerate:
            sigma = 0.0
        else:
            rear = (x - geom.rear_to_centre * math.cos(theta),
                    y - geom.rear_to_centre * math.sin(theta))
            gx, gy = lookahead_goal(path, rear, params.lookahead)
            bearing = math.atan2(gy - rear[1], gx - rear[0])
            heading_error = geometry.wrap_angle(
                geometry.wrap_angle(bearing - theta) * params.gain)
            sigma = steering_from_error(heading_error, params.lookahead, geom.wheelbase)
        a = accel_command(target_speeds, speed, t, prev_a, params)
        x, y, theta, speed = bicycle_step((x, y, theta, speed),
                                          ControlInput(a, sigma), geom, params.dt)
        prev_a = a
        states[t] = (x, y, theta, speed)
        controls[t] = (a, sigma)
        max_alpha = max(max_alpha, lateral_accel(speed, sigma, geom.wheelbase))

        sd_long = dist_stds[t]
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        covs[t] = rot @ np.diag([sd_long * sd_long, LATERAL_STD * LATERAL_STD]) @ rot.T

    return Trajectory(states=states, controls=controls, covariances=covs,
                      max_lateral_accel=max_alpha)


def max_lateral_acceleration(traj: Trajectory, geom: VehicleGeometry) -> float:
    """Maximum |v^2 / r| over the trajectory from speeds and steer angles."""
    speeds = traj.states[:, 3]
    steers = traj.controls[:, 1]
    return float(np.max(speeds * speeds * np.abs(np.tan(steers)) / geom.wheelbase,
                        initial=0.0))
