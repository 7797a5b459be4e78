"""Recursive Bayesian inference over hypothesised goals.

Per step: extract goals, match them to the previous set, remap masses,
update with the likelihood of the current observation under the previously
predicted trajectories, regenerate one trajectory per goal, penalise
uncomfortable lateral accelerations and mix with a uniform distribution
(forgetting). The posterior and trajectories feed back into the next step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import features as feat
from . import lane_map, mdn, pursuit
from .geometry import wrap_angle


@dataclass(frozen=True)
class BayesParams:
    sigma_x: float = 0.4  # m
    sigma_y: float = 0.4  # m
    sigma_phi: float = 0.15  # rad
    penalty_rate: float = 0.5  # lambda
    forgetting: float = 0.1  # gamma
    comfort_accel: float = 0.0  # max_alpha threshold, m/s^2


@dataclass(frozen=True)
class PosteriorEntry:
    goal: lane_map.Goal
    probability: float
    trajectory: pursuit.Trajectory
    profile: mdn.MotionProfile


@dataclass(frozen=True)
class GoalPosterior:
    entries: list[PosteriorEntry]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([e.probability for e in self.entries])

    def most_likely(self) -> PosteriorEntry:
        """Highest-probability entry; ties broken by goal ordering."""
        return max(self.entries, key=lambda e: e.probability)


@dataclass
class PredictorState:
    posterior: GoalPosterior | None = None
    goals: list[lane_map.Goal] = field(default_factory=list)
    last_timestamp: float | None = None


def likelihood(observed: feat.AgentState, predicted_state, params: BayesParams) -> float:
    """Product of normal densities on x, y and velocity direction.

    predicted_state is an (x, y, theta, speed) row read off the previous
    trajectory; the predicted velocity direction is its heading.
    """
    px, py, ptheta = predicted_state[0], predicted_state[1], predicted_state[2]
    phi = math.atan2(observed.velocity[1], observed.velocity[0])
    dx = (observed.position[0] - px) / params.sigma_x
    dy = (observed.position[1] - py) / params.sigma_y
    dphi = wrap_angle(phi - ptheta) / params.sigma_phi
    norm = (2.0 * math.pi) ** 1.5 * params.sigma_x * params.sigma_y * params.sigma_phi
    return math.exp(-0.5 * (dx * dx + dy * dy + dphi * dphi)) / norm


def posterior_update(prior: np.ndarray, likelihoods: np.ndarray) -> np.ndarray:
    """Elementwise Bayes update; falls back to the prior when every product
    term is zero (observation far from all predictions)."""
    post = np.asarray(prior, float) * np.asarray(likelihoods, float)
    total = post.sum()
    if total <= 0.0:
        return np.asarray(prior, float).copy()
    return post / total


def lateral_acc_penalty(dist: np.ndarray, max_alphas: np.ndarray,
                        params: BayesParams) -> np.ndarray:
    """Exponential down-weighting of goals whose trajectory exceeds the
    comfort lateral acceleration, renormalised."""
    excess = np.maximum(0.0, np.asarray(max_alphas, float) - params.comfort_accel)
    post = np.asarray(dist, float) * np.exp(-params.penalty_rate * excess)
    total = post.sum()
    if total <= 0.0:
        return np.asarray(dist, float).copy()
    return post / total


def forget(dist: np.ndarray, gamma: float) -> np.ndarray:
    """Mix with the uniform distribution; lower-bounds every goal mass."""
    dist = np.asarray(dist, float)
    return (1.0 - gamma) * dist + gamma / len(dist)


def remap_goal_masses(dist: np.ndarray, matching: lane_map.GoalMatching,
                      n_current: int) -> np.ndarray:
    """Carry masses across a goal-set change.

    Removed goals donate their mass equally to the surviving goals. Each
    added goal receives 1/n_current, drawn equally from the existing goals
    (clamped at zero and renormalised in the degenerate case).
    """
    dist = np.asarray(dist, float)
    out = np.zeros(n_current)
    survivors = list(matching.pairs.values())
    removed_mass = float(sum(dist[i] for i in matching.removed))
    for prev_i, cur_j in matching.pairs.items():
        out[cur_j] = dist[prev_i]
    if survivors and removed_mass > 0.0:
        out[survivors] += removed_mass / len(survivors)
    if matching.added:
        new_mass = 1.0 / n_current
        if survivors:
            draw = len(matching.added) * new_mass / len(survivors)
            out[survivors] = np.maximum(0.0, out[survivors] - draw)
        out[matching.added] = new_mass
    total = out.sum()
    if total <= 0.0:
        return np.full(n_current, 1.0 / n_current)
    return out / total


class ProfilePredictor:
    """Motion-profile provider interface used by the predictor loop."""

    def predict(self, behaviour: str, neighbourhood: feat.Neighbourhood,
                side: str | None) -> mdn.MotionProfile:
        raise NotImplementedError


class ExpertProfilePredictor(ProfilePredictor):
    """Mixture-of-experts MDN predictor (the trained collection)."""

    def __init__(self, collection: mdn.ExpertCollection):
        self.collection = collection

    def predict(self, behaviour, neighbourhood, side):
        n_front = len(neighbourhood.front)
        n_side = len(neighbourhood.side(side)) if side else 0
        model = self.collection.select(behaviour, n_front, n_side)
        if behaviour == "follow":
            z = feat.follow_lane_features(neighbourhood, min(n_front, 3))
        else:
            z = feat.change_lane_features(neighbourhood, side,
                                          min(n_front, 3), min(n_side, 3))
        out = mdn.forward(model, z)
        return mdn.to_motion_profile(out, neighbourhood.target.speed)


class PhysicsProfilePredictor(ProfilePredictor):
    """CV or DA baseline profiles, independent of context."""

    def __init__(self, kind: str = "cv", stds: np.ndarray | None = None):
        if kind not in ("cv", "da"):
            raise ValueError(f"unknown baseline kind {kind!r}")
        self.kind = kind
        self.stds = stds

    def predict(self, behaviour, neighbourhood, side):
        target = neighbourhood.target
        if self.kind == "cv":
            return mdn.cv_baseline(target, stds=self.stds)
        return mdn.da_baseline(target, stds=self.stds)


def goal_behaviour(goal: lane_map.Goal) -> str:
    """Follow vs change behaviour family; entries and exits are changes."""
    if goal.kind in (lane_map.GoalKind.FOLLOW_LANE,
                     lane_map.GoalKind.FOLLOW_LANE_WITH_OFFSET):
        return "follow"
    return "change"


def manoeuvre_side(graph: lane_map.LaneGraph, current_lane: str,
                   goal: lane_map.Goal) -> str | None:
    """Which neighbour side a change-family goal moves towards."""
    kind = goal.kind
    if kind == lane_map.GoalKind.CHANGE_LEFT:
        return "left"
    if kind == lane_map.GoalKind.CHANGE_RIGHT:
        return "right"
    if kind in (lane_map.GoalKind.ENTER_HIGHWAY, lane_map.GoalKind.EXIT_HIGHWAY):
        lane = graph.lane(current_lane)
        if lane.left == goal.target_lane:
            return "left"
        if lane.right == goal.target_lane:
            return "right"
        # exit ramps branch off the slow side; default right
        return "right"
    return None


@dataclass
class StepTiming:
    feature_extraction: float = 0.0
    profile_prediction: float = 0.0
    inference: float = 0.0  # Bayes update incl. trajectory generation


class Predictor:
    """Per-agent recursive goal and trajectory predictor."""

    def __init__(self, graph: lane_map.LaneGraph, profiles: ProfilePredictor,
                 params: BayesParams = BayesParams(),
                 pursuit_params: pursuit.PursuitParams = pursuit.PursuitParams(),
                 geom: pursuit.VehicleGeometry = pursuit.VehicleGeometry(2.7, 1.35),
                 horizon_distance: float = 250.0):
        self.graph = graph
        self.profiles = profiles
        self.params = params
        self.pursuit_params = pursuit_params
        self.geom = geom
        self.horizon_distance = horizon_distance
        self.state = PredictorState()
        self.last_timing = StepTiming()

    def step(self, scene: list[feat.AgentState], target_id: str,
             timestamp: float | None = None) -> GoalPosterior:
        """One 10 Hz prediction step for the target agent.

        Raises OffRoadError when the target cannot be localised.
        """
        timing = StepTiming()
        target = next(a for a in scene if a.id == target_id)
        t0 = time.perf_counter()
        goals = lane_map.extract_goals(self.graph, target)
        loc = lane_map.locate_agent(self.graph, target.pose)
        neigh = feat.select_neighbours(scene, target_id, self.graph)
        timing.feature_extraction += time.perf_counter() - t0

        t0 = time.perf_counter()
        prev = self.state
        if prev.posterior is None:
            dist = np.full(len(goals), 1.0 / len(goals))
        else:
            matching = lane_map.match_goals(prev.goals, goals)
            dist = remap_goal_masses(prev.posterior.probabilities, matching,
                                     len(goals))
            # Likelihood of the observation under the previous trajectories,
            # read at one elapsed dt. Added goals carry no prediction; they
            # keep their remapped (uniform-equivalent) mass via a peak
            # density placeholder.
            peak = likelihood(target, (target.position[0], target.position[1],
                                       math.atan2(target.velocity[1],
                                                  target.velocity[0])),
                              self.params)
            liks = np.full(len(goals), peak)
            for prev_i, cur_j in matching.pairs.items():
                predicted = prev.posterior.entries[prev_i].trajectory.states[0]
                liks[cur_j] = likelihood(target, predicted, self.params)
            dist = posterior_update(dist, liks)
        timing.inference += time.perf_counter() - t0

        entries: list[tuple] = []
        alphas = np.empty(len(goals))
        for i, goal in enumerate(goals):
            side = manoeuvre_side(self.graph, loc.lane_id, goal)
            t0 = time.perf_counter()
            profile = self.profiles.predict(goal_behaviour(goal), neigh, side)
            timing.profile_prediction += time.perf_counter() - t0
            t0 = time.perf_counter()
            path = lane_map.target_path(self.graph, goal, target,
                                        self.horizon_distance)
            traj = pursuit.generate_trajectory(target, path, profile,
                                               self.geom, self.pursuit_params)
            alphas[i] = traj.max_lateral_accel
            entries.append((goal, traj, profile))
            timing.inference += time.perf_counter() - t0

        t0 = time.perf_counter()
        dist = lateral_acc_penalty(dist, alphas, self.params)
        dist = forget(dist, self.params.forgetting)
        timing.inference += time.perf_counter() - t0

        posterior = GoalPosterior(entries=[
            PosteriorEntry(goal=g, probability=float(p), trajectory=tr, profile=pf)
            for (g, tr, pf), p in zip(entries, dist)
        ])
        self.state = PredictorState(posterior=posterior, goals=goals,
                                    last_timestamp=timestamp)
        self.last_timing = timing
        return posterior
