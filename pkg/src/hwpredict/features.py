"""Neighbourhood selection and fixed-size feature encoding for the expert
networks.

Feature schemas are versioned and shared byte-exactly between training and
inference; see FEATURE_SCHEMAS and docs/feature_schema.md.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Polygon

from . import geometry
from .lane_map import LaneGraph, LaneType, OffRoadError, locate_agent

NEIGHBOUR_RADIUS = 60.0
MAX_FRONT = 3
MAX_SIDE = 3

AGENT_CLASSES = ("car", "truck", "motorbike")


@dataclass(frozen=True)
class AgentState:
    """Tracked agent snapshot: pose, velocity, class and footprint."""

    id: str
    position: tuple[float, float]
    heading: float
    velocity: tuple[float, float]
    speed: float
    acceleration: float
    agent_class: str = "car"
    length: float = 4.5
    width: float = 1.8

    def __post_init__(self):
        if abs(math.hypot(*self.velocity) - self.speed) > 1e-6:
            raise ValueError(f"agent {self.id!r}: speed does not match |velocity|")
        if self.length <= 0.0 or self.width <= 0.0:
            raise ValueError(f"agent {self.id!r}: non-positive footprint")
        if self.agent_class not in AGENT_CLASSES:
            raise ValueError(f"agent {self.id!r}: unknown class {self.agent_class!r}")

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.position[0], self.position[1], self.heading)


def make_agent_state(id, position, heading, speed, acceleration,
                     agent_class="car", length=4.5, width=1.8) -> AgentState:
    """Convenience constructor deriving the velocity vector from heading."""
    return AgentState(
        id=id,
        position=tuple(position),
        heading=heading,
        velocity=(speed * math.cos(heading), speed * math.sin(heading)),
        speed=speed,
        acceleration=acceleration,
        agent_class=agent_class,
        length=length,
        width=width,
    )


@dataclass(frozen=True)
class _Ranked:
    agent: AgentState
    gap: float  # arclength gap to the target (positive = ahead)


@dataclass(frozen=True)
class Neighbourhood:
    target: AgentState
    front: list[_Ranked] = field(default_factory=list)
    left_side: list[_Ranked] = field(default_factory=list)
    right_side: list[_Ranked] = field(default_factory=list)

    def side(self, which: str) -> list[_Ranked]:
        return self.left_side if which == "left" else self.right_side


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema_id: str


def follow_schema_id(n_front: int) -> str:
    return f"follow{n_front}"


def change_schema_id(n_front: int, n_side: int) -> str:
    return f"change{n_front}_{n_side}"


def _schema_table() -> dict[str, int]:
    base = 2 + len(AGENT_CLASSES)  # target speed, acceleration, one-hot class
    per_front = 3 + len(AGENT_CLASSES)  # speed, accel, one-hot, headway
    per_side = 5 + len(AGENT_CLASSES)  # + ahead flag, c2c dist, polygon dist
    table = {}
    for kf in range(MAX_FRONT + 1):
        table[follow_schema_id(kf)] = base + kf * per_front
        for ks in range(MAX_SIDE + 1):
            table[change_schema_id(kf, ks)] = base + kf * per_front + ks * per_side
    return table


FEATURE_SCHEMAS: dict[str, int] = _schema_table()


def feature_length(schema_id: str) -> int:
    return FEATURE_SCHEMAS[schema_id]


def _chain_arclengths(graph: LaneGraph, start_lane: str, max_len: float) -> dict[str, float]:
    """Lane id -> arclength offset of the lane start in the chain frame,
    following driving successors from start_lane."""
    offsets = {start_lane: 0.0}
    lane = graph.lane(start_lane)
    acc = lane.length
    while acc < max_len:
        nxt = next(
            (sid for sid in lane.successors
             if graph.lane(sid).lane_type != LaneType.EXIT_RAMP and sid not in offsets),
            None,
        )
        if nxt is None:
            break
        offsets[nxt] = acc
        lane = graph.lane(nxt)
        acc += lane.length
    return offsets


def select_neighbours(scene: list[AgentState], target_id: str, graph: LaneGraph) -> Neighbourhood:
    """Front and side context of a target agent.

    Front: up to 3 same-lane agents ahead by arclength, nearest first.
    Sides: up to 3 agents on each neighbour lane by absolute arclength gap.
    All members within a 60 m Euclidean radius of the target.
    """
    target = next(a for a in scene if a.id == target_id)
    loc = locate_agent(graph, target.pose)
    lane = graph.lane(loc.lane_id)

    frames = {"front": _chain_arclengths(graph, loc.lane_id, 2 * NEIGHBOUR_RADIUS)}
    for side, ref in (("left", lane.left), ("right", lane.right)):
        frames[side] = _chain_arclengths(graph, ref, 2 * NEIGHBOUR_RADIUS) if ref else {}

    buckets: dict[str, list[_Ranked]] = {"front": [], "left": [], "right": []}
    tp = np.asarray(target.position)
    for agent in scene:
        if agent.id == target_id:
            continue
        if np.hypot(*(np.asarray(agent.position) - tp)) > NEIGHBOUR_RADIUS:
            continue
        try:
            a_loc = locate_agent(graph, agent.pose)
        except OffRoadError:
            continue
        for key, frame in frames.items():
            if a_loc.lane_id in frame:
                gap = frame[a_loc.lane_id] + a_loc.arclength - loc.arclength
                buckets[key].append(_Ranked(agent=agent, gap=gap))
                break

    front = sorted((r for r in buckets["front"] if r.gap > 0.0), key=lambda r: r.gap)
    left = sorted(buckets["left"], key=lambda r: (abs(r.gap), r.gap))
    right = sorted(buckets["right"], key=lambda r: (abs(r.gap), r.gap))
    return Neighbourhood(
        target=target,
        front=front[:MAX_FRONT],
        left_side=left[:MAX_SIDE],
        right_side=right[:MAX_SIDE],
    )


def _one_hot(agent_class: str) -> list[float]:
    return [1.0 if agent_class == c else 0.0 for c in AGENT_CLASSES]


def headway_distance(target: AgentState, front: _Ranked) -> float:
    """Bumper-to-bumper gap along the lane, floored at 0."""
    return max(0.0, front.gap - target.length / 2.0 - front.agent.length / 2.0)


def polygon_distance(a: AgentState, b: AgentState) -> float:
    """Shortest distance between the two vehicle footprint rectangles."""
    pa = Polygon(geometry.rectangle_corners(a.position, a.heading, a.length, a.width))
    pb = Polygon(geometry.rectangle_corners(b.position, b.heading, b.length, b.width))
    return float(pa.distance(pb))


def follow_lane_features(n: Neighbourhood, n_front: int) -> FeatureVector:
    """Target features plus per-front-agent blocks, nearest first."""
    if len(n.front) < n_front:
        raise ValueError(f"schema needs {n_front} front agents, got {len(n.front)}")
    t = n.target
    values = [t.speed, t.acceleration, *_one_hot(t.agent_class)]
    for ranked in n.front[:n_front]:
        a = ranked.agent
        values += [a.speed, a.acceleration, *_one_hot(a.agent_class),
                   headway_distance(t, ranked)]
    return FeatureVector(values=np.array(values, dtype=float),
                         schema_id=follow_schema_id(n_front))


def change_lane_features(n: Neighbourhood, side: str, n_front: int, n_side: int) -> FeatureVector:
    """Follow-lane block plus per-side-agent blocks for the manoeuvre side.

    Side block per agent: speed, acceleration, one-hot class, ahead/behind
    flag (1 = ahead; a zero arclength gap counts as behind), centre-to-centre
    distance and shortest footprint polygon distance.
    """
    side_agents = n.side(side)
    if len(side_agents) < n_side:
        raise ValueError(f"schema needs {n_side} side agents, got {len(side_agents)}")
    base = follow_lane_features(n, n_front)
    t = n.target
    values = list(base.values)
    for ranked in side_agents[:n_side]:
        a = ranked.agent
        c2c = math.hypot(a.position[0] - t.position[0], a.position[1] - t.position[1])
        values += [a.speed, a.acceleration, *_one_hot(a.agent_class),
                   1.0 if ranked.gap > 0.0 else 0.0, c2c, polygon_distance(t, a)]
    return FeatureVector(values=np.array(values, dtype=float),
                         schema_id=change_schema_id(n_front, n_side))
