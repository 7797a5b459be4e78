"""Lane-graph map model: loading, agent localisation, goal extraction and
target path construction.

The map format is a JSON lane graph (see ``load_lane_graph``). A lane is a
centre-line polyline plus topology: successors, left/right neighbours and a
lane type. Everything here is a pure function of immutable inputs; a loaded
LaneGraph is safe to share between predictor instances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import geometry

MAX_OFFROAD_DISTANCE = 3.0
OFFSET_THRESHOLD = 0.3
EXIT_LOOKAHEAD = 200.0


class LaneType(str, Enum):
    DRIVING = "driving"
    ENTRY_RAMP = "entry_ramp"
    EXIT_RAMP = "exit_ramp"


class GoalKind(Enum):
    """Hypothesised manoeuvre kinds, in deterministic emission order."""

    FOLLOW_LANE = 0
    FOLLOW_LANE_WITH_OFFSET = 1
    CHANGE_LEFT = 2
    CHANGE_RIGHT = 3
    ENTER_HIGHWAY = 4
    EXIT_HIGHWAY = 5


class LaneGraphError(ValueError):
    """Raised on malformed or inconsistent lane-graph input."""


class OffRoadError(ValueError):
    """Raised when a pose cannot be matched to any lane."""


@dataclass(frozen=True)
class Lane:
    id: str
    lane_type: LaneType
    width: float
    centerline: np.ndarray
    successors: tuple[str, ...]
    left: str | None
    right: str | None
    arclength: np.ndarray = field(compare=False, default=None)

    @property
    def length(self) -> float:
        return float(self.arclength[-1])


@dataclass(frozen=True)
class LaneGraph:
    lanes: dict[str, Lane]

    def lane(self, lane_id: str) -> Lane:
        return self.lanes[lane_id]


@dataclass(frozen=True)
class Goal:
    kind: GoalKind
    target_lane: str
    offset: float = 0.0

    @property
    def key(self) -> tuple[GoalKind, str]:
        return (self.kind, self.target_lane)


@dataclass(frozen=True)
class Path:
    """Target path: polyline plus cumulative arclength per point."""

    points: np.ndarray
    cumulative_arclength: np.ndarray


@dataclass(frozen=True)
class LaneLocation:
    lane_id: str
    arclength: float
    offset: float


@dataclass(frozen=True)
class GoalMatching:
    """1:1 mapping between consecutive goal sets, keyed by (kind, lane)."""

    pairs: dict[int, int]  # previous index -> current index
    removed: list[int]  # indices into previous
    added: list[int]  # indices into current


def load_lane_graph(source) -> LaneGraph:
    """Parse and validate the JSON lane-graph format.

    Accepts bytes, a text string or a readable file object. Top level is
    ``{"lanes": [...]}``; each lane:
    ``{"id", "type", "width", "centerline", "successors", "left", "right"}``.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as e:
        raise LaneGraphError(f"lane graph parse failure: {e}") from e
    if not isinstance(doc, dict) or "lanes" not in doc:
        raise LaneGraphError("lane graph must be an object with a 'lanes' list")

    lanes: dict[str, Lane] = {}
    for raw in doc["lanes"]:
        lane_id = raw.get("id")
        if not isinstance(lane_id, str) or not lane_id:
            raise LaneGraphError("lane with missing or empty id")
        if lane_id in lanes:
            raise LaneGraphError(f"duplicate lane id {lane_id!r}")
        try:
            lane_type = LaneType(raw["type"])
        except (KeyError, ValueError):
            raise LaneGraphError(f"lane {lane_id!r}: unknown lane type {raw.get('type')!r}")
        pts = np.asarray(raw.get("centerline", []), dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise LaneGraphError(f"lane {lane_id!r}: centerline needs >= 2 (x, y) points")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg == 0.0):
            raise LaneGraphError(f"lane {lane_id!r}: degenerate centerline (repeated point)")
        width = float(raw.get("width", 0.0))
        if width <= 0.0:
            raise LaneGraphError(f"lane {lane_id!r}: width must be positive")
        lanes[lane_id] = Lane(
            id=lane_id,
            lane_type=lane_type,
            width=width,
            centerline=pts,
            successors=tuple(raw.get("successors", [])),
            left=raw.get("left"),
            right=raw.get("right"),
            arclength=geometry.cumulative_arclength(pts),
        )

    for lane in lanes.values():
        for succ in lane.successors:
            if succ not in lanes:
                raise LaneGraphError(f"lane {lane.id!r}: dangling successor reference {succ!r}")
        for side in ("left", "right"):
            ref = getattr(lane, side)
            if ref is None:
                continue
            if ref not in lanes:
                raise LaneGraphError(f"lane {lane.id!r}: dangling {side} neighbour reference {ref!r}")
            back = getattr(lanes[ref], "right" if side == "left" else "left")
            if back != lane.id:
                raise LaneGraphError(
                    f"lane {lane.id!r}: asymmetric {side} neighbour link to {ref!r}"
                )
    return LaneGraph(lanes=lanes)


def locate_agent(graph: LaneGraph, pose) -> LaneLocation:
    """Match a pose (x, y, theta) to the nearest lane.

    Nearest by absolute lateral distance; ties within 1 cm are broken by the
    smallest absolute heading difference to the local centre-line tangent.
    """
    x, y, theta = pose
    p = (x, y)
    best = None  # (|offset|, |heading diff|, LaneLocation)
    for lane in graph.lanes.values():
        s, offset = geometry.project_point(lane.centerline, lane.arclength, p)
        if abs(offset) > MAX_OFFROAD_DISTANCE:
            continue
        tx, ty = geometry.tangent_at(lane.centerline, lane.arclength, s)
        hdiff = abs(geometry.wrap_angle(theta - math.atan2(ty, tx)))
        cand = (abs(offset), hdiff, LaneLocation(lane.id, s, offset))
        if best is None:
            best = cand
        elif abs(cand[0] - best[0]) <= 0.01:
            if cand[1] < best[1]:
                best = cand
        elif cand[0] < best[0]:
            best = cand
    if best is None:
        raise OffRoadError(f"pose ({x:.2f}, {y:.2f}) is more than "
                           f"{MAX_OFFROAD_DISTANCE} m from every centre line")
    return best[2]


def _exit_branch_within(graph: LaneGraph, lane: Lane, s: float, horizon: float) -> str | None:
    """First exit-ramp successor reachable within horizon metres of arclength."""
    remaining = lane.length - s
    current = lane
    travelled = 0.0
    seen = {current.id}
    while True:
        if travelled + remaining <= horizon + 1e-9:
            for succ in current.successors:
                if graph.lane(succ).lane_type == LaneType.EXIT_RAMP:
                    return succ
        else:
            return None
        travelled += remaining
        nxt = next(
            (graph.lane(sid) for sid in current.successors
             if graph.lane(sid).lane_type == LaneType.DRIVING),
            None,
        )
        if nxt is None or nxt.id in seen:
            return None
        seen.add(nxt.id)
        current = nxt
        remaining = current.length


def _merge_target(graph: LaneGraph, lane: Lane) -> str | None:
    """Driving lane an entry ramp merges into: adjacent neighbour first,
    else the first driving successor."""
    for ref in (lane.left, lane.right):
        if ref is not None and graph.lane(ref).lane_type == LaneType.DRIVING:
            return ref
    for succ in lane.successors:
        if graph.lane(succ).lane_type == LaneType.DRIVING:
            return succ
    return None


def extract_goals(graph: LaneGraph, state) -> list[Goal]:
    """Hypothesised goals for an agent state (anything with .position and
    .heading), in deterministic order: follow, offset-follow, change left,
    change right, enter, exit."""
    loc = locate_agent(graph, (state.position[0], state.position[1], state.heading))
    lane = graph.lane(loc.lane_id)
    goals = [Goal(GoalKind.FOLLOW_LANE, lane.id)]
    if abs(loc.offset) > OFFSET_THRESHOLD:
        goals.append(Goal(GoalKind.FOLLOW_LANE_WITH_OFFSET, lane.id, offset=loc.offset))
    # change goals only from driving lanes; on a ramp the merge is covered
    # by the enter/exit goal
    if lane.lane_type == LaneType.DRIVING:
        if lane.left is not None and graph.lane(lane.left).lane_type == LaneType.DRIVING:
            goals.append(Goal(GoalKind.CHANGE_LEFT, lane.left))
        if lane.right is not None and graph.lane(lane.right).lane_type == LaneType.DRIVING:
            goals.append(Goal(GoalKind.CHANGE_RIGHT, lane.right))
    if lane.lane_type == LaneType.ENTRY_RAMP:
        target = _merge_target(graph, lane)
        if target is not None:
            goals.append(Goal(GoalKind.ENTER_HIGHWAY, target))
    if lane.lane_type == LaneType.DRIVING:
        exit_lane = _exit_branch_within(graph, lane, loc.arclength, EXIT_LOOKAHEAD)
        if exit_lane is not None:
            goals.append(Goal(GoalKind.EXIT_HIGHWAY, exit_lane))
    return goals


def _follow_chain(graph: LaneGraph, lane: Lane, horizon: float, s0: float,
                  via: str | None = None) -> list[Lane]:
    """Lane sequence from lane, following driving successors until horizon
    metres are covered. If via is given, branch into that lane when it is a
    direct successor (used for exit paths)."""
    chain = [lane]
    covered = lane.length - s0
    seen = {lane.id}
    current = lane
    while covered < horizon:
        nxt_id = None
        if via is not None and via in current.successors:
            nxt_id = via
            via = None
        else:
            for sid in current.successors:
                if graph.lane(sid).lane_type == LaneType.DRIVING:
                    nxt_id = sid
                    break
            if nxt_id is None and current.successors:
                nxt_id = current.successors[0]
        if nxt_id is None or nxt_id in seen:
            break
        seen.add(nxt_id)
        current = graph.lane(nxt_id)
        chain.append(current)
        covered += current.length
    return chain


def _chain_polyline(chain: list[Lane]) -> np.ndarray:
    pts = [chain[0].centerline]
    for lane in chain[1:]:
        prev_end = pts[-1][-1]
        cl = lane.centerline
        if np.hypot(*(cl[0] - prev_end)) < 1e-9:
            cl = cl[1:]
        pts.append(cl)
    return np.concatenate(pts, axis=0)


def _build_path(points: np.ndarray, start_s: float, horizon: float,
                lateral_offset: float = 0.0) -> Path:
    """Cut a polyline at start_s, shift laterally, and guarantee at least
    horizon metres of length via terminal tangent extrapolation."""
    if lateral_offset != 0.0:
        points = geometry.offset_polyline(points, lateral_offset)
    arclen = geometry.cumulative_arclength(points)
    start = geometry.point_at(points, arclen, start_s)
    i = int(np.searchsorted(arclen, start_s + 1e-9))
    pts = np.concatenate(([start], points[i:]), axis=0)
    if len(pts) < 2:
        tan = geometry.tangent_at(points, arclen, start_s)
        pts = np.stack([start, start + tan * max(horizon, 1.0)])
    arclen = geometry.cumulative_arclength(pts)
    if arclen[-1] < horizon:
        tan = pts[-1] - pts[-2]
        tan = tan / np.hypot(tan[0], tan[1])
        pts = np.concatenate([pts, [pts[-1] + tan * (horizon - arclen[-1])]], axis=0)
        arclen = geometry.cumulative_arclength(pts)
    return Path(points=pts, cumulative_arclength=arclen)


def target_path(graph: LaneGraph, goal: Goal, state, horizon_distance: float) -> Path:
    """Target polyline for a goal: centre lines through successors, shifted
    by the goal offset for offset-follow goals. For change/enter goals the
    path is the target lane's centre line from the projection of the agent
    position; the controller produces the lateral transient."""
    pos = np.asarray(state.position, dtype=float)
    if goal.kind in (GoalKind.FOLLOW_LANE, GoalKind.FOLLOW_LANE_WITH_OFFSET,
                     GoalKind.EXIT_HIGHWAY):
        loc = locate_agent(graph, (pos[0], pos[1], state.heading))
        lane = graph.lane(loc.lane_id)
        via = goal.target_lane if goal.kind == GoalKind.EXIT_HIGHWAY else None
        chain = _follow_chain(graph, lane, horizon_distance + loc.arclength, 0.0, via=via)
        points = _chain_polyline(chain)
        arclen = geometry.cumulative_arclength(points)
        s0, _ = geometry.project_point(points, arclen, pos)
        return _build_path(points, s0, horizon_distance, lateral_offset=goal.offset)
    # change_left / change_right / enter_highway: target lane's own chain
    lane = graph.lane(goal.target_lane)
    chain = _follow_chain(graph, lane, horizon_distance + lane.length, 0.0)
    points = _chain_polyline(chain)
    arclen = geometry.cumulative_arclength(points)
    s0, _ = geometry.project_point(points, arclen, pos)
    return _build_path(points, s0, horizon_distance)


def match_goals(previous: list[Goal], current: list[Goal]) -> GoalMatching:
    """Match consecutive goal sets by (kind, target_lane)."""
    for goals, label in ((previous, "previous"), (current, "current")):
        keys = [g.key for g in goals]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate (kind, target_lane) in {label} goal list")
    cur_by_key = {g.key: i for i, g in enumerate(current)}
    pairs: dict[int, int] = {}
    removed: list[int] = []
    for i, g in enumerate(previous):
        j = cur_by_key.get(g.key)
        if j is None:
            removed.append(i)
        else:
            pairs[i] = j
    matched = set(pairs.values())
    added = [j for j in range(len(current)) if j not in matched]
    return GoalMatching(pairs=pairs, removed=removed, added=added)
