"""Synthetic scenario generation: fixture maps and scripted kinematic
scenes used for desk-scale ground truth and the acceptance suite."""

from __future__ import annotations

import json
import math

import numpy as np
import pandas as pd

from .lane_map import LaneGraph, load_lane_graph

LANE_WIDTH = 3.5
FRAME_RATE = 10

TRACK_COLUMNS = ["vehicle_id", "frame", "x", "y", "speed", "acceleration",
                 "lane_id", "agent_class", "length", "width", "heading"]


def straight_lane(lane_id, y, length=1000.0, n_points=51, lane_type="driving",
                  left=None, right=None, successors=()):
    xs = np.linspace(0.0, length, n_points)
    return {
        "id": lane_id,
        "type": lane_type,
        "width": LANE_WIDTH,
        "centerline": [[float(x), float(y)] for x in xs],
        "successors": list(successors),
        "left": left,
        "right": right,
    }


def two_lane_map() -> dict:
    """Two parallel driving lanes; lane a is the right (slow) lane."""
    return {"lanes": [
        straight_lane("a", 0.0, left="b"),
        straight_lane("b", LANE_WIDTH, right="a"),
    ]}


def three_lane_map() -> dict:
    return {"lanes": [
        straight_lane("a", 0.0, left="b"),
        straight_lane("b", LANE_WIDTH, left="c", right="a"),
        straight_lane("c", 2 * LANE_WIDTH, right="b"),
    ]}


def exit_map() -> dict:
    """Two driving lanes; the slow lane forks into an exit ramp at x=300."""
    ramp_pts = [[300.0 + x, -x * x / 200.0] for x in np.linspace(0.0, 100.0, 21)]
    return {"lanes": [
        {
            "id": "a",
            "type": "driving",
            "width": LANE_WIDTH,
            "centerline": [[float(x), 0.0] for x in np.linspace(0.0, 300.0, 16)],
            "successors": ["a2", "exit"],
            "left": "b",
            "right": None,
        },
        _shift_lane(straight_lane("a2", 0.0, length=700.0, n_points=36), 300.0),
        {
            "id": "exit",
            "type": "exit_ramp",
            "width": LANE_WIDTH,
            "centerline": [[float(x), float(y)] for x, y in ramp_pts],
            "successors": [],
            "left": None,
            "right": None,
        },
        straight_lane("b", LANE_WIDTH, right="a"),
    ]}


def _shift_lane(raw: dict, dx: float) -> dict:
    raw = dict(raw)
    raw["centerline"] = [[x + dx, y] for x, y in raw["centerline"]]
    return raw


def entry_map() -> dict:
    """One driving lane with an entry ramp merging from the right."""
    ramp = straight_lane("ramp", -LANE_WIDTH, length=200.0, n_points=11,
                         lane_type="entry_ramp", left="a")
    return {"lanes": [
        straight_lane("a", 0.0, right="ramp"),
        ramp,
    ]}


FIXTURE_MAPS = {
    "two_lane": two_lane_map,
    "three_lane": three_lane_map,
    "exit": exit_map,
    "entry": entry_map,
}


def fixture_graph(name: str) -> LaneGraph:
    return load_lane_graph(json.dumps(FIXTURE_MAPS[name]()))


def write_fixture_map(name: str, path) -> None:
    with open(path, "w") as f:
        json.dump(FIXTURE_MAPS[name](), f, indent=2)


def _rows(vehicle_id, t, x, y, vx, vy, ax_long, lane_id, agent_class="car",
          length=4.5, width=1.8):
    speed = np.hypot(vx, vy)
    heading = np.arctan2(vy, vx)
    return pd.DataFrame({
        "vehicle_id": vehicle_id,
        "frame": np.arange(len(t)),
        "x": x, "y": y,
        "speed": speed,
        "acceleration": ax_long,
        "lane_id": lane_id,
        "agent_class": agent_class,
        "length": length,
        "width": width,
        "heading": heading,
    })


def constant_velocity_track(vehicle_id="v1", speed=10.0, duration=8.0,
                            y=0.0, x0=0.0, lane_id="a") -> pd.DataFrame:
    t = np.arange(int(duration * FRAME_RATE)) / FRAME_RATE
    x = x0 + speed * t
    return _rows(vehicle_id, t, x, np.full_like(t, y), np.full_like(t, speed),
                 np.zeros_like(t), np.zeros_like(t), lane_id)


def change_lane_track(vehicle_id="v1", speed=10.0, duration=8.0, onset=2.0,
                      manoeuvre=3.0, y_from=0.0, y_to=LANE_WIDTH, x0=0.0,
                      lane_from="a", lane_to="b") -> pd.DataFrame:
    """Constant longitudinal speed with a sinusoidal lateral transition
    between onset and onset + manoeuvre."""
    t = np.arange(int(duration * FRAME_RATE)) / FRAME_RATE
    x = x0 + speed * t
    phase = np.clip((t - onset) / manoeuvre, 0.0, 1.0)
    y = y_from + (y_to - y_from) * 0.5 * (1.0 - np.cos(np.pi * phase))
    vy = np.gradient(y, t)
    lane = np.where(np.abs(y - y_from) < abs(y_to - y_from) / 2.0,
                    lane_from, lane_to)
    return _rows(vehicle_id, t, x, y, np.full_like(t, speed), vy,
                 np.zeros_like(t), lane)


def stop_and_go_platoon(n_vehicles=3, headway=20.0, speed=12.0, duration=8.0,
                        brake_at=2.0, brake=3.0, go_at=5.0, y=0.0,
                        lane_id="a") -> pd.DataFrame:
    """Lead vehicle brakes then re-accelerates; followers copy with a lag."""
    frames = []
    t = np.arange(int(duration * FRAME_RATE)) / FRAME_RATE
    for i in range(n_vehicles):
        lag = 0.5 * i
        a = np.where((t >= brake_at + lag) & (t < go_at + lag), -brake,
                     np.where(t >= go_at + lag, brake / 2.0, 0.0))
        v = np.maximum(0.0, speed + np.concatenate(
            ([0.0], np.cumsum(a[:-1]) / FRAME_RATE)))
        x = -i * headway + np.concatenate(([0.0], np.cumsum(v[:-1]) / FRAME_RATE))
        frames.append(_rows(f"v{i + 1}", t, x, np.full_like(t, y), v,
                            np.zeros_like(t), a, lane_id))
    return pd.concat(frames, ignore_index=True)


def entry_merge_track(vehicle_id="v1", speed=15.0, duration=8.0, onset=2.0,
                      manoeuvre=3.0, x0=0.0) -> pd.DataFrame:
    """Entry-ramp merge onto the main lane of the entry fixture map."""
    return change_lane_track(vehicle_id, speed=speed, duration=duration,
                             onset=onset, manoeuvre=manoeuvre,
                             y_from=-LANE_WIDTH, y_to=0.0, x0=x0,
                             lane_from="ramp", lane_to="a")


SCENARIOS = {
    "constant_velocity": ("two_lane", constant_velocity_track),
    "change_lane": ("two_lane", lambda **kw: change_lane_track(**kw)),
    "stop_and_go": ("two_lane", lambda **kw: stop_and_go_platoon(**kw)),
    "entry_merge": ("entry", entry_merge_track),
}


def synth_scenarios(spec: dict, seed: int = 0) -> pd.DataFrame:
    """Scripted kinematic scene per spec: {"scenario": name, **kwargs}.

    Deterministic: the scripted scenarios are noise-free; seed reserved for
    future perturbation knobs.
    """
    spec = dict(spec)
    name = spec.pop("scenario")
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    _, maker = SCENARIOS[name]
    return maker(**spec)


def scenario_map_name(scenario: str) -> str:
    return SCENARIOS[scenario][0]
