"""Track table handling: NGSIM-style CSV ingestion, unit conversion,
heading derivation and conversion to per-frame agent states."""

from __future__ import annotations

import math

import numpy as np
import pandas as pd

from .features import AgentState

FEET_TO_METRES = 0.3048
FRAME_RATE = 10

NGSIM_COLUMNS = {
    "Vehicle_ID": "vehicle_id",
    "Frame_ID": "frame",
    "Local_X": "x",
    "Local_Y": "y",
    "v_Vel": "speed",
    "v_Acc": "acceleration",
    "v_Class": "agent_class",
    "v_Length": "length",
    "v_Width": "width",
    "Lane_ID": "lane_id",
}

# NGSIM vehicle class codes
_CLASS_CODES = {1: "motorbike", 2: "car", 3: "truck"}

MIN_HEADING_SPEED = 0.5  # m/s; below this the last heading is held


class IngestError(ValueError):
    pass


def derive_headings(x: np.ndarray, y: np.ndarray, speed: np.ndarray) -> np.ndarray:
    """Heading per frame from displacement over a centred 0.5 s window of
    3-point moving-averaged positions; held below 0.5 m/s."""
    n = len(x)
    xs = np.convolve(x, np.ones(3) / 3.0, mode="same")
    ys = np.convolve(y, np.ones(3) / 3.0, mode="same")
    xs[0], xs[-1], ys[0], ys[-1] = x[0], x[-1], y[0], y[-1]
    half = FRAME_RATE // 4  # 0.25 s each side
    headings = np.empty(n)
    last = 0.0
    initialised = False
    for i in range(n):
        lo, hi = max(0, i - half), min(n - 1, i + half)
        dx, dy = xs[hi] - xs[lo], ys[hi] - ys[lo]
        if speed[i] >= MIN_HEADING_SPEED and (dx != 0.0 or dy != 0.0):
            last = math.atan2(dy, dx)
            initialised = True
        elif not initialised and (dx != 0.0 or dy != 0.0):
            last = math.atan2(dy, dx)
        headings[i] = last
    return headings


def ingest_ngsim(path, unit: str = "feet") -> pd.DataFrame:
    """Parse an NGSIM-style CSV into the canonical track table.

    Converts feet to metres when unit="feet" and derives headings from
    smoothed displacements (NGSIM carries no heading column).
    """
    if unit not in ("feet", "metres"):
        raise IngestError(f"unit must be 'feet' or 'metres', got {unit!r}")
    df = pd.read_csv(path)
    missing = [c for c in NGSIM_COLUMNS if c not in df.columns]
    if missing:
        raise IngestError(f"missing column(s): {missing}")
    df = df[list(NGSIM_COLUMNS)].rename(columns=NGSIM_COLUMNS)
    if unit == "feet":
        for col in ("x", "y", "speed", "acceleration", "length", "width"):
            df[col] = df[col] * FEET_TO_METRES
    df["agent_class"] = df["agent_class"].map(
        lambda c: _CLASS_CODES.get(int(c), "car"))
    df["vehicle_id"] = df["vehicle_id"].astype(str)
    df = df.sort_values(["vehicle_id", "frame"], kind="stable").reset_index(drop=True)

    headings = np.empty(len(df))
    for _, idx in df.groupby("vehicle_id", sort=False).groups.items():
        sub = df.loc[idx]
        frames = sub["frame"].to_numpy()
        if np.any(np.diff(frames) <= 0):
            raise IngestError(
                f"vehicle {sub['vehicle_id'].iloc[0]}: non-monotone frames")
        headings[df.index.get_indexer(idx)] = derive_headings(
            sub["x"].to_numpy(), sub["y"].to_numpy(), sub["speed"].to_numpy())
    df["heading"] = headings
    return df


def table_to_scenes(df: pd.DataFrame) -> dict[int, list[AgentState]]:
    """Frame number -> list of AgentState for the whole table."""
    scenes: dict[int, list[AgentState]] = {}
    for row in df.itertuples(index=False):
        state = AgentState(
            id=str(row.vehicle_id),
            position=(float(row.x), float(row.y)),
            heading=float(row.heading),
            velocity=(float(row.speed) * math.cos(row.heading),
                      float(row.speed) * math.sin(row.heading)),
            speed=float(row.speed),
            acceleration=float(row.acceleration),
            agent_class=str(row.agent_class),
            length=float(row.length),
            width=float(row.width),
        )
        scenes.setdefault(int(row.frame), []).append(state)
    return scenes


def vehicle_frames(df: pd.DataFrame, vehicle_id: str) -> pd.DataFrame:
    return df[df["vehicle_id"].astype(str) == str(vehicle_id)].sort_values("frame")


def contiguous_runs(frames: np.ndarray) -> list[tuple[int, int]]:
    """(start index, length) of maximal runs of consecutive frame numbers."""
    if len(frames) == 0:
        return []
    breaks = np.where(np.diff(frames) != 1)[0] + 1
    starts = np.concatenate(([0], breaks))
    ends = np.concatenate((breaks, [len(frames)]))
    return [(int(s), int(e - s)) for s, e in zip(starts, ends)]
