"""Dataset segmentation, splitting, behaviour stratification and the metric
suite (RMSE, FDE, MNLL)."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .features import AgentState
from .lane_map import LaneGraph, OffRoadError, locate_agent

HISTORY_SECONDS = 3.0
FUTURE_SECONDS = 5.0
FRAME_RATE = 10  # Hz

HORIZONS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class Sample:
    """One 8 s window: 3 s history (incl. current frame) + 5 s future."""

    target_id: str
    history: list[AgentState]  # 30 frames, oldest first
    future: list[AgentState]  # 50 frames
    scene: dict[int, list[AgentState]]  # frame offset -> agents (incl. target)
    behaviour: str | None = None  # follow_lane | change_lane

    @property
    def current(self) -> AgentState:
        return self.history[-1]


@dataclass
class MetricReport:
    rmse: dict[int, float] = field(default_factory=dict)  # horizon s -> m
    fde: dict[int, float] = field(default_factory=dict)
    mnll: float = math.nan
    counts: dict[str, int] = field(default_factory=dict)  # stratum -> n

    def as_dict(self) -> dict:
        return {
            "rmse": {str(k): v for k, v in self.rmse.items()},
            "fde": {str(k): v for k, v in self.fde.items()},
            "mnll": self.mnll,
            "counts": dict(self.counts),
        }


def split_fraction(vehicle_id: str) -> float:
    """Deterministic, seedless hash of a vehicle id to [0, 1)."""
    digest = hashlib.sha256(str(vehicle_id).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64


def assign_split(vehicle_id: str) -> str:
    f = split_fraction(vehicle_id)
    if f < 0.7:
        return "train"
    if f < 0.8:
        return "val"
    return "test"


def split_dataset(samples: list[Sample]) -> dict[str, list[Sample]]:
    """70/10/20 train/val/test by vehicle id; a vehicle never straddles
    splits."""
    out = {"train": [], "val": [], "test": []}
    for s in samples:
        out[assign_split(s.target_id)].append(s)
    return out


def segment(track: list[AgentState], scene_by_frame: dict[int, list[AgentState]]
            | None = None, stride_seconds: float = 1.0) -> list[Sample]:
    """Sliding 8 s windows over one vehicle's frames.

    track must be frame-contiguous at 10 Hz; callers drop windows spanning
    gaps before calling (see cli.build_samples for the gap handling).
    """
    n_hist = int(HISTORY_SECONDS * FRAME_RATE)
    n_fut = int(FUTURE_SECONDS * FRAME_RATE)
    window = n_hist + n_fut
    stride = max(1, int(round(stride_seconds * FRAME_RATE)))
    samples = []
    for start in range(0, len(track) - window + 1, stride):
        hist = track[start:start + n_hist]
        fut = track[start + n_hist:start + window]
        scene = {}
        if scene_by_frame is not None:
            scene = {i: scene_by_frame.get(start + i, []) for i in range(window)}
        samples.append(Sample(target_id=track[0].id, history=list(hist),
                              future=list(fut), scene=scene))
    return samples


def label_behaviour(sample: Sample, graph: LaneGraph) -> str:
    """change_lane iff the matched lane id changes anywhere in the future
    window (entries and exits included), else follow_lane."""
    try:
        start_lane = locate_agent(graph, sample.current.pose).lane_id
        for state in sample.future:
            lane = locate_agent(graph, state.pose).lane_id
            if lane != start_lane:
                return "change_lane"
    except OffRoadError:
        return "change_lane"
    return "follow_lane"


def _displacements(predictions, ground_truth, horizon: int) -> np.ndarray:
    """Euclidean displacement at the horizon per sample.

    predictions / ground_truth: (n, T, >=2) position sequences at 10 Hz
    covering 5 s (T = 50); horizon in whole seconds.
    """
    idx = horizon * FRAME_RATE - 1
    pred = np.asarray(predictions, dtype=float)[:, idx, :2]
    gt = np.asarray(ground_truth, dtype=float)[:, idx, :2]
    return np.hypot(pred[:, 0] - gt[:, 0], pred[:, 1] - gt[:, 1])


def rmse(predictions, ground_truth, horizon: int) -> float:
    d = _displacements(predictions, ground_truth, horizon)
    return float(np.sqrt(np.mean(d * d)))


def fde(predictions, ground_truth, horizon: int) -> float:
    return float(np.mean(_displacements(predictions, ground_truth, horizon)))


def gaussian_mixture_nll_1d(weights, means, variances, value) -> float:
    """NLL of a scalar under a 1-D Gaussian mixture."""
    weights = np.asarray(weights, float)
    means = np.asarray(means, float)
    variances = np.asarray(variances, float)
    eps = value - means
    log_comp = (np.log(np.maximum(weights, 1e-300))
                - 0.5 * eps * eps / variances
                - 0.5 * np.log(2.0 * math.pi * variances))
    mx = np.max(log_comp)
    return float(-(mx + np.log(np.sum(np.exp(log_comp - mx)))))


def mnll(predicted_distances, ground_truth_distances) -> float:
    """Mean NLL of the ground-truth cumulative distances.

    predicted_distances: per sample, (weights (M,), means (M, H),
    variances (M, H)) over H horizons; ground_truth_distances: (n, H).
    The NLL is evaluated per horizon on the scalar distance and averaged
    over horizons and samples.
    """
    total = 0.0
    count = 0
    for (weights, means, variances), gt in zip(predicted_distances,
                                               ground_truth_distances):
        means = np.atleast_2d(np.asarray(means, float))
        variances = np.atleast_2d(np.asarray(variances, float))
        gt = np.asarray(gt, float)
        for h in range(means.shape[1]):
            total += gaussian_mixture_nll_1d(weights, means[:, h],
                                             variances[:, h], gt[h])
            count += 1
    return total / count


def format_table(reports: dict[str, MetricReport]) -> str:
    """Plain-text comparison table: one row block per model name."""
    lines = []
    header = "Horizon        " + "".join(f"{h} s".rjust(9) for h in HORIZONS)
    lines.append(header)
    lines.append("-" * len(header))
    for metric in ("rmse", "fde"):
        for name, rep in reports.items():
            vals = getattr(rep, metric)
            row = f"{metric.upper():5s} {name:9s}" + "".join(
                f"{vals.get(h, math.nan):9.3f}" for h in HORIZONS)
            lines.append(row)
    for name, rep in reports.items():
        lines.append(f"MNLL  {name:9s}{rep.mnll:9.3f}")
    return "\n".join(lines)
