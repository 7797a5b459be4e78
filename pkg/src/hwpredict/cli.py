"""Command-line entry points: synth, train, predict, eval, bench.

Exit code 0 on success; on failure a machine-readable JSON error is printed
to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import math
import statistics
import sys
import time
from pathlib import Path as FsPath

import numpy as np
import pandas as pd

from . import bayes, lane_map, mdn, metrics, pursuit, synth, tracks
from .config import Config, load_config
from .features import FEATURE_SCHEMAS, change_lane_features, follow_lane_features, select_neighbours
from .lane_map import GoalKind, OffRoadError, locate_agent
from .metrics import FRAME_RATE, HORIZONS, MetricReport, Sample

LOG_FORMAT = "hwpredict-prediction-log-v1"


def _read_tracks(path, unit: str | None) -> pd.DataFrame:
    df = pd.read_csv(path)
    if set(synth.TRACK_COLUMNS) <= set(df.columns):
        df["vehicle_id"] = df["vehicle_id"].astype(str)
        return df
    return tracks.ingest_ngsim(path, unit=unit or "feet")


def build_samples(df: pd.DataFrame, graph, stride_seconds: float = 1.0) -> list[Sample]:
    """8 s windows per vehicle over contiguous frame runs, with scenes and
    behaviour labels attached."""
    scenes = tracks.table_to_scenes(df)
    samples: list[Sample] = []
    for vid in df["vehicle_id"].astype(str).unique():
        sub = tracks.vehicle_frames(df, vid)
        frames = sub["frame"].to_numpy()
        states = [s for f in frames for s in scenes[int(f)] if s.id == vid]
        for start, length in tracks.contiguous_runs(frames):
            run = states[start:start + length]
            first_frame = int(frames[start])
            scene_by_offset = {
                i: scenes.get(first_frame + i, []) for i in range(length)
            }
            samples.extend(metrics.segment(run, scene_by_offset, stride_seconds))
    labelled = []
    for s in samples:
        try:
            label = metrics.label_behaviour(s, graph)
        except OffRoadError:
            continue
        labelled.append(Sample(s.target_id, s.history, s.future, s.scene, label))
    return labelled


def _future_distances(sample: Sample) -> np.ndarray:
    """Ground-truth cumulative distance travelled at 1..5 s."""
    pos = np.array([sample.current.position]
                   + [f.position for f in sample.future])
    steps = np.hypot(*np.diff(pos, axis=0).T)
    cum = np.cumsum(steps)
    return cum[np.array(HORIZONS) * FRAME_RATE - 1]


def _change_side(sample: Sample, graph) -> str | None:
    """Side of the observed lane change, from the lateral offset evolution."""
    cur = locate_agent(graph, sample.current.pose)
    lane = graph.lane(cur.lane_id)
    for state in sample.future:
        loc = locate_agent(graph, state.pose)
        if loc.lane_id != cur.lane_id:
            if loc.lane_id == lane.left:
                return "left"
            if loc.lane_id == lane.right:
                return "right"
            break
    return None


def build_training_sets(samples: list[Sample], graph) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Feature/target arrays per expert schema with the augmentation rule:
    the expert for k context agents trains on samples with >= k, truncated
    to its schema."""
    rows: dict[str, tuple[list, list]] = {sid: ([], []) for sid in FEATURE_SCHEMAS}
    scene_offset = int(metrics.HISTORY_SECONDS * FRAME_RATE) - 1
    for sample in samples:
        scene = sample.scene.get(scene_offset) or [sample.current]
        try:
            neigh = select_neighbours(scene, sample.target_id, graph)
        except (OffRoadError, StopIteration):
            continue
        target = _future_distances(sample)
        n_front = len(neigh.front)
        if sample.behaviour == "follow_lane":
            for k in range(0, n_front + 1):
                z = follow_lane_features(neigh, k)
                rows[z.schema_id][0].append(z.values)
                rows[z.schema_id][1].append(target)
        else:
            side = _change_side(sample, graph)
            if side is None:
                continue
            n_side = len(neigh.side(side))
            for kf in range(0, n_front + 1):
                for ks in range(0, n_side + 1):
                    z = change_lane_features(neigh, side, kf, ks)
                    rows[z.schema_id][0].append(z.values)
                    rows[z.schema_id][1].append(target)
    return {sid: (np.array(Z), np.array(Y)) for sid, (Z, Y) in rows.items() if Z}


def cmd_synth(args) -> int:
    spec = {"scenario": args.scenario}
    if args.params:
        spec.update(json.loads(args.params))
    table = synth.synth_scenarios(spec, seed=args.seed)
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "tracks.csv", index=False)
    synth.write_fixture_map(synth.scenario_map_name(args.scenario), out / "map.json")
    print(f"wrote {out / 'tracks.csv'} and {out / 'map.json'}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else Config()
    with open(args.map) as f:
        graph = lane_map.load_lane_graph(f.read())
    df = _read_tracks(args.tracks, args.unit)
    samples = build_samples(df, graph, cfg.eval.stride_seconds)
    splits = metrics.split_dataset(samples)
    train_samples = splits["train"] or samples
    sets = build_training_sets(train_samples, graph)
    if not sets:
        _fail("no trainable samples in the dataset")

    coll = mdn.init_collection(seed=args.seed)
    report = {}
    for sid in sorted(FEATURE_SCHEMAS):
        if sid not in sets:
            report[sid] = {"samples": 0, "final_nll": None}
            continue
        Z, Y = sets[sid]
        hyper = cfg.train_follow if sid.startswith("follow") else cfg.train_change
        hyper = type(hyper)(lr=hyper.lr, batch=hyper.batch,
                            epochs=hyper.epochs, seed=args.seed)
        model = mdn.train(coll.models[sid], Z, Y, hyper)
        coll.add(model)
        report[sid] = {"samples": int(len(Z)),
                       "final_nll": mdn.mean_nll(model, Z, Y)}

    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mdn.save_collection(coll, out / "experts.json")
    with open(out / "training_report.json", "w") as f:
        json.dump(report, f, indent=2)
    print(f"trained {len(sets)} expert(s); weights in {out / 'experts.json'}")
    return 0


def _profile_predictor(args) -> bayes.ProfilePredictor:
    if args.models:
        coll = mdn.load_collection(FsPath(args.models) / "experts.json")
        return bayes.ExpertProfilePredictor(coll)
    return bayes.PhysicsProfilePredictor(args.baseline)


def run_prediction(df: pd.DataFrame, graph, profiles, cfg: Config):
    """Yield one JSON-ready record per (agent, frame) with a full horizon of
    remaining observation."""
    scenes = tracks.table_to_scenes(df)
    for vid in df["vehicle_id"].astype(str).unique():
        sub = tracks.vehicle_frames(df, vid)
        frames = sub["frame"].to_numpy()
        geom = pursuit.VehicleGeometry(
            wheelbase=max(1.0, float(sub["length"].iloc[0]) * 0.6),
            rear_to_centre=max(0.5, float(sub["length"].iloc[0]) * 0.3))
        for start, length in tracks.contiguous_runs(frames):
            predictor = bayes.Predictor(graph, profiles, cfg.bayes,
                                        cfg.pursuit, geom)
            for i in range(start, start + length):
                frame = int(frames[i])
                scene = scenes[frame]
                t0 = time.perf_counter()
                try:
                    posterior = predictor.step(scene, vid, frame / FRAME_RATE)
                except OffRoadError:
                    predictor.state = bayes.PredictorState()
                    continue
                elapsed = time.perf_counter() - t0
                best = posterior.most_likely()
                yield {
                    "agent": vid,
                    "frame": frame,
                    "posterior": [
                        {"kind": e.goal.kind.name.lower(),
                         "target_lane": e.goal.target_lane,
                         "probability": e.probability}
                        for e in posterior.entries
                    ],
                    "best": {
                        "kind": best.goal.kind.name.lower(),
                        "target_lane": best.goal.target_lane,
                        "trajectory": best.trajectory.states.tolist(),
                        "profile_speeds": best.profile.speeds.tolist(),
                        "profile_stds": best.profile.distance_stds.tolist(),
                    },
                    "timing_ms": {
                        "total": elapsed * 1e3,
                        "feature_extraction":
                            predictor.last_timing.feature_extraction * 1e3,
                        "profile_prediction":
                            predictor.last_timing.profile_prediction * 1e3,
                        "inference": predictor.last_timing.inference * 1e3,
                    },
                }


def cmd_predict(args) -> int:
    cfg = load_config(args.config) if args.config else Config()
    with open(args.map) as f:
        graph = lane_map.load_lane_graph(f.read())
    df = _read_tracks(args.tracks, args.unit)
    profiles = _profile_predictor(args)
    n = 0
    with open(args.out, "w") as f:
        f.write(json.dumps({"format": LOG_FORMAT}) + "\n")
        for record in run_prediction(df, graph, profiles, cfg):
            f.write(json.dumps(record) + "\n")
            n += 1
    print(f"wrote {n} prediction record(s) to {args.out}")
    return 0


def _evaluable_records(log_path, df: pd.DataFrame):
    """(record, gt future states) pairs with a full 5 s of ground truth."""
    horizon_frames = int(metrics.FUTURE_SECONDS * FRAME_RATE)
    by_vehicle = {
        vid: {int(r.frame): r for r in tracks.vehicle_frames(df, vid)
              .itertuples(index=False)}
        for vid in df["vehicle_id"].astype(str).unique()
    }
    with open(log_path) as f:
        header = json.loads(f.readline())
        if header.get("format") != LOG_FORMAT:
            raise ValueError(f"unsupported log format {header.get('format')!r}")
        for line in f:
            rec = json.loads(line)
            rows = by_vehicle.get(rec["agent"], {})
            future = [rows.get(rec["frame"] + k)
                      for k in range(1, horizon_frames + 1)]
            if all(r is not None for r in future):
                yield rec, future


def _evaluate(log_path, df, graph) -> dict[str, dict[str, MetricReport]]:
    """Metric reports per model row (engine, cv, da) per stratum."""
    groups: dict[str, dict] = {}
    for rec, future in _evaluable_records(log_path, df):
        gt_pos = np.array([[r.x, r.y] for r in future])
        # ground-truth cumulative distance from the current position
        row0 = df[(df["vehicle_id"].astype(str) == rec["agent"])
                  & (df["frame"] == rec["frame"])].iloc[0]
        pos = np.vstack([[[row0.x, row0.y]], gt_pos])
        cum = np.cumsum(np.hypot(*np.diff(pos, axis=0).T))
        gt_dist = cum[np.array(HORIZONS) * FRAME_RATE - 1]

        speed0, heading0 = float(row0.speed), float(row0.heading)
        accel0 = float(row0.acceleration)
        t = np.arange(1, len(future) + 1) / FRAME_RATE
        cv_pos = np.stack([row0.x + speed0 * t * math.cos(heading0),
                           row0.y + speed0 * t * math.sin(heading0)], axis=1)
        decay = mdn.DA_DECAY_TIME
        da_d = (speed0 * t + accel0 * decay
                * (t - decay * (1.0 - np.exp(-t / decay))))
        da_pos = np.stack([row0.x + da_d * math.cos(heading0),
                           row0.y + da_d * math.sin(heading0)], axis=1)

        engine_pos = np.asarray(rec["best"]["trajectory"])[:, :2]
        engine_mu = np.cumsum(rec["best"]["profile_speeds"])
        engine_var = np.square(rec["best"]["profile_stds"])
        base_std = mdn.DEFAULT_BASELINE_STDS

        # behaviour stratum from the future lane membership
        stratum = "follow_lane"
        try:
            current_pose = (row0.x, row0.y, heading0)
            lane0 = locate_agent(graph, current_pose).lane_id
            for r in future:
                if locate_agent(graph, (r.x, r.y, r.heading)).lane_id != lane0:
                    stratum = "change_lane"
                    break
        except OffRoadError:
            stratum = "change_lane"

        for key in ("overall", stratum):
            g = groups.setdefault(key, {"engine_pos": [], "cv_pos": [],
                                        "da_pos": [], "gt_pos": [],
                                        "engine_mix": [], "cv_mix": [],
                                        "da_mix": [], "gt_dist": []})
            g["engine_pos"].append(engine_pos)
            g["cv_pos"].append(cv_pos)
            g["da_pos"].append(da_pos)
            g["gt_pos"].append(gt_pos)
            g["gt_dist"].append(gt_dist)
            g["engine_mix"].append(([1.0], engine_mu[None, :], engine_var[None, :]))
            cv_mu = speed0 * np.asarray(HORIZONS, float)
            g["cv_mix"].append(([1.0], cv_mu[None, :],
                                np.square(base_std)[None, :]))
            da_mu = np.interp(np.asarray(HORIZONS, float), t, da_d)
            g["da_mix"].append(([1.0], da_mu[None, :],
                                np.square(base_std)[None, :]))

    out: dict[str, dict[str, MetricReport]] = {}
    for stratum, g in groups.items():
        reports = {}
        for model in ("engine", "cv", "da"):
            rep = MetricReport()
            for h in HORIZONS:
                rep.rmse[h] = metrics.rmse(g[f"{model}_pos"], g["gt_pos"], h)
                rep.fde[h] = metrics.fde(g[f"{model}_pos"], g["gt_pos"], h)
            rep.mnll = metrics.mnll(g[f"{model}_mix"], g["gt_dist"])
            rep.counts[stratum] = len(g["gt_pos"])
            reports[model] = rep
        out[stratum] = reports
    return out


def cmd_eval(args) -> int:
    with open(args.map) as f:
        graph = lane_map.load_lane_graph(f.read())
    df = _read_tracks(args.tracks, args.unit)
    results = _evaluate(args.log, df, graph)
    if not results:
        _fail("no evaluable prediction records (need 5 s of ground truth "
              "beyond each logged frame)")
    doc = {stratum: {model: rep.as_dict() for model, rep in reps.items()}
           for stratum, reps in results.items()}
    if args.out:
        with open(args.out, "w") as f:
            json.dump(doc, f, indent=2)
    for stratum, reps in results.items():
        n = next(iter(reps.values())).counts[stratum]
        print(f"\n== {stratum} (n={n}) ==")
        print(metrics.format_table(reps))
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config) if args.config else Config()
    with open(args.map) as f:
        graph = lane_map.load_lane_graph(f.read())
    df = _read_tracks(args.tracks, args.unit)
    profiles = _profile_predictor(args)
    scenes = tracks.table_to_scenes(df)
    frames = sorted(scenes)
    vid = str(df["vehicle_id"].iloc[0])
    geom = pursuit.VehicleGeometry(2.7, 1.35)
    predictor = bayes.Predictor(graph, profiles, cfg.bayes, cfg.pursuit, geom)
    totals, comp = [], {"feature_extraction": [], "profile_prediction": [],
                        "inference": []}
    n_calls = args.calls
    i = 0
    while len(totals) < n_calls:
        frame = frames[i % len(frames)]
        i += 1
        if i % len(frames) == 0:
            predictor.state = bayes.PredictorState()
        t0 = time.perf_counter()
        try:
            predictor.step(scenes[frame], vid)
        except OffRoadError:
            continue
        totals.append((time.perf_counter() - t0) * 1e3)
        comp["feature_extraction"].append(
            predictor.last_timing.feature_extraction * 1e3)
        comp["profile_prediction"].append(
            predictor.last_timing.profile_prediction * 1e3)
        comp["inference"].append(predictor.last_timing.inference * 1e3)
    doc = {
        "calls": len(totals),
        "median_ms": statistics.median(totals),
        "mean_ms": statistics.fmean(totals),
        "components_median_ms": {k: statistics.median(v)
                                 for k, v in comp.items()},
    }
    if args.out:
        with open(args.out, "w") as f:
            json.dump(doc, f, indent=2)
    print(json.dumps(doc, indent=2))
    return 0


def _fail(message: str) -> None:
    print(json.dumps({"error": message}), file=sys.stderr)
    raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hwpredict",
                                description="Highway motion prediction engine")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a scripted scenario")
    sp.add_argument("--scenario", required=True, choices=sorted(synth.SCENARIOS))
    sp.add_argument("--params", help="JSON overrides for the scenario")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", help="train the expert collection")
    tp.add_argument("--config")
    tp.add_argument("--map", required=True)
    tp.add_argument("--tracks", required=True)
    tp.add_argument("--unit", choices=["feet", "metres"])
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--out", required=True, help="output directory")
    tp.set_defaults(func=cmd_train)

    pp = sub.add_parser("predict", help="run the predictor over tracks")
    pp.add_argument("--config")
    pp.add_argument("--map", required=True)
    pp.add_argument("--tracks", required=True)
    pp.add_argument("--unit", choices=["feet", "metres"])
    pp.add_argument("--models", help="directory with experts.json")
    pp.add_argument("--baseline", choices=["cv", "da"], default="cv",
                    help="profile baseline when no models are given")
    pp.add_argument("--out", required=True, help="prediction log path")
    pp.set_defaults(func=cmd_predict)

    ep = sub.add_parser("eval", help="score a prediction log")
    ep.add_argument("--log", required=True)
    ep.add_argument("--map", required=True)
    ep.add_argument("--tracks", required=True)
    ep.add_argument("--unit", choices=["feet", "metres"])
    ep.add_argument("--out", help="metric report JSON path")
    ep.set_defaults(func=cmd_eval)

    bp = sub.add_parser("bench", help="per-component timing")
    bp.add_argument("--config")
    bp.add_argument("--map", required=True)
    bp.add_argument("--tracks", required=True)
    bp.add_argument("--unit", choices=["feet", "metres"])
    bp.add_argument("--models")
    bp.add_argument("--baseline", choices=["cv", "da"], default="cv")
    bp.add_argument("--calls", type=int, default=1000)
    bp.add_argument("--out")
    bp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (ValueError, OSError, KeyError) as e:
        print(json.dumps({"error": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
