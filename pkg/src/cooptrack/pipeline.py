"""Scene-level pipeline: run a tracking model over a scene, persist the
per-frame track output and the assignment log, and evaluate metrics."""

import csv
import os

import numpy as np

from . import metrics as metrics_mod
from . import scene_sim
from .config import RunConfig
from .errors import DataError
from .track_manager import TrackManager, TrackStatus

TRACK_HEADER = ("t", "track_id", "x", "y", "gamma", "gamma_dot", "v", "valid")
ASSIGN_HEADER = ("t", "track_id", "detection_id", "device_bound")

MODEL_POSITION_ONLY = "P"
MODEL_COOPERATIVE = "C"


def run_tracking(scene: scene_sim.Scene, model: str, cfg: RunConfig):
    """Run one model over a scene.

    Returns (track_rows, assignment_rows): per-frame state rows for every
    live track and the assignment log.  Model P never looks at the device
    stream; model C binds it via the penalized Mahalanobis distance.
    """
    if model not in (MODEL_POSITION_ONLY, MODEL_COOPERATIVE):
        raise ValueError(f"unknown model: {model}")
    manager = TrackManager(cfg.manager_coop, process=cfg.process,
                           noise=cfg.measurement, device_gate=cfg.device_gate)
    times = scene.ground_truth[:, 0]
    det_by_frame = {}
    for row in scene.detections:
        det_by_frame.setdefault(_frame_index(row[0], times), []).append(row[1:3])
    dev_by_frame = {}
    if model == MODEL_COOPERATIVE:
        for row in scene.device:
            dev_by_frame[_frame_index(row[0], times)] = (row[1], row[2], row[3])

    track_rows = []
    assign_rows = []
    for i, t in enumerate(times):
        dets = det_by_frame.get(i, [])
        log = manager.step(dets, float(t), device=dev_by_frame.get(i))
        for rec in log:
            det_id = "NONE" if rec.detection_id is None else rec.detection_id
            assign_rows.append((rec.t, rec.track_id, det_id, int(rec.device_bound)))
        for track in manager.tracks:
            s = track.estimate.state
            track_rows.append((float(t), track.id, s.x, s.y, s.gamma, s.gamma_dot,
                               s.v, int(track.status is TrackStatus.VALID)))
    return track_rows, assign_rows


def _frame_index(t, times):
    dt = times[1] - times[0] if len(times) > 1 else 1.0
    return int(round((t - times[0]) / dt))


# -- persistence -------------------------------------------------------------

def _write_rows(path, header, rows, comment):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(comment + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])
    os.replace(tmp, path)


def _fmt(cell):
    if isinstance(cell, float):
        return f"{cell:.6f}"
    return str(cell)


def write_track_output(directory, model, track_rows, assign_rows, cfg: RunConfig,
                       scene_id):
    os.makedirs(directory, exist_ok=True)
    comment = f"# config={cfg.config_hash()} seed={cfg.seed} scene={scene_id} model={model}"
    track_path = os.path.join(directory, f"tracks_{model}.csv")
    _write_rows(track_path, TRACK_HEADER, track_rows, comment)
    _write_rows(os.path.join(directory, f"assignments_{model}.csv"),
                ASSIGN_HEADER, assign_rows, comment)
    return track_path


def read_track_output(path):
    """Track rows from a tracks CSV; returns a list of tuples."""
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        lineno = 0
        header_seen = False
        for row in reader:
            lineno += 1
            if not row or row[0].startswith("#"):
                continue
            if not header_seen:
                if tuple(row) != TRACK_HEADER:
                    raise DataError(f"{path} line {lineno}: expected header "
                                    f"{','.join(TRACK_HEADER)}")
                header_seen = True
                continue
            if len(row) != len(TRACK_HEADER):
                raise DataError(f"{path} line {lineno}: expected "
                                f"{len(TRACK_HEADER)} columns")
            try:
                rows.append((float(row[0]), int(row[1]), float(row[2]),
                             float(row[3]), float(row[4]), float(row[5]),
                             float(row[6]), int(row[7])))
            except ValueError as exc:
                raise DataError(f"{path} line {lineno}: {exc}") from exc
    if not header_seen:
        raise DataError(f"{path} line 1: missing header")
    return rows


# -- evaluation ---------------------------------------------------------------

def evaluate_rows(scene: scene_sim.Scene, track_rows, cfg: RunConfig, model: str):
    """Per-scene metric report for a model's track rows."""
    times = scene.ground_truth[:, 0]
    by_frame = {}
    for row in track_rows:
        t, _tid, x, y = row[0], row[1], row[2], row[3]
        valid = row[7]
        if valid:
            by_frame.setdefault(_frame_index(t, times), []).append((x, y))
    frames = metrics_mod.frames_from_tracks(times, scene.ground_truth[:, 1:3],
                                            by_frame, cfg.metric)
    return metrics_mod.metric_report(scene.scene_id, model, frames, cfg.metric)


def track_and_evaluate(scene: scene_sim.Scene, cfg: RunConfig, out_dir=None):
    """Run every configured model over a scene; returns reports by model."""
    reports = {}
    for model in cfg.models:
        track_rows, assign_rows = run_tracking(scene, model, cfg)
        if out_dir is not None:
            write_track_output(out_dir, model, track_rows, assign_rows, cfg,
                               scene.scene_id)
        reports[model] = evaluate_rows(scene, track_rows, cfg, model)
    return reports


def aggregate(reports):
    """min/max/mean of MOTP and MOTA over a list of per-scene reports."""
    motps = np.array([r["motp"] for r in reports])
    motas = np.array([r["mota"] for r in reports])
    return {
        "n_scenes": len(reports),
        "motp": {"min": float(motps.min()), "max": float(motps.max()),
                 "mean": float(motps.mean())},
        "mota": {"min": float(motas.min()), "max": float(motas.max()),
                 "mean": float(motas.mean())},
    }
