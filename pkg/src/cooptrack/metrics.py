"""Single-object tracking metrics: MOTP, MOTA and the pairwise MOTAP verdict.

Per ground-truth frame the evaluated track is the nearest valid track in the
x-y plane.  A frame with no valid track is a detection miss (dm); a frame
whose nearest track is farther than tau is a localization miss (lm) and
contributes tau to the precision numerator.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError


@dataclass(frozen=True)
class MetricConfig:
    tau: float = 1.0       # miss threshold, m
    alpha: float = 0.025   # MOTA significance
    beta: float = 0.01     # MOTP significance, m

    def __post_init__(self):
        if not (self.tau > 0 and self.alpha > 0 and self.beta > 0):
            raise ValueError("tau, alpha and beta must be strictly positive")


@dataclass(frozen=True)
class FrameRecord:
    t: float
    g: int                 # ground truth exists
    delta: float | None    # distance to nearest valid track, None if no track
    dm: int                # detection miss
    lm: int                # localization miss
    c: int                 # match
    d: float               # capped distance (delta if matched, else 0)

    @classmethod
    def from_distance(cls, t, delta, tau):
        """Build the record for a frame with ground truth present."""
        if delta is None:
            return cls(t=t, g=1, delta=None, dm=1, lm=0, c=0, d=0.0)
        matched = delta <= tau
        return cls(t=t, g=1, delta=float(delta), dm=0,
                   lm=0 if matched else 1, c=1 if matched else 0,
                   d=float(delta) if matched else 0.0)


def motp(frames, cfg: MetricConfig) -> float:
    """Capped mean distance over frames where a track exists; in [0, tau]."""
    num = sum(f.d for f in frames) + cfg.tau * sum(f.lm for f in frames)
    den = sum(f.c for f in frames) + sum(f.lm for f in frames)
    if den == 0:
        raise UndefinedMetricError("MOTP undefined: no matched or localization-miss frames")
    return num / den


def mota(frames) -> float:
    """1 minus the weighted miss rate; localization misses count double."""
    g_total = sum(f.g for f in frames)
    if g_total == 0:
        raise UndefinedMetricError("MOTA undefined: no ground truth frames")
    return 1.0 - sum(f.dm + 2 * f.lm for f in frames) / g_total


def motap(a, b, cfg: MetricConfig) -> int:
    """1 iff tracker A performed significantly better than B on one scene.

    a and b are (MOTA, MOTP) pairs.  A wins with a clear MOTA advantage and
    no meaningful MOTP loss, or with a clear MOTP advantage and no meaningful
    MOTA loss.
    """
    mota_a, motp_a = a
    mota_b, motp_b = b
    cond_accuracy = mota_a > mota_b + cfg.alpha and motp_a < motp_b + cfg.beta
    cond_precision = mota_a > mota_b - cfg.alpha and motp_a < motp_b - cfg.beta
    return 1 if (cond_accuracy or cond_precision) else 0


def frames_from_tracks(gt_times, gt_xy, tracks_by_frame, cfg: MetricConfig):
    """FrameRecords for a scene.

    gt_times/gt_xy: ground truth timestamps and (N, 2) positions;
    tracks_by_frame: mapping frame index -> (k, 2) array of valid-track
    positions at that frame (absent or empty means no valid track).
    """
    gt_xy = np.asarray(gt_xy, dtype=float).reshape(-1, 2)
    frames = []
    for i, t in enumerate(gt_times):
        positions = tracks_by_frame.get(i)
        if positions is None or len(positions) == 0:
            frames.append(FrameRecord.from_distance(float(t), None, cfg.tau))
            continue
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        delta = float(np.hypot(*(pos - gt_xy[i]).T).min())
        frames.append(FrameRecord.from_distance(float(t), delta, cfg.tau))
    return frames


def frame_counts(frames):
    return {
        "matches": int(sum(f.c for f in frames)),
        "dm": int(sum(f.dm for f in frames)),
        "lm": int(sum(f.lm for f in frames)),
    }


def metric_report(scene_id, model_id, frames, cfg: MetricConfig) -> dict:
    """JSON-ready per-scene report."""
    return {
        "scene_id": scene_id,
        "model_id": model_id,
        "motp": motp(frames, cfg),
        "mota": mota(frames),
        "frame_counts": frame_counts(frames),
    }


def pairwise_report(report_a, report_b, cfg: MetricConfig) -> dict:
    """Adds both MOTAP directions for a pair of per-scene reports."""
    a = (report_a["mota"], report_a["motp"])
    b = (report_b["mota"], report_b["motp"])
    return {
        "scene_id": report_a["scene_id"],
        "model_a": report_a["model_id"],
        "model_b": report_b["model_id"],
        "motap_ab": motap(a, b, cfg),
        "motap_ba": motap(b, a, cfg),
    }
