"""Trajectory synthesis, baselines, and localization metrics.

Training sequences are grown from survey points by rejection sampling: a
step from the current point to a uniformly drawn candidate is accepted when
it is shorter than |k| for a fresh k ~ Normal(0, 1 m).  A masked k-nearest
neighbour fingerprint matcher serves as an independent baseline against the
BiLSTM, and RMSE/MAE are computed on Euclidean per-point errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .capture import PacketRecord
from .features import (Deployment, FeatureFrame, FeatureKind, RSSI_PAD_DBM,
                       TOF_PAD_NS, round_to_grid, synchronize)

GRID_NS = 100_000


class GenerationStallError(RuntimeError):
    """Rejection sampling failed to accept a step within the attempt budget."""


@dataclass(frozen=True)
class SurveyPoint:
    pos_m: tuple[float, float]
    frame: FeatureFrame


@dataclass(frozen=True)
class TrajectoryPoint:
    t_ns: int
    pos_m: tuple[float, float]
    frame: FeatureFrame


@dataclass
class Trajectory:
    points: list[TrajectoryPoint]
    accepted_k: list[float] = field(default_factory=list)


@dataclass
class LocalizationMetrics:
    rmse_m: float
    mae_m: float
    errors_m: np.ndarray


def survey_points_from_records(records: Sequence[PacketRecord],
                               deployment: Deployment,
                               wifi_tx_dbm: Optional[float] = None) -> list[SurveyPoint]:
    """Pair synchronized frames with the simulator's ground-truth positions.

    A frame becomes a survey point when some record in its grid slot carries
    a truth position; the first one in the slot wins.
    """
    truth_by_slot: dict[int, tuple[float, float]] = {}
    for r in records:
        if r.truth_pos_m is not None:
            truth_by_slot.setdefault(round_to_grid(r.timestamp_ns), r.truth_pos_m)
    frames = synchronize(records, deployment, wifi_tx_dbm=wifi_tx_dbm)
    return [SurveyPoint(pos_m=truth_by_slot[f.t_ns], frame=f)
            for f in frames if f.t_ns in truth_by_slot]


def generate_trajectories(survey_points: Sequence[SurveyPoint], n: int,
                          length: int = 20, seed: int = 0,
                          max_rejects: int = 10**6) -> list[Trajectory]:
    """Grow ``n`` random trajectories of ``length`` points over the survey.

    Starting from a uniform random survey point, another point is drawn
    uniformly as the candidate and accepted when closer than |k|, for a
    fresh k ~ Normal(0, 1 m) per attempt.  Drawing the current point again
    counts as a rejection, so a singleton survey stalls.  Deterministic for
    a given seed.
    """
    if not survey_points:
        raise ValueError("survey_points is empty")
    rng = np.random.default_rng(seed)
    positions = np.array([p.pos_m for p in survey_points])
    trajectories = []
    for _ in range(n):
        idx = int(rng.integers(len(survey_points)))
        chosen = [idx]
        ks: list[float] = []
        rejects = 0
        while len(chosen) < length:
            cand = int(rng.integers(len(survey_points)))
            k = float(rng.normal(0.0, 1.0))
            d = float(np.hypot(*(positions[cand] - positions[chosen[-1]])))
            if cand != chosen[-1] and d < abs(k):
                chosen.append(cand)
                ks.append(k)
            else:
                rejects += 1
                if rejects > max_rejects:
                    raise GenerationStallError(
                        f"{rejects} rejected candidates for one trajectory")
        points = [TrajectoryPoint(t_ns=j * GRID_NS,
                                  pos_m=survey_points[i].pos_m,
                                  frame=survey_points[i].frame)
                  for j, i in enumerate(chosen)]
        trajectories.append(Trajectory(points=points, accepted_k=ks))
    return trajectories


def normalize_features(values: np.ndarray, deployment: Deployment) -> np.ndarray:
    """Affine map onto roughly unit scale: RSSI-family entries from
    [-101, 0] to [0, 1] and ToF entries from [0, 200] ns to [0, 1]."""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    for j, col in enumerate(deployment.columns):
        if col.kind is FeatureKind.TOF:
            out[..., j] = values[..., j] / TOF_PAD_NS
        else:
            out[..., j] = (values[..., j] - RSSI_PAD_DBM) / (-RSSI_PAD_DBM)
    return out


def trajectories_to_arrays(trajectories: Sequence[Trajectory],
                           deployment: Deployment) -> tuple[np.ndarray, np.ndarray]:
    """Stack trajectories into normalized (N, T, F) inputs and (N, T, 2)
    position targets."""
    x = np.array([[p.frame.values for p in tr.points] for tr in trajectories])
    y = np.array([[p.pos_m for p in tr.points] for tr in trajectories])
    return normalize_features(x, deployment), y


def frames_to_inputs(frames: Sequence[FeatureFrame],
                     deployment: Deployment) -> np.ndarray:
    return normalize_features(np.array([f.values for f in frames]), deployment)


def knn_predict(survey_points: Sequence[SurveyPoint],
                frames: Sequence[FeatureFrame], k: int,
                deployment: Deployment) -> np.ndarray:
    """Masked k-NN baseline: per query frame, the mean position of the k
    survey frames nearest in masked (both-measured) normalized feature
    distance."""
    if not survey_points:
        raise ValueError("empty survey")
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, len(survey_points))
    s_vals = normalize_features(
        np.array([p.frame.values for p in survey_points]), deployment)
    s_mask = np.array([p.frame.mask for p in survey_points], dtype=bool)
    positions = np.array([p.pos_m for p in survey_points])
    out = np.empty((len(frames), 2))
    for qi, frame in enumerate(frames):
        q = normalize_features(frame.values[None, :], deployment)[0]
        overlap = s_mask & frame.mask.astype(bool)[None, :]
        diff = np.where(overlap, s_vals - q[None, :], 0.0)
        counts = overlap.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            d = np.sqrt((diff * diff).sum(axis=1) / counts)
        d[counts == 0] = np.inf
        nearest = np.argsort(d, kind="stable")[:k]
        out[qi] = positions[nearest].mean(axis=0)
    return out


def evaluate(pred: np.ndarray, truth: np.ndarray) -> LocalizationMetrics:
    """RMSE and MAE over Euclidean per-point errors."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    errors = np.hypot(pred[:, 0] - truth[:, 0], pred[:, 1] - truth[:, 1])
    rmse = float(np.sqrt((errors ** 2).mean()))
    mae = float(errors.mean())
    return LocalizationMetrics(rmse_m=rmse, mae_m=mae, errors_m=errors)


def metrics_report_csv(rows: Sequence[dict]) -> str:
    """CSV in the localization-performance table layout."""
    header = "location,method,aps,rmse_m,mae_m,train_s,test_us"
    lines = [header]
    for row in rows:
        lines.append(f"{row['location']},{row['method']},{row['aps']},"
                     f"{row['rmse_m']:.3f},{row['mae_m']:.3f},"
                     f"{row.get('train_s', 0.0):.2f},{row.get('test_us', 0.0):.0f}")
    return "\n".join(lines) + "\n"
