"""Site-survey simulator over an occupancy grid.

Stands in for the survey robot and the real RF channel: plans coverage paths
by casting rays from the current position, scoring straight candidate paths
by length minus a revisit penalty, then emits synthetic packets per visited
waypoint through a log-distance path-loss channel with Gaussian shadowing.
Emitted records carry ground-truth positions for training and evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .capture import FrameKind, Link, PacketRecord

SPEED_OF_LIGHT_M_PER_S = 2.998e8

OCCUPIED, FREE, UNKNOWN = 1, 0, 2
_CELL_CHARS = {"#": OCCUPIED, ".": FREE, "?": UNKNOWN}
_CHAR_CELLS = {v: k for k, v in _CELL_CHARS.items()}

WAYPOINT_SPACING_M = 0.5
SCORE_ALPHA = 1.0
SCORE_BETA = 2.0
REVISIT_RADIUS_M = 0.25
FTM_TURNAROUND_NS = 10_000


class SurveyComplete(Exception):
    """No unobstructed candidate path scores positive: the survey is done."""


class PlannerContractError(ValueError):
    """A waypoint fell outside the map the planner was given."""


@dataclass
class SiteMap:
    """2-D occupancy grid.  cells[row, col] with row = y index, col = x index;
    the cell (c, r) spans [c*res, (c+1)*res) x [r*res, (r+1)*res)."""

    width: int
    height: int
    resolution_m: float
    site_id: str
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.shape != (self.height, self.width):
            raise ValueError("cells shape does not match width/height")
        border = np.concatenate([self.cells[0], self.cells[-1],
                                 self.cells[:, 0], self.cells[:, -1]])
        if not (border == OCCUPIED).all():
            raise ValueError("border cells must be occupied")
        if not (self.cells == FREE).any():
            raise ValueError("map has no free cells")

    @classmethod
    def parse(cls, text: str) -> "SiteMap":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        width_s, height_s, res_s, site_id = lines[0].split()
        width, height, res = int(width_s), int(height_s), float(res_s)
        rows = lines[1:]
        if len(rows) != height or any(len(r) != width for r in rows):
            raise ValueError("grid rows do not match declared dimensions")
        cells = np.array([[_CELL_CHARS[ch] for ch in row] for row in rows],
                         dtype=np.uint8)
        return cls(width, height, res, site_id, cells)

    @classmethod
    def load(cls, path: str | Path) -> "SiteMap":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def dump(self) -> str:
        lines = [f"{self.width} {self.height} {self.resolution_m} {self.site_id}"]
        lines.extend("".join(_CHAR_CELLS[int(c)] for c in row) for row in self.cells)
        return "\n".join(lines) + "\n"

    def cell_of(self, pos: Sequence[float]) -> tuple[int, int]:
        return (int(pos[0] // self.resolution_m), int(pos[1] // self.resolution_m))

    def cell_center(self, col: int, row: int) -> np.ndarray:
        return np.array([(col + 0.5) * self.resolution_m,
                         (row + 0.5) * self.resolution_m])

    def occupied_at(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized occupancy lookup; out-of-bounds counts as occupied."""
        cols = np.floor(xs / self.resolution_m).astype(np.int64)
        rows = np.floor(ys / self.resolution_m).astype(np.int64)
        out = np.ones(cols.shape, dtype=bool)
        inside = (cols >= 0) & (cols < self.width) & (rows >= 0) & (rows < self.height)
        ci, ri = cols[inside], rows[inside]
        out[inside] = self.cells[ri, ci] == OCCUPIED
        return out

    def is_free(self, pos: Sequence[float]) -> bool:
        col, row = self.cell_of(pos)
        if not (0 <= col < self.width and 0 <= row < self.height):
            return False
        return self.cells[row, col] == FREE

    def free_cell_centers(self) -> np.ndarray:
        rows, cols = np.nonzero(self.cells == FREE)
        return np.stack([(cols + 0.5) * self.resolution_m,
                         (rows + 0.5) * self.resolution_m], axis=1)

    def occupied_cell_centers(self) -> np.ndarray:
        rows, cols = np.nonzero(self.cells == OCCUPIED)
        return np.stack([(cols + 0.5) * self.resolution_m,
                         (rows + 0.5) * self.resolution_m], axis=1)


@dataclass
class RouterSpec:
    router_id: str
    pos_m: tuple[float, float]
    supports_ftm: bool
    supports_ble: bool
    p_tx_wifi_dbm: float = 20.0
    p_tx_ble_dbm: float = 4.0


def load_routers(path: str | Path) -> list[RouterSpec]:
    routers = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("router_id"):
            continue
        rid, x, y, ftm, ble, ptw, ptb = line.split(",")
        routers.append(RouterSpec(rid, (float(x), float(y)),
                                  bool(int(ftm)), bool(int(ble)),
                                  float(ptw), float(ptb)))
    return routers


def dump_routers(routers: Sequence[RouterSpec]) -> str:
    lines = ["router_id,x_m,y_m,supports_ftm,supports_ble,p_tx_wifi_dbm,p_tx_ble_dbm"]
    for r in routers:
        lines.append(f"{r.router_id},{r.pos_m[0]},{r.pos_m[1]},"
                     f"{int(r.supports_ftm)},{int(r.supports_ble)},"
                     f"{r.p_tx_wifi_dbm},{r.p_tx_ble_dbm}")
    return "\n".join(lines) + "\n"


@dataclass
class ChannelModel:
    """Log-distance path loss with Gaussian shadowing.

    loss(d) = l0 + 10 n log10(d / d0) + N(0, shadow_sigma); response_rate is
    the probability that a stimulus elicits a packet at all.
    """

    l0_db: float = 40.0
    d0_m: float = 1.0
    exponent_n: float = 3.0
    shadow_sigma_db: float = 4.0
    ftm_jitter_sigma_ns: float = 1.0
    response_rate: float = 1.0

    def __post_init__(self):
        if not 1.5 <= self.exponent_n <= 6.0:
            raise ValueError("path-loss exponent outside [1.5, 6]")
        if self.shadow_sigma_db < 0 or self.ftm_jitter_sigma_ns < 0:
            raise ValueError("sigmas must be non-negative")
        if not 0.0 < self.response_rate <= 1.0:
            raise ValueError("response_rate outside (0, 1]")

    def path_loss_db(self, distance_m: float) -> float:
        d = max(distance_m, 1e-3)
        return self.l0_db + 10.0 * self.exponent_n * math.log10(d / self.d0_m)


@dataclass
class DeviceProfile:
    """The phone ferried around by the survey robot."""

    macs: tuple[str, ...]
    model_info: tuple[tuple[int, bytes], ...]
    p_tx_wifi_dbm: float = 15.0
    p_tx_ble_dbm: Optional[float] = 4.0
    supports_ftm: bool = True
    emit_sqi: bool = True


@dataclass
class SurveyState:
    pos_m: np.ndarray
    rng: np.random.Generator
    visited: list[np.ndarray] = field(default_factory=list)
    path: Optional[list[np.ndarray]] = None
    path_index: int = 0
    time_ns: int = 0
    mac: str = ""
    retraces: int = 0


def segment_clear(site: SiteMap, a: Sequence[float], b: Sequence[float]) -> bool:
    """Supersampled collision check at resolution/4 along [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.hypot(*(b - a)))
    n = max(2, int(length / (site.resolution_m / 4.0)) + 2)
    ts = np.linspace(0.0, 1.0, n)
    xs = a[0] + (b[0] - a[0]) * ts
    ys = a[1] + (b[1] - a[1]) * ts
    return not site.occupied_at(xs, ys).any()


def sample_path_points(start: Sequence[float], end: Sequence[float],
                       spacing: float = WAYPOINT_SPACING_M) -> np.ndarray:
    """Waypoints evenly spaced along [start, end], endpoint included."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    length = float(np.hypot(*(end - start)))
    ts = np.arange(0.0, length, spacing)
    if length > 0 and (len(ts) == 0 or ts[-1] < length):
        ts = np.append(ts, length)
    if length == 0:
        ts = np.array([0.0])
    direction = (end - start) / length if length > 0 else np.zeros(2)
    return start[None, :] + ts[:, None] * direction[None, :]


def path_score(points: np.ndarray, visited: Sequence[np.ndarray],
               alpha: float = SCORE_ALPHA, beta: float = SCORE_BETA,
               radius: float = REVISIT_RADIUS_M) -> float:
    """alpha * geometric length - beta * count of points near visited ones."""
    length = float(np.hypot(*(points[-1] - points[0])))
    if not visited:
        return alpha * length
    tree = cKDTree(np.asarray(visited))
    dists, _ = tree.query(points, k=1, distance_upper_bound=radius)
    return alpha * length - beta * int((dists < radius).sum())


def ray_start_positions(site: SiteMap, pos: Sequence[float],
                        rng: np.random.Generator) -> list[np.ndarray]:
    """One random point on the free segment of each ray from ``pos`` toward
    every occupied cell, truncated at the first obstacle."""
    pos = np.asarray(pos, dtype=float)
    targets = site.occupied_cell_centers()
    starts: list[np.ndarray] = []
    step = site.resolution_m / 4.0
    for target in targets:
        delta = target - pos
        length = float(np.hypot(*delta))
        if length == 0:
            continue
        n = int(length / step) + 2
        ts = np.linspace(0.0, 1.0, n)
        xs = pos[0] + delta[0] * ts
        ys = pos[1] + delta[1] * ts
        occ = site.occupied_at(xs, ys)
        hit = int(np.argmax(occ)) if occ.any() else len(ts)
        if hit <= 1:
            continue  # obstructed immediately; no free segment
        free_end = ts[hit - 1] * length
        starts.append(pos + delta / length * rng.uniform(0.0, free_end))
    return starts


def plan_next_path(state: SurveyState, site: SiteMap) -> list[np.ndarray]:
    """Pick the best-scoring unobstructed straight path for the next leg.

    Candidates run from a random point per unobstructed ray to every free
    cell center, sampled every 0.5 m.  Score ties break toward the lowest
    endpoint (y, then x).  Raises SurveyComplete when no candidate clears
    obstacles with a positive score.
    """
    starts = ray_start_positions(site, state.pos_m, state.rng)
    ends = site.free_cell_centers()
    if not starts or not len(ends):
        raise SurveyComplete
    visited_tree = cKDTree(np.asarray(state.visited)) if state.visited else None

    candidates = []  # (neg_score, end_y, end_x, start_idx, end_idx)
    spacing = WAYPOINT_SPACING_M
    for si, start in enumerate(starts):
        deltas = ends - start[None, :]
        lengths = np.hypot(deltas[:, 0], deltas[:, 1])
        max_len = float(lengths.max())
        ts = np.arange(0.0, max_len + spacing, spacing)
        tgrid = np.minimum(ts[None, :], lengths[:, None])
        with np.errstate(invalid="ignore", divide="ignore"):
            dirs = np.where(lengths[:, None] > 0, deltas / lengths[:, None], 0.0)
        px = start[0] + dirs[:, 0:1] * tgrid
        py = start[1] + dirs[:, 1:2] * tgrid
        occupied = site.occupied_at(px.ravel(), py.ravel()).reshape(px.shape)
        blocked = occupied.any(axis=1)
        # Valid sample columns per candidate: the strict interior spacing
        # steps plus one clamped column holding the exact endpoint, matching
        # sample_path_points.
        interior = np.ceil(lengths / spacing - 1e-12).astype(np.int64)
        valid = np.arange(len(ts))[None, :] <= interior[:, None]
        if visited_tree is not None:
            d, _ = visited_tree.query(
                np.stack([px.ravel(), py.ravel()], axis=1),
                k=1, distance_upper_bound=REVISIT_RADIUS_M)
            near = (d < REVISIT_RADIUS_M).reshape(px.shape) & valid
            penalties = near.sum(axis=1)
        else:
            penalties = np.zeros(len(ends), dtype=np.int64)
        scores = SCORE_ALPHA * lengths - SCORE_BETA * penalties
        for ei in np.nonzero(~blocked & (scores > 0))[0]:
            candidates.append((-scores[ei], ends[ei, 1], ends[ei, 0], si, int(ei)))

    candidates.sort()
    for neg_score, _, _, si, ei in candidates:
        start, end = starts[si], ends[ei]
        if segment_clear(site, start, end):
            return [p for p in sample_path_points(start, end)]
    raise SurveyComplete


def _emit_packets(state: SurveyState, routers: Sequence[RouterSpec],
                  channel: ChannelModel, profile: DeviceProfile) -> list[PacketRecord]:
    records = []
    rng = state.rng
    pos = state.pos_m
    truth = (float(pos[0]), float(pos[1]))
    for router in routers:
        d = float(np.hypot(pos[0] - router.pos_m[0], pos[1] - router.pos_m[1]))
        base_loss = channel.path_loss_db(d)

        def rssi(p_tx: float) -> int:
            shadow = rng.normal(0.0, channel.shadow_sigma_db) \
                if channel.shadow_sigma_db > 0 else 0.0
            return int(np.clip(round(p_tx - base_loss - shadow), -101, 0))

        if rng.random() < channel.response_rate:
            records.append(PacketRecord(
                timestamp_ns=state.time_ns, router_id=router.router_id,
                link=Link.WIFI, frame_kind=FrameKind.PROBE_REQ, to_ds=0,
                from_ds=0, src_mac=state.mac,
                rssi_dbm=(r := rssi(profile.p_tx_wifi_dbm)),
                sqi=_sqi_of(r) if profile.emit_sqi else None,
                model_info=profile.model_info, truth_pos_m=truth))
        if router.supports_ble and profile.p_tx_ble_dbm is not None \
                and rng.random() < channel.response_rate:
            records.append(PacketRecord(
                timestamp_ns=state.time_ns, router_id=router.router_id,
                link=Link.BLE, frame_kind=FrameKind.BLE_ADV, to_ds=0, from_ds=0,
                src_mac=state.mac, rssi_dbm=rssi(profile.p_tx_ble_dbm),
                ble_tx_power_dbm=int(round(profile.p_tx_ble_dbm)),
                truth_pos_m=truth))
        if router.supports_ftm and profile.supports_ftm \
                and rng.random() < channel.response_rate:
            tof_ns = d / SPEED_OF_LIGHT_M_PER_S * 1e9
            jitter = (rng.normal(0.0, channel.ftm_jitter_sigma_ns),
                      rng.normal(0.0, channel.ftm_jitter_sigma_ns)) \
                if channel.ftm_jitter_sigma_ns > 0 else (0.0, 0.0)
            t1 = state.time_ns
            t2 = t1 + round(tof_ns + jitter[0])
            t3 = t2 + FTM_TURNAROUND_NS
            t4 = t3 + round(tof_ns + jitter[1])
            records.append(PacketRecord(
                timestamp_ns=state.time_ns, router_id=router.router_id,
                link=Link.WIFI, frame_kind=FrameKind.FTM, to_ds=0, from_ds=0,
                src_mac=state.mac, rssi_dbm=rssi(profile.p_tx_wifi_dbm),
                ftm_times_ns=(t1, t2, t3, t4), truth_pos_m=truth))
    return records


def _sqi_of(rssi_dbm: int) -> int:
    return int(np.clip(round((rssi_dbm + 101) * 100 / 101), 0, 100))


def step_and_emit(state: SurveyState, site: SiteMap,
                  routers: Sequence[RouterSpec], channel: ChannelModel,
                  profile: DeviceProfile,
                  waypoint_dt_ns: int = 100_000) -> list[PacketRecord]:
    """Advance one waypoint of the active path and emit packets there.

    If the segment to the next waypoint is blocked, the robot retraces to
    the start of the current path and emits nothing.  State is mutated in
    place; emitted records are returned.
    """
    if not state.path or state.path_index >= len(state.path):
        raise PlannerContractError("no active path; call plan_next_path first")
    target = state.path[state.path_index]
    if not site.is_free(target):
        raise PlannerContractError(f"waypoint {target} is not on a free cell")
    state.time_ns += waypoint_dt_ns
    if not segment_clear(site, state.pos_m, target):
        state.pos_m = state.path[0].copy()
        state.path = None
        state.path_index = 0
        state.retraces += 1
        return []
    state.pos_m = np.asarray(target, dtype=float)
    state.path_index += 1
    if state.path_index >= len(state.path):
        state.path = None
        state.path_index = 0
    # Visited positions stay non-repeating within the revisit radius.
    if not state.visited or _min_dist(state.visited, state.pos_m) >= REVISIT_RADIUS_M:
        state.visited.append(state.pos_m.copy())
    return _emit_packets(state, routers, channel, profile)


def _min_dist(visited: Sequence[np.ndarray], pos: np.ndarray) -> float:
    arr = np.asarray(visited)
    return float(np.hypot(arr[:, 0] - pos[0], arr[:, 1] - pos[1]).min())


@dataclass
class SurveyRun:
    """One trajectory's worth of capture: records, the truth track, and the
    motion log for collision/coverage audits."""

    records: list[PacketRecord]
    truth: list[tuple[int, float, float]]
    mac: str
    waypoints: list[tuple[float, float]] = field(default_factory=list)
    visited: list[tuple[float, float]] = field(default_factory=list)
    retraces: int = 0


def run_survey(site: SiteMap, routers: Sequence[RouterSpec],
               channel: ChannelModel, seed: int, n_trajectories: int,
               profile: DeviceProfile, waypoint_dt_ns: int = 100_000,
               start_time_ns: int = 1_700_000_000_000_000_000,
               max_steps: int = 200_000, plan_patience: int = 5) -> list[SurveyRun]:
    """Run coverage surveys until completion, one per trajectory.

    Deterministic for a given seed; each trajectory draws from its own
    spawned RNG stream and uses the next MAC of the device profile.  Because
    ray starts are random, a single empty planning round can be unlucky, so
    completion requires ``plan_patience`` consecutive empty rounds.
    """
    for router in routers:
        if not site.is_free(router.pos_m):
            raise ValueError(f"router {router.router_id} at {router.pos_m} "
                             f"is not on a free cell")
    runs = []
    streams = np.random.SeedSequence(seed).spawn(n_trajectories)
    for i in range(n_trajectories):
        rng = np.random.default_rng(streams[i])
        free = site.free_cell_centers()
        start = free[rng.integers(len(free))]
        state = SurveyState(pos_m=np.asarray(start, dtype=float), rng=rng,
                            time_ns=start_time_ns + i * 3_600_000_000_000,
                            mac=profile.macs[i % len(profile.macs)])
        records: list[PacketRecord] = []
        truth: list[tuple[int, float, float]] = []
        waypoints: list[tuple[float, float]] = []
        steps = 0
        empty_rounds = 0
        while steps < max_steps:
            if state.path is None:
                try:
                    state.path = plan_next_path(state, site)
                    state.path_index = 0
                    empty_rounds = 0
                except SurveyComplete:
                    empty_rounds += 1
                    if empty_rounds >= plan_patience:
                        break
                    continue
            retraces_before = state.retraces
            emitted = step_and_emit(state, site, routers, channel, profile,
                                    waypoint_dt_ns=waypoint_dt_ns)
            if state.retraces == retraces_before:
                waypoints.append((float(state.pos_m[0]), float(state.pos_m[1])))
            if emitted:
                truth.append((state.time_ns, float(state.pos_m[0]),
                              float(state.pos_m[1])))
            records.extend(emitted)
            steps += 1
        runs.append(SurveyRun(records=records, truth=truth, mac=state.mac,
                              waypoints=waypoints,
                              visited=[(float(v[0]), float(v[1]))
                                       for v in state.visited],
                              retraces=state.retraces))
    return runs


def truth_to_csv(truth: Sequence[tuple[int, float, float]]) -> str:
    lines = ["t_ns,x_m,y_m"]
    lines.extend(f"{t},{x!r},{y!r}" for t, x, y in truth)
    return "\n".join(lines) + "\n"


def truth_from_csv(text: str) -> list[tuple[int, float, float]]:
    out = []
    for line in text.splitlines()[1:]:
        if not line.strip():
            continue
        t, x, y = line.split(",")
        out.append((int(t), float(x), float(y)))
    return out
