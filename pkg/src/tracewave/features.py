"""Synchronized localization features from mobile-device packets.

Per router the pipeline extracts up to four feature kinds:

    ble   BLE path loss (device TX power minus RX power) when the
          advertisements carry a TX power, else raw BLE RSSI
    sqi   Wi-Fi signal quality index
    tof   one-way time of flight decoded from FTM quadruples
    wifi  Wi-Fi path loss when the device TX power could be inferred,
          else raw Wi-Fi RSSI

Packet timestamps are rounded to a 100 us grid (ties round up), bursts
within one slot are averaged, interior gaps of each series are linearly
interpolated, and everything outside a series' measured span is padded with
-101 dBm (RSSI-family kinds) or 200 ns (time of flight).

Feature frames are dense vectors over a fixed deployment layout: one column
per (router, kind), ordered lexicographically.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .capture import FrameKind, Link, PacketRecord

GRID_NS = 100_000
RSSI_PAD_DBM = -101.0
TOF_PAD_NS = 200.0


class FeatureKind(str, Enum):
    BLE = "ble"
    SQI = "sqi"
    TOF = "tof"
    WIFI = "wifi"


def padding_value(kind: FeatureKind) -> float:
    return TOF_PAD_NS if kind is FeatureKind.TOF else RSSI_PAD_DBM


class NoTxPowerEstimateError(ValueError):
    """No co-located BLE loss / Wi-Fi RX slot to infer the TX power from."""


class FtmMeasurementError(ValueError):
    """Non-monotone FTM quadruple; the sample is dropped."""


def round_to_grid(t_ns: int) -> int:
    """Round a timestamp to the nearest 100 us, ties rounding up."""
    return ((t_ns + GRID_NS // 2) // GRID_NS) * GRID_NS


def ble_path_loss(p_tx_dbm: float, p_rx_dbm: float) -> float:
    """BLE path loss from the advertised TX power and the received power."""
    if not (math.isfinite(p_tx_dbm) and math.isfinite(p_rx_dbm)):
        raise ValueError("powers must be finite")
    return p_tx_dbm - p_rx_dbm


def infer_wifi_tx_power(ble_loss_db: float, p_wifi_rx_dbm: float) -> float:
    """Wi-Fi TX power for one slot, assuming BLE and Wi-Fi path loss match
    at the same position."""
    if not (math.isfinite(ble_loss_db) and math.isfinite(p_wifi_rx_dbm)):
        raise ValueError("inputs must be finite")
    return ble_loss_db + p_wifi_rx_dbm


def wifi_path_loss(p_wifi_tx_dbm: float, p_wifi_rx_dbm: float) -> float:
    """Wi-Fi path loss once the per-model TX power is known."""
    if not (math.isfinite(p_wifi_tx_dbm) and math.isfinite(p_wifi_rx_dbm)):
        raise ValueError("powers must be finite")
    return p_wifi_tx_dbm - p_wifi_rx_dbm


def tof_from_ftm(t1: int, t2: int, t3: int, t4: int) -> float:
    """One-way time of flight from an FTM quadruple.

    RTT = (t4 - t1) - (t3 - t2); ToF = RTT / 2.  Invariant under a constant
    clock offset applied to all four timestamps.
    """
    if t4 <= t1 or t3 < t2:
        raise FtmMeasurementError(f"non-monotone quadruple {(t1, t2, t3, t4)}")
    rtt = (t4 - t1) - (t3 - t2)
    if rtt < 0:
        raise FtmMeasurementError(f"negative round trip in {(t1, t2, t3, t4)}")
    return rtt / 2.0


@dataclass(frozen=True)
class TxPowerEstimate:
    device_key: str
    p_wifi_tx_dbm: float
    n_samples: int


@dataclass(frozen=True, order=True)
class FeatureColumn:
    router_id: str
    kind: FeatureKind

    @property
    def label(self) -> str:
        return f"{self.router_id}:{self.kind.value}"

    @classmethod
    def from_label(cls, label: str) -> "FeatureColumn":
        router_id, _, kind = label.rpartition(":")
        return cls(router_id, FeatureKind(kind))


@dataclass(frozen=True)
class Deployment:
    """Fixed feature layout of a site: the ordered (router, kind) columns."""

    columns: tuple[FeatureColumn, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(sorted(self.columns)))

    @property
    def f_input(self) -> int:
        return len(self.columns)

    def labels(self) -> list[str]:
        return [c.label for c in self.columns]

    def index(self) -> dict[FeatureColumn, int]:
        return {c: i for i, c in enumerate(self.columns)}

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "Deployment":
        return cls(tuple(FeatureColumn.from_label(x) for x in labels))

    @classmethod
    def from_records(cls, records: Sequence[PacketRecord]) -> "Deployment":
        """Derive the layout from what a capture actually contains."""
        cols: set[FeatureColumn] = set()
        for r in records:
            if r.link is Link.BLE:
                cols.add(FeatureColumn(r.router_id, FeatureKind.BLE))
            else:
                cols.add(FeatureColumn(r.router_id, FeatureKind.WIFI))
                if r.sqi is not None:
                    cols.add(FeatureColumn(r.router_id, FeatureKind.SQI))
                if r.frame_kind is FrameKind.FTM and r.ftm_times_ns is not None:
                    cols.add(FeatureColumn(r.router_id, FeatureKind.TOF))
        return cls(tuple(cols))


@dataclass
class FeatureFrame:
    """One synchronized timestep: a dense value per deployment column plus a
    measured/padded mask (1 = backed by measurements, 0 = padding)."""

    t_ns: int
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.uint8)
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask must have the same length")


def _ble_series_uses_loss(records: Sequence[PacketRecord], router_id: str) -> bool:
    ble = [r for r in records if r.link is Link.BLE and r.router_id == router_id]
    return bool(ble) and all(r.ble_tx_power_dbm is not None for r in ble)


def slot_series(records: Sequence[PacketRecord], deployment: Deployment,
                wifi_tx_dbm: Optional[float] = None) -> dict[FeatureColumn, dict[int, float]]:
    """Per-column slot averages for one device's records.

    Timestamps are rounded to the grid and bursts landing in the same slot
    are averaged arithmetically.  Invalid FTM quadruples are dropped.
    Records for routers or kinds outside the deployment are ignored.
    """
    wanted = set(deployment.columns)
    raw: dict[FeatureColumn, dict[int, list[float]]] = {}

    def add(col: FeatureColumn, slot: int, value: float) -> None:
        if col in wanted:
            raw.setdefault(col, {}).setdefault(slot, []).append(value)

    ble_loss_router = {c.router_id: _ble_series_uses_loss(records, c.router_id)
                       for c in deployment.columns if c.kind is FeatureKind.BLE}
    for r in records:
        slot = round_to_grid(r.timestamp_ns)
        if r.link is Link.BLE:
            col = FeatureColumn(r.router_id, FeatureKind.BLE)
            if ble_loss_router.get(r.router_id) and r.ble_tx_power_dbm is not None:
                add(col, slot, ble_path_loss(r.ble_tx_power_dbm, r.rssi_dbm))
            else:
                add(col, slot, float(r.rssi_dbm))
            continue
        if wifi_tx_dbm is not None:
            add(FeatureColumn(r.router_id, FeatureKind.WIFI), slot,
                wifi_path_loss(wifi_tx_dbm, r.rssi_dbm))
        else:
            add(FeatureColumn(r.router_id, FeatureKind.WIFI), slot, float(r.rssi_dbm))
        if r.sqi is not None:
            add(FeatureColumn(r.router_id, FeatureKind.SQI), slot, float(r.sqi))
        if r.frame_kind is FrameKind.FTM and r.ftm_times_ns is not None:
            try:
                tof = tof_from_ftm(*r.ftm_times_ns)
            except FtmMeasurementError:
                continue
            add(FeatureColumn(r.router_id, FeatureKind.TOF), slot,
                min(tof, TOF_PAD_NS))
    return {col: {slot: float(np.mean(vals)) for slot, vals in slots.items()}
            for col, slots in raw.items()}


def estimate_wifi_tx_power(records: Sequence[PacketRecord],
                           device_key: str = "") -> TxPowerEstimate:
    """Median per-device Wi-Fi TX power over co-located slots.

    A co-located slot is one grid slot at one router holding both a BLE path
    loss and a Wi-Fi RX power.
    """
    routers = sorted({r.router_id for r in records})
    samples: list[float] = []
    for router_id in routers:
        if not _ble_series_uses_loss(records, router_id):
            continue
        ble_slots: dict[int, list[float]] = {}
        wifi_slots: dict[int, list[float]] = {}
        for r in records:
            if r.router_id != router_id:
                continue
            slot = round_to_grid(r.timestamp_ns)
            if r.link is Link.BLE and r.ble_tx_power_dbm is not None:
                ble_slots.setdefault(slot, []).append(
                    ble_path_loss(r.ble_tx_power_dbm, r.rssi_dbm))
            elif r.link is Link.WIFI:
                wifi_slots.setdefault(slot, []).append(float(r.rssi_dbm))
        for slot in sorted(ble_slots.keys() & wifi_slots.keys()):
            loss = float(np.mean(ble_slots[slot]))
            rx = float(np.mean(wifi_slots[slot]))
            samples.append(infer_wifi_tx_power(loss, rx))
    if not samples:
        raise NoTxPowerEstimateError("no co-located BLE/Wi-Fi slots")
    return TxPowerEstimate(device_key=device_key,
                           p_wifi_tx_dbm=float(statistics.median(samples)),
                           n_samples=len(samples))


def synchronize(records: Sequence[PacketRecord], deployment: Deployment,
                wifi_tx_dbm: Optional[float] = None) -> list[FeatureFrame]:
    """Emit dense feature frames on the 100 us grid.

    The grid runs from the earliest to the latest measured slot across all
    series.  Within a series' measured span missing slots are linearly
    interpolated; outside it (and for series with no data at all) entries
    hold the padding constant with mask 0.
    """
    series = slot_series(records, deployment, wifi_tx_dbm=wifi_tx_dbm)
    measured = [slots for slots in series.values() if slots]
    if not measured:
        return []
    lo = min(min(slots) for slots in measured)
    hi = max(max(slots) for slots in measured)
    grid = np.arange(lo, hi + GRID_NS, GRID_NS, dtype=np.int64)
    n, f = len(grid), deployment.f_input
    values = np.empty((n, f), dtype=np.float64)
    mask = np.zeros((n, f), dtype=np.uint8)
    for j, col in enumerate(deployment.columns):
        slots = series.get(col, {})
        pad = padding_value(col.kind)
        if not slots:
            values[:, j] = pad
            continue
        xs = np.array(sorted(slots), dtype=np.int64)
        ys = np.array([slots[x] for x in xs], dtype=np.float64)
        span = (grid >= xs[0]) & (grid <= xs[-1])
        values[:, j] = pad
        values[span, j] = np.interp(grid[span].astype(np.float64),
                                    xs.astype(np.float64), ys)
        mask[span, j] = 1
    return [FeatureFrame(int(t), values[i], mask[i]) for i, t in enumerate(grid)]


def _mask_hex(mask: np.ndarray) -> str:
    value = 0
    for i, bit in enumerate(mask):
        value |= int(bit) << i
    width = (len(mask) + 3) // 4
    return format(value, f"0{width}x")


def _mask_from_hex(text: str, length: int) -> np.ndarray:
    value = int(text, 16)
    return np.array([(value >> i) & 1 for i in range(length)], dtype=np.uint8)


def frames_to_csv(frames: Sequence[FeatureFrame], deployment: Deployment) -> str:
    """CSV export: ``t_ns,<router:kind>...,mask_hex`` in deployment order.

    ``mask_hex`` packs the mask with column i at bit i (LSB first), zero
    padded to ceil(F/4) hex digits.
    """
    lines = [",".join(["t_ns"] + deployment.labels() + ["mask_hex"])]
    for fr in frames:
        fields = [str(fr.t_ns)] + [repr(float(v)) for v in fr.values]
        fields.append(_mask_hex(fr.mask))
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def frames_from_csv(text: str) -> tuple[list[FeatureFrame], Deployment]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[0] != "t_ns" or header[-1] != "mask_hex":
        raise ValueError("not a feature-frame CSV")
    file_cols = [FeatureColumn.from_label(x) for x in header[1:-1]]
    deployment = Deployment(tuple(file_cols))
    order = np.array([file_cols.index(c) for c in deployment.columns])
    frames = []
    for line in lines[1:]:
        fields = line.split(",")
        t_ns = int(fields[0])
        vals = np.array([float(v) for v in fields[1:-1]], dtype=np.float64)
        mask = _mask_from_hex(fields[-1], len(vals))
        frames.append(FeatureFrame(t_ns, vals[order], mask[order]))
    return frames, deployment
