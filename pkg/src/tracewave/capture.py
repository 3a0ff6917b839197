"""Canonical packet-capture format: parsing, ordering, and transmitter classification.

A capture is a UTF-8 CSV with a header row and these columns:

    timestamp_ns,router_id,link,frame_kind,to_ds,from_ds,src_mac,bssid,
    rssi_dbm,sqi,ble_tx_power_dbm,ftm_t1_ns,ftm_t2_ns,ftm_t3_ns,ftm_t4_ns,
    model_info,truth_x_m,truth_y_m

An empty field means the value is absent.  Trailing empty fields may be
omitted entirely.  ``model_info`` is a ``;``-separated list of ``tag:hex``
pairs (decimal tag id, hex-encoded value bytes).  ``truth_x_m``/``truth_y_m``
are only ever filled by the simulator.

Transmitters are classified into access points, wireless distribution
systems, bridged hosts and mobile devices; only mobile-device packets are
kept for the rest of the pipeline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

RSSI_FLOOR_DBM = -101

CAPTURE_COLUMNS = (
    "timestamp_ns", "router_id", "link", "frame_kind", "to_ds", "from_ds",
    "src_mac", "bssid", "rssi_dbm", "sqi", "ble_tx_power_dbm",
    "ftm_t1_ns", "ftm_t2_ns", "ftm_t3_ns", "ftm_t4_ns",
    "model_info", "truth_x_m", "truth_y_m",
)

# Columns up to and including rssi_dbm must be present on every line.
_REQUIRED_FIELDS = 9

_MAC_RE = re.compile(r"^[0-9A-Fa-f]{2}(:[0-9A-Fa-f]{2}){5}$")


class Link(str, Enum):
    WIFI = "WIFI"
    BLE = "BLE"


class FrameKind(str, Enum):
    BEACON = "BEACON"
    PROBE_REQ = "PROBE_REQ"
    CTS = "CTS"
    ACK = "ACK"
    DATA = "DATA"
    FTM = "FTM"
    BLE_ADV = "BLE_ADV"
    BLE_SCAN_RSP = "BLE_SCAN_RSP"


class DeviceClass(str, Enum):
    ACCESS_POINT = "ACCESS_POINT"
    WDS = "WDS"
    BRIDGED = "BRIDGED"
    MOBILE = "MOBILE"


class CaptureParseError(ValueError):
    """A malformed capture line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def normalize_mac(mac: str) -> str:
    if not _MAC_RE.match(mac):
        raise ValueError(f"not a MAC address: {mac!r}")
    return mac.upper()


@dataclass
class PacketRecord:
    """One captured frame as seen by a single router."""

    timestamp_ns: int
    router_id: str
    link: Link
    frame_kind: FrameKind
    to_ds: int
    from_ds: int
    src_mac: str
    bssid: Optional[str] = None
    rssi_dbm: int = RSSI_FLOOR_DBM
    sqi: Optional[int] = None
    ble_tx_power_dbm: Optional[int] = None
    ftm_times_ns: Optional[tuple[int, int, int, int]] = None
    model_info: Optional[tuple[tuple[int, bytes], ...]] = None
    truth_pos_m: Optional[tuple[float, float]] = None


def _parse_model_info(text: str) -> tuple[tuple[int, bytes], ...]:
    pairs = []
    for part in text.split(";"):
        if not part:
            continue
        tag_text, _, hex_text = part.partition(":")
        pairs.append((int(tag_text), bytes.fromhex(hex_text)))
    return tuple(pairs)


def format_model_info(pairs: Iterable[tuple[int, bytes]]) -> str:
    return ";".join(f"{tag}:{value.hex()}" for tag, value in pairs)


def _parse_line(line_no: int, fields: list[str]) -> PacketRecord:
    if len(fields) < _REQUIRED_FIELDS:
        raise CaptureParseError(line_no, f"expected at least {_REQUIRED_FIELDS} fields, got {len(fields)}")
    if len(fields) > len(CAPTURE_COLUMNS):
        raise CaptureParseError(line_no, f"too many fields ({len(fields)})")
    fields = fields + [""] * (len(CAPTURE_COLUMNS) - len(fields))

    def fail(msg: str) -> CaptureParseError:
        return CaptureParseError(line_no, msg)

    try:
        timestamp_ns = int(fields[0])
    except ValueError:
        raise fail(f"bad timestamp {fields[0]!r}") from None
    router_id = fields[1]
    if not router_id:
        raise fail("empty router_id")
    try:
        link = Link(fields[2])
    except ValueError:
        raise fail(f"unknown link {fields[2]!r}") from None
    try:
        frame_kind = FrameKind(fields[3])
    except ValueError:
        raise fail(f"unknown frame_kind {fields[3]!r}") from None
    if fields[4] not in ("0", "1") or fields[5] not in ("0", "1"):
        raise fail("to_ds/from_ds must be 0 or 1")
    to_ds, from_ds = int(fields[4]), int(fields[5])
    if link is Link.BLE and (to_ds or from_ds):
        raise fail("BLE records must have to_ds=0 and from_ds=0")
    try:
        src_mac = normalize_mac(fields[6])
    except ValueError as exc:
        raise fail(str(exc)) from None
    bssid = None
    if fields[7]:
        try:
            bssid = normalize_mac(fields[7])
        except ValueError as exc:
            raise fail(str(exc)) from None
    try:
        rssi_dbm = int(fields[8])
    except ValueError:
        raise fail(f"bad rssi {fields[8]!r}") from None
    if not RSSI_FLOOR_DBM <= rssi_dbm <= 0:
        raise fail(f"rssi {rssi_dbm} outside [{RSSI_FLOOR_DBM}, 0]")

    sqi = None
    if fields[9]:
        sqi = int(fields[9])
        if not 0 <= sqi <= 100:
            raise fail(f"sqi {sqi} outside [0, 100]")
    ble_tx = int(fields[10]) if fields[10] else None

    ftm_fields = fields[11:15]
    ftm_times: Optional[tuple[int, int, int, int]] = None
    if any(ftm_fields):
        if not all(ftm_fields):
            raise fail("partial FTM quadruple")
        if frame_kind is not FrameKind.FTM:
            raise fail("ftm_times on a non-FTM frame")
        try:
            t1, t2, t3, t4 = (int(v) for v in ftm_fields)
        except ValueError:
            raise fail("bad FTM timestamp") from None
        ftm_times = (t1, t2, t3, t4)

    model_info = None
    if fields[15]:
        try:
            model_info = _parse_model_info(fields[15])
        except ValueError:
            raise fail(f"bad model_info {fields[15]!r}") from None

    truth = None
    if fields[16] or fields[17]:
        if not (fields[16] and fields[17]):
            raise fail("partial truth position")
        truth = (float(fields[16]), float(fields[17]))

    return PacketRecord(
        timestamp_ns=timestamp_ns, router_id=router_id, link=link,
        frame_kind=frame_kind, to_ds=to_ds, from_ds=from_ds, src_mac=src_mac,
        bssid=bssid, rssi_dbm=rssi_dbm, sqi=sqi, ble_tx_power_dbm=ble_tx,
        ftm_times_ns=ftm_times, model_info=model_info, truth_pos_m=truth,
    )


def parse_capture_text(text: str) -> list[PacketRecord]:
    """Parse capture CSV text.  The header row is required unless the text is empty."""
    records = []
    lines = text.splitlines()
    if not lines:
        return records
    start = 1 if lines[0].startswith("timestamp_ns") else 0
    for idx in range(start, len(lines)):
        line = lines[idx].strip()
        if not line:
            continue
        records.append(_parse_line(idx + 1, line.split(",")))
    return records


def parse_capture(path: str | Path) -> list[PacketRecord]:
    """Parse a capture file into records, preserving on-disk order."""
    return parse_capture_text(Path(path).read_text(encoding="utf-8"))


def _format_record(r: PacketRecord) -> str:
    ftm = ["", "", "", ""] if r.ftm_times_ns is None else [str(v) for v in r.ftm_times_ns]
    truth = ["", ""] if r.truth_pos_m is None else [repr(float(r.truth_pos_m[0])), repr(float(r.truth_pos_m[1]))]
    fields = [
        str(r.timestamp_ns), r.router_id, r.link.value, r.frame_kind.value,
        str(r.to_ds), str(r.from_ds), r.src_mac, r.bssid or "",
        str(r.rssi_dbm),
        "" if r.sqi is None else str(r.sqi),
        "" if r.ble_tx_power_dbm is None else str(r.ble_tx_power_dbm),
        *ftm,
        "" if r.model_info is None else format_model_info(r.model_info),
        *truth,
    ]
    return ",".join(fields)


def serialize_capture(records: Sequence[PacketRecord]) -> str:
    lines = [",".join(CAPTURE_COLUMNS)]
    lines.extend(_format_record(r) for r in records)
    return "\n".join(lines) + "\n"


def write_capture(records: Sequence[PacketRecord], path: str | Path) -> None:
    Path(path).write_text(serialize_capture(records), encoding="utf-8")


def sort_chronological(records: Sequence[PacketRecord]) -> list[PacketRecord]:
    """Stable ascending sort on timestamp; ties keep input order."""
    return sorted(records, key=lambda r: r.timestamp_ns)


def classify_devices(records: Sequence[PacketRecord]) -> dict[str, DeviceClass]:
    """Classify each source MAC, with precedence AP > WDS > BRIDGED > MOBILE.

    A MAC that ever sent a beacon is an access point.  Otherwise a record
    with to_ds=1 and from_ds=1 marks a WDS link, and from_ds=1 with a source
    MAC differing from the BSSID marks a bridged host.  Everything left is a
    mobile device.
    """
    sent_beacon: set[str] = set()
    saw_wds: set[str] = set()
    saw_bridged: set[str] = set()
    macs: list[str] = []
    seen: set[str] = set()
    for r in records:
        mac = r.src_mac
        if mac not in seen:
            seen.add(mac)
            macs.append(mac)
        if r.frame_kind is FrameKind.BEACON:
            sent_beacon.add(mac)
        if r.to_ds and r.from_ds:
            saw_wds.add(mac)
        if r.from_ds and mac != r.bssid:
            saw_bridged.add(mac)
    classes: dict[str, DeviceClass] = {}
    for mac in macs:
        if mac in sent_beacon:
            classes[mac] = DeviceClass.ACCESS_POINT
        elif mac in saw_wds:
            classes[mac] = DeviceClass.WDS
        elif mac in saw_bridged:
            classes[mac] = DeviceClass.BRIDGED
        else:
            classes[mac] = DeviceClass.MOBILE
    return classes


def filter_mobile(records: Sequence[PacketRecord],
                  classes: dict[str, DeviceClass]) -> list[PacketRecord]:
    """Keep only records sent by mobile-class devices, order preserved."""
    return [r for r in records if classes.get(r.src_mac) is DeviceClass.MOBILE]
