"""Query service over the encrypted store, plus the ingest pipeline.

Ingest runs capture parsing, device classification, MAC clustering, feature
synchronization and (when a model checkpoint is configured) BiLSTM
localization, then persists devices, frames and path points atomically per
file digest.  Queries serve the operator console: device search, contact
reports, path retrieval, site maps, and erasure.

The HTTP layer is a thin JSON wrapper:

    POST   /captures?site=ID          multipart or raw capture CSV
    GET    /devices?q=QUERY
    GET    /devices/{bucket}/contacts?start&end&max_distance
    GET    /devices/{bucket}/path?site&start&end
    DELETE /devices/{bucket}
    GET    /sites/{id}/map

Anything else under GET falls back to static assets for the console.
"""

from __future__ import annotations

import hashlib
import json
import mimetypes
import re
import threading
import time
import urllib.parse
from dataclasses import dataclass
from email.parser import BytesParser
from email.policy import HTTP as HTTP_POLICY
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional, Sequence

from . import bilstm, localize, macclust, tracing
from .capture import (DeviceClass, PacketRecord, classify_devices,
                      filter_mobile, parse_capture_text, sort_chronological)
from .features import Deployment, NoTxPowerEstimateError, estimate_wifi_tx_power, \
    frames_to_csv, synchronize
from .macclust import FingerprintVector, UnfingerprintableError
from .simulate import SiteMap
from .store import BucketNotFoundError, DeviceStore
from .tracing import TraceRecord, contact_report_csv, generate_contact_history

_MAC_QUERY_RE = re.compile(r"^[0-9A-Fa-f]{2}(:[0-9A-Fa-f]{2}){5}$")
_SOURCE_PREFERENCE = ("BILSTM", "KNN", "TRUTH")


class NotFoundError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "not found"


def parse_config(text: str) -> dict[str, str]:
    """Flat ``key = value`` config format; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | Path) -> dict[str, str]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


@dataclass
class DeviceGroup:
    """One physical device reconstructed from a capture: its fingerprint (if
    any), the MACs it used, and their merged chronological records."""

    fingerprint: Optional[FingerprintVector]
    macs: tuple[str, ...]
    records: list[PacketRecord]


def group_devices(records: Sequence[PacketRecord]) -> list[DeviceGroup]:
    """capture -> mobile filter -> fingerprint clustering -> device groups."""
    ordered = sort_chronological(records)
    classes = classify_devices(ordered)
    mobile = filter_mobile(ordered, classes)
    by_mac: dict[str, list[PacketRecord]] = {}
    for r in mobile:
        by_mac.setdefault(r.src_mac, []).append(r)
    fingerprints: dict[str, FingerprintVector] = {}
    unfingerprintable: list[str] = []
    for mac, recs in by_mac.items():
        try:
            fingerprints[mac] = macclust.extract_fingerprint(recs)
        except UnfingerprintableError:
            unfingerprintable.append(mac)
    groups: list[DeviceGroup] = []
    for bucket in macclust.cluster(fingerprints):
        macs = tuple(sorted(bucket.macs))
        merged: list[PacketRecord] = []
        for mac in macs:
            merged.extend(by_mac[mac])
        groups.append(DeviceGroup(fingerprint=bucket.fingerprint, macs=macs,
                                  records=sort_chronological(merged)))
    for mac in unfingerprintable:
        groups.append(DeviceGroup(fingerprint=None, macs=(mac,),
                                  records=by_mac[mac]))
    groups.sort(key=lambda g: g.macs[0])
    return groups


class TraceService:
    """The query surface behind the operator console."""

    def __init__(self, store: DeviceStore,
                 site_maps: Optional[dict[str, SiteMap]] = None,
                 model: Optional[bilstm.BilstmModel] = None,
                 model_columns: Optional[list[str]] = None):
        self.store = store
        self.site_maps = site_maps or {}
        self.model = model
        self.model_columns = model_columns
        # Re-entrant: multi-step queries hold it too, so a query sees either
        # the pre- or post-state of any mutation, never a partial one.
        self._write_lock = threading.RLock()

    @classmethod
    def from_config(cls, config: dict[str, str], key: bytes) -> "TraceService":
        store = DeviceStore(config["store_path"], key)
        site_maps = {}
        maps_dir = config.get("site_maps_dir")
        if maps_dir:
            for path in sorted(Path(maps_dir).glob("*.map")):
                site = SiteMap.load(path)
                site_maps[site.site_id] = site
        model = columns = None
        checkpoint = config.get("model_checkpoint")
        if checkpoint:
            model, columns = bilstm.load_checkpoint(checkpoint)
        return cls(store, site_maps=site_maps, model=model,
                   model_columns=columns)

    # -- ingest -----------------------------------------------------------

    def _next_bucket_id(self) -> int:
        existing = [int(b) for b in self.store.buckets() if b.isdigit()]
        return max(existing) + 1 if existing else 0

    def _find_device_bucket(self, group: DeviceGroup) -> Optional[str]:
        """Device identity: by fingerprint when present, else by sole MAC."""
        for bucket_id in self.store.buckets():
            if not bucket_id.isdigit():
                continue
            device = self._device_record(bucket_id)
            if group.fingerprint is not None:
                if device["fingerprint"] == group.fingerprint.to_hex():
                    return bucket_id
            elif not device["fingerprint"] and group.macs[0] in device["macs"]:
                return bucket_id
        return None

    def _device_record(self, bucket_id: str) -> dict:
        devices = self.store.records_of_kind(bucket_id, "device")
        if not devices:
            raise NotFoundError(f"unknown bucket {bucket_id}")
        return devices[-1]

    def ingest_capture(self, text: str, site_id: str = "default") -> dict:
        """Run the pipeline over one capture file and persist the results.

        Idempotent per file digest: re-ingesting returns the prior summary
        without writing.  A parse failure rejects the job before anything is
        persisted.
        """
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        with self._write_lock:
            for entry in self._ingest_log():
                if entry["digest"] == digest:
                    return entry["summary"]
            records = parse_capture_text(text)  # may raise CaptureParseError
            groups = group_devices(records)
            n_frames = 0
            n_paths = 0
            next_free = self._next_bucket_id()
            writes: list[tuple[str, str, dict]] = []
            for group in groups:
                bucket_id = self._find_device_bucket(group)
                if bucket_id is None:
                    bucket_id = str(next_free)
                    next_free += 1
                    known_macs: list[str] = []
                else:
                    known_macs = self._device_record(bucket_id)["macs"]
                macs = sorted(set(known_macs) | set(group.macs))
                writes.append((bucket_id, "device", {
                    "bucket_id": bucket_id,
                    "fingerprint": group.fingerprint.to_hex() if group.fingerprint else "",
                    "macs": macs,
                    "model_label": None,
                    "created_at": time.time(),
                }))

                if self.model is not None and self.model_columns is not None:
                    deployment = Deployment.from_labels(self.model_columns)
                else:
                    deployment = Deployment.from_records(group.records)
                try:
                    tx = estimate_wifi_tx_power(group.records).p_wifi_tx_dbm
                except NoTxPowerEstimateError:
                    tx = None
                frames = synchronize(group.records, deployment, wifi_tx_dbm=tx)
                if frames:
                    writes.append((bucket_id, "frames", {
                        "site_id": site_id,
                        "csv": frames_to_csv(frames, deployment)}))
                    n_frames += len(frames)

                truth_points = [
                    [r.timestamp_ns, r.truth_pos_m[0], r.truth_pos_m[1]]
                    for r in group.records if r.truth_pos_m is not None]
                if truth_points:
                    dedup = []
                    for p in truth_points:
                        if not dedup or p[0] != dedup[-1][0]:
                            dedup.append(p)
                    writes.append((bucket_id, "path", {
                        "site_id": site_id, "source": "TRUTH",
                        "points": dedup}))
                    n_paths += 1
                if self.model is not None and frames:
                    x = localize.frames_to_inputs(frames, deployment)
                    pred = bilstm.forward(self.model, x)
                    writes.append((bucket_id, "path", {
                        "site_id": site_id, "source": "BILSTM",
                        "points": [[f.t_ns, float(p[0]), float(p[1])]
                                   for f, p in zip(frames, pred)]}))
                    n_paths += 1

            summary = {"digest": digest, "records": len(records),
                       "devices": len(groups), "frames": n_frames,
                       "paths": n_paths, "site_id": site_id}
            for bucket_id, kind, data in writes:
                self.store.append(bucket_id, kind, data)
            self.store.append("_ingest", "ingest",
                              {"digest": digest, "summary": summary})
            return summary

    def _ingest_log(self) -> list[dict]:
        if not self.store.has_bucket("_ingest"):
            return []
        return self.store.records_of_kind("_ingest", "ingest")

    # -- queries ----------------------------------------------------------

    def _device_buckets(self) -> list[str]:
        return [b for b in self.store.buckets() if b.isdigit()]

    def _device_view(self, bucket_id: str) -> dict:
        device = self._device_record(bucket_id)
        return {"bucket_id": bucket_id,
                "fingerprint": device["fingerprint"],
                "macs": device["macs"],
                "mac_count": len(device["macs"]),
                "model_label": device.get("model_label"),
                "created_at": device.get("created_at")}

    def search_device(self, query: str) -> list[dict]:
        """Exact-MAC search resolves through bucket membership; any other
        hex string matches devices whose fingerprint covers its bits."""
        with self._write_lock:
            return self._search_device(query)

    def _search_device(self, query: str) -> list[dict]:
        query = query.strip()
        results = []
        if _MAC_QUERY_RE.match(query):
            mac = query.upper()
            for bucket_id in self._device_buckets():
                if mac in self._device_record(bucket_id)["macs"]:
                    results.append(self._device_view(bucket_id))
            return results
        try:
            fragment = FingerprintVector.from_hex(query)
        except ValueError:
            return []
        for bucket_id in self._device_buckets():
            hexfp = self._device_record(bucket_id)["fingerprint"]
            if not hexfp:
                if not query:
                    results.append(self._device_view(bucket_id))
                continue
            fp = FingerprintVector.from_hex(hexfp)
            padded = FingerprintVector(fragment.bits.ljust(len(fp.bits), b"\x00"))
            if len(padded.bits) == len(fp.bits) and fp.contains(padded):
                results.append(self._device_view(bucket_id))
        return results

    def _path_blobs(self, bucket_id: str) -> list[dict]:
        if not self.store.has_bucket(bucket_id) or not bucket_id.isdigit():
            raise NotFoundError(f"unknown bucket {bucket_id}")
        return self.store.records_of_kind(bucket_id, "path")

    def get_path(self, bucket_id: str, site_id: Optional[str] = None,
                 start_ns: Optional[int] = None,
                 end_ns: Optional[int] = None,
                 source: Optional[str] = None) -> list[dict]:
        """Time-ordered stored path points within the window."""
        with self._write_lock:
            return self._get_path(bucket_id, site_id, start_ns, end_ns, source)

    def _get_path(self, bucket_id: str, site_id: Optional[str] = None,
                  start_ns: Optional[int] = None,
                  end_ns: Optional[int] = None,
                  source: Optional[str] = None) -> list[dict]:
        blobs = self._path_blobs(bucket_id)
        sites = {b["site_id"] for b in blobs}
        if site_id is not None and site_id not in sites:
            raise NotFoundError(f"no path for site {site_id}")
        if source is None:
            present = {b["source"] for b in blobs}
            source = next((s for s in _SOURCE_PREFERENCE if s in present), None)
        points = []
        for blob in blobs:
            if site_id is not None and blob["site_id"] != site_id:
                continue
            if source is not None and blob["source"] != source:
                continue
            for t_ns, x, y in blob["points"]:
                if start_ns is not None and t_ns < start_ns:
                    continue
                if end_ns is not None and t_ns > end_ns:
                    continue
                points.append({"bucket_id": bucket_id,
                               "site_id": blob["site_id"],
                               "t_ns": int(t_ns), "x_m": float(x),
                               "y_m": float(y), "source": blob["source"]})
        points.sort(key=lambda p: p["t_ns"])
        return points

    def _trace_records(self, bucket_id: str,
                       start_s: Optional[float] = None,
                       end_s: Optional[float] = None) -> list[TraceRecord]:
        out = []
        for point in self.get_path(bucket_id):
            t_s = point["t_ns"] / 1e9
            if start_s is not None and t_s < start_s:
                continue
            if end_s is not None and t_s > end_s:
                continue
            site = self.site_maps.get(point["site_id"])
            res = site.resolution_m if site else 1.0
            out.append(TraceRecord(
                key=bucket_id, site_id=point["site_id"], time_s=t_s,
                cell=(int(point["x_m"] // res), int(point["y_m"] // res))))
        return out

    def get_contacts(self, bucket_id: str,
                     start_s: Optional[float] = None,
                     end_s: Optional[float] = None,
                     max_distance: float = tracing.MAX_DISTANCE_CELLS) -> list[dict]:
        """Contact report for one confirmed case, newest contact first."""
        with self._write_lock:
            return self._get_contacts(bucket_id, start_s, end_s, max_distance)

    def _get_contacts(self, bucket_id: str,
                      start_s: Optional[float] = None,
                      end_s: Optional[float] = None,
                      max_distance: float = tracing.MAX_DISTANCE_CELLS) -> list[dict]:
        if not self.store.has_bucket(bucket_id) or not bucket_id.isdigit():
            raise NotFoundError(f"unknown bucket {bucket_id}")
        target = self._trace_records(bucket_id, start_s, end_s)
        others: list[TraceRecord] = []
        for other_id in self._device_buckets():
            if other_id != bucket_id:
                others.extend(self._trace_records(other_id, start_s, end_s))
        others.sort(key=lambda r: r.time_s)
        histories = generate_contact_history(target, others,
                                             max_distance=max_distance)
        histories.sort(key=lambda h: -h.last_contact_time_s)
        return [{
            "first_key": h.first_key, "second_key": h.second_key,
            "site_id": h.site_id, "contact_duration": h.contact_duration,
            "last_contact_time": h.last_contact_time_s,
            "avg_distance": h.contact_distance_avg_cells,
            "min_distance": h.contact_distance_min_cells,
            "band_0_5": h.distance_range[0],
            "band_5_10": h.distance_range[1],
            "band_10_15": h.distance_range[2],
        } for h in histories]

    def contacts_report_csv(self, bucket_id: str, **kw) -> str:
        rows = self.get_contacts(bucket_id, **kw)
        histories = [tracing.ContactHistory(
            first_key=r["first_key"], second_key=r["second_key"],
            site_id=r["site_id"], contact_duration=r["contact_duration"],
            last_contact_time_s=r["last_contact_time"],
            contact_distance_avg_cells=r["avg_distance"],
            contact_distance_min_cells=r["min_distance"],
            distance_range=(r["band_0_5"], r["band_5_10"], r["band_10_15"]),
        ) for r in rows]
        return contact_report_csv(histories)

    def erase_device(self, bucket_id: str) -> dict:
        """Random-overwrite every blob of the bucket; queries 404 afterwards."""
        if not bucket_id.isdigit():
            raise NotFoundError(f"unknown bucket {bucket_id}")
        with self._write_lock:
            try:
                return self.store.erase(bucket_id)
            except BucketNotFoundError as exc:
                raise NotFoundError(f"unknown bucket {bucket_id}") from exc

    def site_map_view(self, site_id: str) -> dict:
        site = self.site_maps.get(site_id)
        if site is None:
            raise NotFoundError(f"unknown site {site_id}")
        rows = site.dump().splitlines()[1:]
        return {"site_id": site.site_id, "width": site.width,
                "height": site.height, "resolution_m": site.resolution_m,
                "rows": rows}


# -- HTTP layer -------------------------------------------------------------

def _parse_multipart(content_type: str, body: bytes) -> bytes:
    message = BytesParser(policy=HTTP_POLICY).parsebytes(
        b"Content-Type: " + content_type.encode("latin-1") + b"\r\n\r\n" + body)
    for part in message.iter_parts():
        return part.get_payload(decode=True)
    raise ValueError("empty multipart body")


def make_handler(service: TraceService, static_dir: Optional[Path] = None,
                 token: Optional[str] = None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # quiet test output
            pass

        def _send_json(self, obj, status: int = 200) -> None:
            blob = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(blob)))
            self.end_headers()
            self.wfile.write(blob)

        def _error(self, status: int, message: str) -> None:
            self._send_json({"error": message}, status=status)

        def _authorized(self) -> bool:
            if token is None:
                return True
            header = self.headers.get("Authorization", "")
            return header == f"Bearer {token}"

        def _route(self, method: str) -> None:
            url = urllib.parse.urlparse(self.path)
            params = {k: v[0] for k, v in
                      urllib.parse.parse_qs(url.query).items()}
            path = url.path
            api = path == "/captures" or path.startswith("/devices") \
                or path.startswith("/sites")
            if api and not self._authorized():
                return self._error(401, "missing or invalid bearer token")
            try:
                if method == "POST" and path == "/captures":
                    return self._post_capture(params)
                if method == "GET" and path == "/devices":
                    return self._send_json(
                        service.search_device(params.get("q", "")))
                m = re.match(r"^/devices/([^/]+)/contacts$", path)
                if method == "GET" and m:
                    return self._send_json(service.get_contacts(
                        m.group(1),
                        start_s=_opt_float(params.get("start")),
                        end_s=_opt_float(params.get("end")),
                        max_distance=float(params.get("max_distance", 15.0))))
                m = re.match(r"^/devices/([^/]+)/path$", path)
                if method == "GET" and m:
                    return self._send_json(service.get_path(
                        m.group(1), site_id=params.get("site"),
                        start_ns=_opt_int(params.get("start")),
                        end_ns=_opt_int(params.get("end")),
                        source=params.get("source")))
                m = re.match(r"^/devices/([^/]+)$", path)
                if method == "DELETE" and m:
                    return self._send_json(service.erase_device(m.group(1)))
                m = re.match(r"^/sites/([^/]+)/map$", path)
                if method == "GET" and m:
                    return self._send_json(service.site_map_view(m.group(1)))
                if method == "GET":
                    return self._static(path)
                return self._error(404, f"no route for {method} {path}")
            except NotFoundError as exc:
                return self._error(404, str(exc))
            except (ValueError, KeyError) as exc:
                return self._error(400, str(exc))

        def _post_capture(self, params) -> None:
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            ctype = self.headers.get("Content-Type", "text/csv")
            if ctype.startswith("multipart/"):
                body = _parse_multipart(ctype, body)
            summary = service.ingest_capture(body.decode("utf-8"),
                                             site_id=params.get("site", "default"))
            self._send_json(summary)

        def _static(self, path: str) -> None:
            if static_dir is None:
                return self._error(404, "no static assets configured")
            rel = path.lstrip("/") or "index.html"
            target = (static_dir / rel).resolve()
            if not str(target).startswith(str(static_dir.resolve())) \
                    or not target.is_file():
                return self._error(404, f"not found: {path}")
            blob = target.read_bytes()
            ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(blob)))
            self.end_headers()
            self.wfile.write(blob)

        def do_GET(self):
            self._route("GET")

        def do_POST(self):
            self._route("POST")

        def do_DELETE(self):
            self._route("DELETE")

    return Handler


def _opt_float(value: Optional[str]) -> Optional[float]:
    return None if value is None else float(value)


def _opt_int(value: Optional[str]) -> Optional[int]:
    return None if value is None else int(value)


def serve(service: TraceService, host: str = "127.0.0.1", port: int = 8787,
          static_dir: Optional[str | Path] = None,
          token: Optional[str] = None) -> ThreadingHTTPServer:
    """Build the HTTP server; the caller decides when to serve_forever()."""
    handler = make_handler(service,
                           static_dir=Path(static_dir) if static_dir else None,
                           token=token)
    return ThreadingHTTPServer((host, port), handler)
