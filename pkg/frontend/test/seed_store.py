#!/usr/bin/env python3
"""Seed a store for the console tests.

Usage: seed_store.py <workdir>

Creates <workdir>/store.twdb with two devices walking the same hallway
(one of them under a known randomized MAC), <workdir>/maps/eow3.map, and
<workdir>/service.conf.  The storage key comes from TRACEWAVE_KEY.
"""

import os
import sys
from pathlib import Path

from tracewave.capture import CAPTURE_COLUMNS
from tracewave.service import TraceService
from tracewave.store import DeviceStore, key_from_hex

CASE_MAC = "D0:22:BE:F5:7C:B4"
CASE_MODEL = "221:0050f2040001;45:ef0117ff"
SUSPECT_MAC = "4E:0F:A0:57:F8:75"
SUSPECT_MODEL = "221:0050f2040003;45:ef1117ff"


def capture_text() -> str:
    lines = [",".join(CAPTURE_COLUMNS)]

    def probe(t_s, mac, model, x, y):
        lines.append(f"{int(t_s * 1e9)},R1,WIFI,PROBE_REQ,0,0,{mac},,-50,,,,,,,"
                     f"{model},{x},{y}")

    for i in range(12):
        probe(1000 + 2 * i, CASE_MAC, CASE_MODEL, 1.0 + i, 2.0)
    for i in range(12):
        probe(1001 + 2 * i, SUSPECT_MAC, SUSPECT_MODEL, 1.0 + i, 4.0)
    return "\n".join(lines) + "\n"


def main() -> int:
    workdir = Path(sys.argv[1])
    maps_dir = workdir / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    rows = ["#" * 20] + ["#" + "." * 18 + "#" for _ in range(6)] + ["#" * 20]
    (maps_dir / "eow3.map").write_text("20 8 1.0 eow3\n" + "\n".join(rows) + "\n")

    key = key_from_hex(os.environ["TRACEWAVE_KEY"])
    store = DeviceStore(workdir / "store.twdb", key)
    service = TraceService(store)
    summary = service.ingest_capture(capture_text(), site_id="eow3")
    store.close()

    (workdir / "service.conf").write_text(
        f"store_path = {workdir / 'store.twdb'}\n"
        f"site_maps_dir = {maps_dir}\n"
        f"static_dir = {Path(__file__).resolve().parent.parent / 'static'}\n")
    print(f"seeded {summary['devices']} devices, {summary['paths']} paths")
    return 0


if __name__ == "__main__":
    sys.exit(main())
