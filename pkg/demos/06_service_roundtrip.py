#!/usr/bin/env python3
"""Encrypted store and query service round trip.

Simulates two phones on the corridor, ingests the captures, queries the
service the way the console does, and finishes with an erase-by-overwrite.
"""

import tempfile
from importlib import resources
from pathlib import Path

from tracewave.capture import serialize_capture
from tracewave.service import TraceService
from tracewave.simulate import (ChannelModel, DeviceProfile, SiteMap,
                                load_routers, run_survey)
from tracewave.store import DeviceStore

site = SiteMap.parse((resources.files("tracewave") / "data" / "corridor.map").read_text())
with resources.as_file(resources.files("tracewave") / "data"
                       / "corridor_routers.csv") as p:
    routers = load_routers(p)
channel = ChannelModel(shadow_sigma_db=2.0)

captures = []
for seed, mac, info in ((1, "02:00:00:00:00:01", "0050f204"),
                        (1, "02:00:00:00:00:02", "00aabbcc")):
    profile = DeviceProfile(macs=(mac,),
                            model_info=((221, bytes.fromhex(info)),))
    run = run_survey(site, routers, channel, seed=seed, n_trajectories=1,
                     profile=profile)[0]
    captures.append(serialize_capture(run.records))

with tempfile.TemporaryDirectory() as tmp:
    store = DeviceStore(Path(tmp) / "store.twdb", key=bytes(range(32)))
    svc = TraceService(store, site_maps={"corridor": site})
    for text in captures:
        summary = svc.ingest_capture(text, site_id="corridor")
        print(f"ingested: {summary}")

    print("\nall devices:", [d["bucket_id"] for d in svc.search_device("")])
    hits = svc.search_device("02:00:00:00:00:01")
    print(f"search by MAC -> bucket {hits[0]['bucket_id']} "
          f"({hits[0]['mac_count']} MACs)")

    path = svc.get_path("0", site_id="corridor")
    print(f"stored path for bucket 0: {len(path)} points, "
          f"first {path[0]['t_ns']} -> ({path[0]['x_m']:.1f}, {path[0]['y_m']:.1f})")

    contacts = svc.get_contacts("0")
    print(f"contact rows for bucket 0: {len(contacts)}")
    if contacts:
        row = contacts[0]
        print(f"  closest: {row['second_key']} duration {row['contact_duration']} "
              f"min {row['min_distance']:.1f} cells")

    receipt = svc.erase_device("1")
    print(f"\nerased bucket 1: {receipt['blobs']} blobs, "
          f"{receipt['bytes_overwritten']} bytes randomized")
    print("search after erase:", svc.search_device("02:00:00:00:00:02"))
    store.close()
