#!/usr/bin/env python3
"""Defeating MAC randomization.

Three phones rotate through a pile of random MACs while broadcasting
constant model fields; the fingerprint clustering folds them back into three
devices.
"""

import numpy as np

from tracewave.capture import FrameKind, Link, PacketRecord
from tracewave.macclust import bucket_report, cluster, extract_fingerprint

rng = np.random.default_rng(42)

PHONES = {
    "alpha": ((0, b"alpha-fw"), (221, bytes.fromhex("0050f20401"))),
    "bravo": ((0, b"bravo-fw"), (221, bytes.fromhex("0050f20402"))),
    "charlie": ((0, b"charlie-fw"), (221, bytes.fromhex("00aabbcc03"))),
}


def random_mac():
    octets = list(rng.integers(0, 256, size=6))
    octets[0] = (octets[0] | 0x02) & 0xFE  # locally administered, unicast
    return ":".join(f"{o:02X}" for o in octets)


by_mac = {}
truth = {}
for name, model_info in PHONES.items():
    for _ in range(rng.integers(3, 9)):
        mac = random_mac()
        truth[mac] = name
        by_mac[mac] = [PacketRecord(
            timestamp_ns=int(rng.integers(0, 10**9)), router_id="R1",
            link=Link.WIFI, frame_kind=FrameKind.PROBE_REQ, to_ds=0, from_ds=0,
            src_mac=mac, rssi_dbm=-55, model_info=model_info)]

print(f"{len(by_mac)} randomized MACs from {len(PHONES)} physical phones")

fingerprints = {mac: extract_fingerprint(recs) for mac, recs in by_mac.items()}
buckets = cluster(fingerprints)
print(f"clustering found {len(buckets)} buckets\n")
print(bucket_report(buckets))

for i, bucket in enumerate(buckets):
    owners = {truth[mac] for mac in bucket.macs}
    assert len(owners) == 1, "bucket mixed two phones!"
    print(f"bucket {i} -> {owners.pop()} ({len(bucket.macs)} MACs, "
          f"fingerprint bits {bucket.fingerprint.bit_indices()})")
