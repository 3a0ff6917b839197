#!/usr/bin/env python3
"""From packets to synchronized features.

Shows the path-loss algebra (BLE loss -> inferred Wi-Fi TX power -> Wi-Fi
loss), FTM round-trip decoding, and the 100 us rounding / interpolation /
padding grid.
"""

from tracewave.capture import FrameKind, Link, PacketRecord
from tracewave.features import (Deployment, ble_path_loss,
                                estimate_wifi_tx_power, frames_to_csv,
                                infer_wifi_tx_power, synchronize,
                                tof_from_ftm, wifi_path_loss)


def rec(t_us, router, kind=FrameKind.PROBE_REQ, link=Link.WIFI, rssi=-50, **kw):
    return PacketRecord(timestamp_ns=t_us * 1000, router_id=router, link=link,
                        frame_kind=kind, to_ds=0, from_ds=0,
                        src_mac="02:00:00:00:00:01", rssi_dbm=rssi, **kw)


print("== path-loss algebra ==")
loss = ble_path_loss(4, -56)          # BLE advertises its TX power
print(f"BLE loss from (tx=4, rx=-56): {loss} dB")
tx = infer_wifi_tx_power(loss, -45)   # same slot, same router
print(f"inferred Wi-Fi TX power:      {tx} dBm")
print(f"Wi-Fi loss from (tx, rx=-45): {wifi_path_loss(tx, -45)} dB")

print("\n== FTM round trip ==")
quad = (0, 5_010, 15_010, 10_020)
print(f"quadruple {quad} -> ToF {tof_from_ftm(*quad)} ns")
shifted = tuple(v + 777 for v in quad)
print(f"with clock offset +777 ns    -> ToF {tof_from_ftm(*shifted)} ns (unchanged)")

print("\n== synchronization grid ==")
records = [
    rec(0, "R1", rssi=-40, sqi=60),
    rec(100, "R2", rssi=-50, sqi=50),
    rec(200, "R1", rssi=-60, sqi=64),
    rec(200, "R2", kind=FrameKind.FTM, rssi=-55,
        ftm_times_ns=(0, 5_010, 15_010, 10_020)),
    rec(150, "R1", link=Link.BLE, kind=FrameKind.BLE_ADV, rssi=-52,
        ble_tx_power_dbm=4),
]
deployment = Deployment.from_records(records)
print("columns:", deployment.labels())
try:
    est = estimate_wifi_tx_power(records)
    print(f"TX-power estimate: {est.p_wifi_tx_dbm} dBm over {est.n_samples} slots")
    tx = est.p_wifi_tx_dbm
except Exception:
    tx = None
frames = synchronize(records, deployment, wifi_tx_dbm=tx)
print(frames_to_csv(frames, deployment))
print("note the interpolated R1 values at t=100000 and the -101/200 padding")
