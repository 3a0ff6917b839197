import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tracewave.capture import FrameKind, Link, PacketRecord
from tracewave.features import (
    GRID_NS, RSSI_PAD_DBM, TOF_PAD_NS, Deployment, FeatureColumn, FeatureFrame,
    FeatureKind, FtmMeasurementError, NoTxPowerEstimateError, ble_path_loss,
    estimate_wifi_tx_power, frames_from_csv, frames_to_csv, infer_wifi_tx_power,
    round_to_grid, slot_series, synchronize, tof_from_ftm, wifi_path_loss,
)

DATA = Path(__file__).parent / "data"


def rec(t, router="R1", link=Link.WIFI, kind=FrameKind.PROBE_REQ, rssi=-50,
        mac="AA:BB:CC:DD:EE:01", **kw):
    return PacketRecord(timestamp_ns=t, router_id=router, link=link,
                        frame_kind=kind, to_ds=0, from_ds=0, src_mac=mac,
                        rssi_dbm=rssi, **kw)


class TestPathLossEquations:
    def test_ble_loss_examples(self):
        assert ble_path_loss(0, -60) == 60
        assert ble_path_loss(4, -97) == 101
        assert ble_path_loss(-7, -7) == 0

    def test_infer_tx_example(self):
        assert infer_wifi_tx_power(60, -45) == 15

    def test_wifi_loss_examples(self):
        assert wifi_path_loss(15, -45) == 60
        assert wifi_path_loss(15, -101) == 116

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            ble_path_loss(float("nan"), -50)
        with pytest.raises(ValueError):
            wifi_path_loss(float("inf"), -50)

    @given(st.integers(-120, 120), st.integers(-101, 0))
    def test_loss_algebra_roundtrip(self, loss, rx):
        # Over the pipeline's integer-dB domain the identity is exact.
        assert wifi_path_loss(infer_wifi_tx_power(float(loss), float(rx)),
                              float(rx)) == loss


class TestTofFromFtm:
    def test_worked_example(self):
        assert tof_from_ftm(0, 9_990, 10_010, 20_020) == 10_000.0

    def test_zero_turnaround(self):
        assert tof_from_ftm(0, 500, 500, 40) == 20.0

    def test_non_monotone_rejected(self):
        with pytest.raises(FtmMeasurementError):
            tof_from_ftm(100, 50, 40, 90)
        with pytest.raises(FtmMeasurementError):
            tof_from_ftm(0, 100, 50, 200)

    def test_negative_rtt_rejected(self):
        with pytest.raises(FtmMeasurementError):
            tof_from_ftm(0, 10, 200, 100)

    @given(st.integers(-10**9, 10**9))
    def test_clock_offset_invariance(self, offset):
        base = (1_000, 6_010, 16_010, 11_020)
        shifted = tuple(v + offset for v in base)
        assert tof_from_ftm(*shifted) == tof_from_ftm(*base)


class TestTxPowerEstimate:
    def test_median_of_three_slots(self):
        # Three co-located slots at R1 engineered to yield 14, 15, 16 dBm.
        records = []
        for i, (loss, rx) in enumerate([(59, -45), (60, -45), (61, -45)]):
            t = i * GRID_NS
            records.append(rec(t, link=Link.BLE, kind=FrameKind.BLE_ADV,
                               rssi=-loss, ble_tx_power_dbm=0))
            records.append(rec(t, rssi=rx))
        est = estimate_wifi_tx_power(records, device_key="b0")
        assert est.p_wifi_tx_dbm == 15
        assert est.n_samples == 3
        assert est.device_key == "b0"

    def test_no_colocated_slots_raises(self):
        records = [rec(0), rec(GRID_NS, link=Link.BLE, kind=FrameKind.BLE_ADV,
                               rssi=-60, ble_tx_power_dbm=0)]
        with pytest.raises(NoTxPowerEstimateError):
            estimate_wifi_tx_power(records)

    def test_ble_without_tx_power_cannot_estimate(self):
        records = [rec(0, link=Link.BLE, kind=FrameKind.BLE_ADV, rssi=-60),
                   rec(0, rssi=-45)]
        with pytest.raises(NoTxPowerEstimateError):
            estimate_wifi_tx_power(records)

    def test_simulator_recovers_true_tx_power(self):
        # With true P_WiFiTX = 15 dBm the co-located-slot estimate must come
        # back within 0.5 dBm over at least 100 slots, despite shadowing.
        from tracewave.simulate import (ChannelModel, DeviceProfile,
                                        RouterSpec, SiteMap, run_survey)
        site = SiteMap.parse("16 4 1.0 lane\n" + "#" * 16 + "\n"
                             + "#" + "." * 14 + "#\n"
                             + "#" + "." * 14 + "#\n" + "#" * 16 + "\n")
        routers = [RouterSpec("R1", (2.5, 1.5), False, True),
                   RouterSpec("R2", (13.5, 2.5), False, True)]
        channel = ChannelModel(shadow_sigma_db=3.0)
        profile = DeviceProfile(macs=("02:00:00:00:00:01",),
                                model_info=((221, b"\x01"),),
                                p_tx_wifi_dbm=15.0, p_tx_ble_dbm=4.0)
        run = run_survey(site, routers, channel, seed=6, n_trajectories=1,
                         profile=profile)[0]
        est = estimate_wifi_tx_power(run.records)
        assert est.n_samples >= 100
        assert abs(est.p_wifi_tx_dbm - 15.0) <= 0.5


class TestRounding:
    def test_ties_round_up(self):
        assert round_to_grid(1_000_049_000) == 1_000_000_000
        assert round_to_grid(1_000_050_000) == 1_000_100_000

    def test_exact_multiples_unchanged(self):
        assert round_to_grid(800_000) == 800_000

    @given(st.integers(0, 2**62))
    def test_rounds_to_nearest(self, t):
        slot = round_to_grid(t)
        assert slot % GRID_NS == 0
        assert abs(slot - t) <= GRID_NS // 2
        if abs(slot - t) == GRID_NS // 2:
            assert slot > t


def two_router_capture():
    """The golden fixture: R1 wifi+sqi at 0/200 us, R2 probe at 100 us and an
    FTM burst (ToF 10 ns) at 200 us."""
    return [
        rec(0, router="R1", rssi=-40, sqi=60),
        rec(100_000, router="R2", rssi=-50, sqi=50),
        rec(200_000, router="R1", rssi=-60, sqi=64),
        rec(200_000, router="R2", kind=FrameKind.FTM, rssi=-55,
            ftm_times_ns=(0, 5_010, 15_010, 10_020)),
    ]


def golden_deployment():
    return Deployment((
        FeatureColumn("R1", FeatureKind.SQI),
        FeatureColumn("R1", FeatureKind.WIFI),
        FeatureColumn("R2", FeatureKind.SQI),
        FeatureColumn("R2", FeatureKind.TOF),
        FeatureColumn("R2", FeatureKind.WIFI),
    ))


class TestSynchronize:
    def test_linear_midpoint(self):
        deployment = Deployment((FeatureColumn("R1", FeatureKind.WIFI),))
        frames = synchronize([rec(0, rssi=-40), rec(200_000, rssi=-60)], deployment)
        assert [f.t_ns for f in frames] == [0, 100_000, 200_000]
        assert frames[1].values[0] == -50.0
        assert frames[1].mask[0] == 1

    def test_silent_router_padded_everywhere(self):
        deployment = Deployment((FeatureColumn("R1", FeatureKind.WIFI),
                                 FeatureColumn("R9", FeatureKind.WIFI)))
        frames = synchronize([rec(0), rec(100_000)], deployment)
        for f in frames:
            assert f.values[1] == RSSI_PAD_DBM
            assert f.mask[1] == 0

    def test_tof_padding_value(self):
        deployment = Deployment((FeatureColumn("R1", FeatureKind.WIFI),
                                 FeatureColumn("R1", FeatureKind.TOF)))
        tof_idx = deployment.labels().index("R1:tof")
        frames = synchronize([rec(0), rec(100_000)], deployment)
        assert all(f.values[tof_idx] == TOF_PAD_NS for f in frames)

    def test_measured_slots_reproduced_exactly(self):
        deployment = golden_deployment()
        records = two_router_capture()
        frames = synchronize(records, deployment)
        by_t = {f.t_ns: f for f in frames}
        assert by_t[0].values[1] == -40.0
        assert by_t[200_000].values[1] == -60.0
        assert by_t[100_000].values[4] == -50.0
        assert by_t[200_000].values[3] == 10.0

    def test_grid_strictly_increasing_multiples(self):
        frames = synchronize(two_router_capture(), golden_deployment())
        ts = [f.t_ns for f in frames]
        assert all(t % GRID_NS == 0 for t in ts)
        assert all(b - a == GRID_NS for a, b in zip(ts, ts[1:]))

    def test_mask_zero_iff_padding(self):
        frames = synchronize(two_router_capture(), golden_deployment())
        for f in frames:
            for j, col in enumerate(golden_deployment().columns):
                pad = TOF_PAD_NS if col.kind is FeatureKind.TOF else RSSI_PAD_DBM
                if f.mask[j] == 0:
                    assert f.values[j] == pad
                else:
                    assert f.values[j] != pad

    def test_burst_averaging_within_slot(self):
        deployment = Deployment((FeatureColumn("R1", FeatureKind.WIFI),))
        frames = synchronize([rec(10_000, rssi=-40), rec(20_000, rssi=-50)],
                             deployment)
        assert len(frames) == 1
        assert frames[0].values[0] == -45.0

    def test_empty_records(self):
        assert synchronize([], golden_deployment()) == []

    def test_golden_file_byte_exact(self):
        frames = synchronize(two_router_capture(), golden_deployment())
        text = frames_to_csv(frames, golden_deployment())
        assert text == (DATA / "frames_golden.csv").read_text()

    def test_csv_roundtrip(self):
        deployment = golden_deployment()
        frames = synchronize(two_router_capture(), deployment)
        parsed, parsed_dep = frames_from_csv(frames_to_csv(frames, deployment))
        assert parsed_dep == deployment
        assert len(parsed) == len(frames)
        for a, b in zip(parsed, frames):
            assert a.t_ns == b.t_ns
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.mask, b.mask)

    def test_wifi_tx_turns_rssi_into_loss(self):
        deployment = Deployment((FeatureColumn("R1", FeatureKind.WIFI),))
        frames = synchronize([rec(0, rssi=-45)], deployment, wifi_tx_dbm=15.0)
        assert frames[0].values[0] == 60.0

    def test_invalid_ftm_dropped(self):
        deployment = Deployment((FeatureColumn("R1", FeatureKind.TOF),
                                 FeatureColumn("R1", FeatureKind.WIFI)))
        records = [rec(0, kind=FrameKind.FTM, ftm_times_ns=(100, 50, 40, 90))]
        frames = synchronize(records, deployment)
        # The bad quadruple contributes no ToF sample; only RSSI remains.
        assert frames[0].values[0] == TOF_PAD_NS
        assert frames[0].mask[0] == 0


class TestDeployment:
    def test_columns_sorted(self):
        d = Deployment((FeatureColumn("R2", FeatureKind.WIFI),
                        FeatureColumn("R1", FeatureKind.WIFI),
                        FeatureColumn("R1", FeatureKind.BLE)))
        assert d.labels() == ["R1:ble", "R1:wifi", "R2:wifi"]

    def test_from_records(self):
        records = two_router_capture() + [
            rec(0, router="R3", link=Link.BLE, kind=FrameKind.BLE_ADV,
                ble_tx_power_dbm=4, rssi=-70)]
        d = Deployment.from_records(records)
        assert d.labels() == ["R1:sqi", "R1:wifi", "R2:sqi", "R2:tof", "R2:wifi",
                              "R3:ble"]

    def test_label_roundtrip(self):
        col = FeatureColumn("gate-3", FeatureKind.TOF)
        assert FeatureColumn.from_label(col.label) == col


class TestSlotSeries:
    def test_ble_loss_when_tx_present(self):
        deployment = Deployment((FeatureColumn("R1", FeatureKind.BLE),))
        records = [rec(0, link=Link.BLE, kind=FrameKind.BLE_ADV, rssi=-60,
                       ble_tx_power_dbm=0)]
        series = slot_series(records, deployment)
        assert series[deployment.columns[0]][0] == 60.0

    def test_ble_rssi_fallback_when_tx_missing(self):
        deployment = Deployment((FeatureColumn("R1", FeatureKind.BLE),))
        records = [rec(0, link=Link.BLE, kind=FrameKind.BLE_ADV, rssi=-60)]
        series = slot_series(records, deployment)
        assert series[deployment.columns[0]][0] == -60.0
