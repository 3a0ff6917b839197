import json
import threading

import pytest
import requests

from tracewave.capture import CAPTURE_COLUMNS
from tracewave.service import (
    NotFoundError, TraceService, group_devices, parse_config, serve,
)
from tracewave.simulate import SiteMap
from tracewave.store import DeviceStore

KEY = bytes(range(32))

PHONE_A = ("AA:00:00:00:00:01", "AA:00:00:00:00:02")
PHONE_B = ("BB:00:00:00:00:01",)
MODEL_A = "221:0050f204"
MODEL_B = "221:00a0f0ff"


def capture_text():
    """Two phones walking a short line with truth positions, plus one AP."""
    lines = [",".join(CAPTURE_COLUMNS)]

    def probe(t_s, mac, model, x, y, rssi=-50):
        t_ns = int(t_s * 1e9)
        lines.append(f"{t_ns},R1,WIFI,PROBE_REQ,0,0,{mac},,{rssi},,,,,,,"
                     f"{model},{x},{y}")

    # Phone A rotates its MAC halfway through.
    for i in range(6):
        mac = PHONE_A[0] if i < 3 else PHONE_A[1]
        probe(100 + i, mac, MODEL_A, float(i), 0.0)
    # Phone B tracks two cells away, overlapping in time.
    for i in range(6):
        probe(102 + i, PHONE_B[0], MODEL_B, float(i), 2.0)
    # An access point that must be classified out.
    lines.append(f"{int(100e9)},R1,WIFI,BEACON,0,0,CC:00:00:00:00:01,"
                 f"CC:00:00:00:00:01,-40,,,,,,,,,")
    return "\n".join(lines) + "\n"


@pytest.fixture()
def svc(tmp_path):
    store = DeviceStore(tmp_path / "store.twdb", KEY)
    site = SiteMap.parse("20 8 1.0 default\n" + "#" * 20 + "\n"
                         + "\n".join("#" + "." * 18 + "#" for _ in range(6))
                         + "\n" + "#" * 20 + "\n")
    service = TraceService(store, site_maps={"default": site})
    service.ingest_capture(capture_text(), site_id="default")
    yield service
    store.close()


class TestConfig:
    def test_parse(self):
        cfg = parse_config("a = 1\n# comment\nstore_path = /tmp/x.twdb\n\n")
        assert cfg == {"a": "1", "store_path": "/tmp/x.twdb"}

    def test_bad_line(self):
        with pytest.raises(ValueError):
            parse_config("not a pair\n")


class TestGroupDevices:
    def test_ap_excluded_and_macs_clustered(self):
        from tracewave.capture import parse_capture_text
        groups = group_devices(parse_capture_text(capture_text()))
        assert len(groups) == 2
        assert groups[0].macs == PHONE_A
        assert groups[1].macs == PHONE_B


class TestIngest:
    def test_summary(self, svc):
        log = svc._ingest_log()
        assert len(log) == 1
        summary = log[0]["summary"]
        assert summary["devices"] == 2
        assert summary["records"] == 13  # 12 probes + 1 beacon
        assert summary["paths"] == 2

    def test_idempotent(self, svc, tmp_path):
        size_before = svc.store.path.stat().st_size
        again = svc.ingest_capture(capture_text(), site_id="default")
        assert again["devices"] == 2
        assert svc.store.path.stat().st_size == size_before

    def test_ap_only_capture_stores_nothing(self, tmp_path):
        store = DeviceStore(tmp_path / "s2.twdb", KEY)
        service = TraceService(store)
        text = (",".join(CAPTURE_COLUMNS) + "\n"
                + f"{int(1e9)},R1,WIFI,BEACON,0,0,CC:00:00:00:00:01,"
                  f"CC:00:00:00:00:01,-40,,,,,,,,,\n")
        summary = service.ingest_capture(text)
        assert summary["devices"] == 0
        assert service.search_device("") == []
        store.close()

    def test_parse_failure_persists_nothing(self, tmp_path):
        store = DeviceStore(tmp_path / "s3.twdb", KEY)
        service = TraceService(store)
        size = store.path.stat().st_size
        with pytest.raises(Exception):
            service.ingest_capture("timestamp_ns\ngarbage,line\n")
        assert store.path.stat().st_size == size
        store.close()

    def test_reingest_merges_new_macs_into_same_bucket(self, svc):
        text = capture_text().replace("AA:00:00:00:00:02", "AA:00:00:00:00:03")
        svc.ingest_capture(text, site_id="default")
        found = svc.search_device("AA:00:00:00:00:03")
        assert len(found) == 1
        assert found[0]["bucket_id"] == "0"
        assert "AA:00:00:00:00:01" in found[0]["macs"]


class TestSearch:
    def test_exact_mac_resolves_bucket(self, svc):
        results = svc.search_device(PHONE_A[1])
        assert len(results) == 1
        assert set(PHONE_A) <= set(results[0]["macs"])

    def test_any_mac_of_bucket_same_result(self, svc):
        a = svc.search_device(PHONE_A[0])
        b = svc.search_device(PHONE_A[1])
        assert a == b

    def test_unknown_mac_empty(self, svc):
        assert svc.search_device("DE:AD:BE:EF:00:01") == []

    def test_empty_query_lists_all(self, svc):
        assert len(svc.search_device("")) == 2

    def test_fingerprint_fragment_subset(self, svc):
        full = svc.search_device(PHONE_A[0])[0]["fingerprint"]
        results = svc.search_device(full)
        assert any(r["macs"][0] == PHONE_A[0] for r in results)


class TestPath:
    def test_full_window(self, svc):
        points = svc.get_path("0", site_id="default")
        assert len(points) == 6
        assert [p["t_ns"] for p in points] == sorted(p["t_ns"] for p in points)
        assert points[0]["source"] == "TRUTH"

    def test_point_window(self, svc):
        t = int(102e9)
        points = svc.get_path("0", start_ns=t, end_ns=t)
        assert len(points) == 1
        assert points[0]["t_ns"] == t

    def test_unknown_bucket(self, svc):
        with pytest.raises(NotFoundError):
            svc.get_path("99")

    def test_unknown_site(self, svc):
        with pytest.raises(NotFoundError):
            svc.get_path("0", site_id="atlantis")


class TestContacts:
    def test_pair_detected(self, svc):
        rows = svc.get_contacts("0")
        assert rows, "expected at least one contact row"
        assert {r["second_key"] for r in rows} == {"1"}
        row = rows[0]
        assert row["contact_duration"] == sum(
            row[k] for k in ("band_0_5", "band_5_10", "band_10_15"))

    def test_rows_sorted_by_last_contact_desc(self, svc):
        rows = svc.get_contacts("0")
        lasts = [r["last_contact_time"] for r in rows]
        assert lasts == sorted(lasts, reverse=True)

    def test_window_excluding_everything(self, svc):
        assert svc.get_contacts("0", start_s=0.0, end_s=1.0) == []

    def test_widening_never_removes_rows(self, svc):
        narrow = svc.get_contacts("0", start_s=100.0, end_s=103.0)
        wide = svc.get_contacts("0", start_s=90.0, end_s=200.0)
        narrow_pairs = {(r["first_key"], r["second_key"]) for r in narrow}
        wide_pairs = {(r["first_key"], r["second_key"]) for r in wide}
        assert narrow_pairs <= wide_pairs

    def test_unknown_bucket(self, svc):
        with pytest.raises(NotFoundError):
            svc.get_contacts("42")


class TestModelIngest:
    def test_checkpoint_config_produces_bilstm_paths(self, tmp_path):
        # The crafted capture exposes a single wifi column; a matching tiny
        # checkpoint makes ingest emit BiLSTM-source paths, which take
        # precedence over truth when reading the path back.
        from tracewave import bilstm
        from tracewave.service import load_config

        model = bilstm.BilstmModel.create(1, seed=0)
        checkpoint = tmp_path / "model.twv1"
        bilstm.save_checkpoint(model, checkpoint, ["R1:wifi"])
        (tmp_path / "svc.conf").write_text(
            f"store_path = {tmp_path / 's.twdb'}\n"
            f"model_checkpoint = {checkpoint}\n")
        service = TraceService.from_config(
            load_config(tmp_path / "svc.conf"), KEY)
        service.ingest_capture(capture_text(), site_id="default")
        points = service.get_path("0")
        assert points and all(p["source"] == "BILSTM" for p in points)
        truth_points = service.get_path("0", source="TRUTH")
        assert truth_points and truth_points[0]["source"] == "TRUTH"
        service.store.close()


class TestErase:
    def test_erase_then_queries_404(self, svc):
        receipt = svc.erase_device("1")
        assert receipt["blobs"] >= 2
        assert svc.search_device(PHONE_B[0]) == []
        with pytest.raises(NotFoundError):
            svc.get_path("1")
        with pytest.raises(NotFoundError):
            svc.erase_device("1")

    def test_internal_buckets_not_erasable(self, svc):
        with pytest.raises(NotFoundError):
            svc.erase_device("_ingest")


class TestHttp:
    @pytest.fixture()
    def server(self, svc, tmp_path):
        static = tmp_path / "static"
        static.mkdir()
        (static / "index.html").write_text("<html>console</html>")
        httpd = serve(svc, host="127.0.0.1", port=0, static_dir=static)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        base = f"http://127.0.0.1:{httpd.server_address[1]}"
        yield base
        httpd.shutdown()
        httpd.server_close()

    def test_devices_endpoint(self, server):
        r = requests.get(f"{server}/devices", params={"q": PHONE_A[0]})
        assert r.status_code == 200
        assert r.json()[0]["bucket_id"] == "0"

    def test_contacts_endpoint(self, server):
        r = requests.get(f"{server}/devices/0/contacts")
        assert r.status_code == 200
        assert r.json()[0]["second_key"] == "1"

    def test_path_endpoint_and_404(self, server):
        r = requests.get(f"{server}/devices/0/path", params={"site": "default"})
        assert r.status_code == 200
        assert len(r.json()) == 6
        assert requests.get(f"{server}/devices/77/path").status_code == 404

    def test_site_map_endpoint(self, server):
        r = requests.get(f"{server}/sites/default/map")
        assert r.status_code == 200
        body = r.json()
        assert body["width"] == 20 and len(body["rows"]) == 8

    def test_unknown_site_map_404(self, server):
        assert requests.get(f"{server}/sites/atlantis/map").status_code == 404

    def test_capture_upload_multipart(self, server):
        text = capture_text().replace("AA:00", "DD:00").replace("BB:00", "EE:00") \
                             .replace("221:0050f204", "221:00aabbcc") \
                             .replace("221:00a0f0ff", "221:00ddeeff")
        r = requests.post(f"{server}/captures", params={"site": "default"},
                          files={"file": ("cap.csv", text, "text/csv")})
        assert r.status_code == 200
        assert r.json()["devices"] == 2

    def test_delete_endpoint(self, server):
        assert requests.delete(f"{server}/devices/1").status_code == 200
        assert requests.get(f"{server}/devices/1/path").status_code == 404

    def test_static_served(self, server):
        r = requests.get(f"{server}/")
        assert r.status_code == 200
        assert "console" in r.text

    def test_bad_capture_rejected(self, server):
        r = requests.post(f"{server}/captures", data="garbage,row\n",
                          headers={"Content-Type": "text/csv"})
        assert r.status_code == 400


class TestAuth:
    def test_token_required_when_configured(self, svc):
        httpd = serve(svc, host="127.0.0.1", port=0, token="sesame")
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        base = f"http://127.0.0.1:{httpd.server_address[1]}"
        try:
            assert requests.get(f"{base}/devices").status_code == 401
            ok = requests.get(f"{base}/devices",
                              headers={"Authorization": "Bearer sesame"})
            assert ok.status_code == 200
        finally:
            httpd.shutdown()
            httpd.server_close()
