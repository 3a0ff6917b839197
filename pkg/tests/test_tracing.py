import math

import numpy as np
import pytest

from tracewave.tracing import (
    ContactHistory, TraceRecord, build_contact_graph, contact_report_csv,
    generate_contact_history, indirect_contacts,
)

from oracles import bfs_contact_edges, brute_force_contacts


def tr(key, t, cell, site="siteA"):
    return TraceRecord(key=key, site_id=site, time_s=float(t), cell=cell)


def histories_from_oracle(matches):
    """Build expected ContactHistory objects from the brute-force match map."""
    out = []
    for (first, second, site), (times, dists) in sorted(matches.items()):
        bands = [0, 0, 0]
        for d in dists:
            bands[0 if d < 5 else (1 if d < 10 else 2)] += 1
        out.append(ContactHistory(
            first_key=first, second_key=second, site_id=site,
            contact_duration=len(times), last_contact_time_s=times[-1],
            contact_distance_avg_cells=sum(dists) / len(dists),
            contact_distance_min_cells=min(dists),
            distance_range=tuple(bands)))
    return out


class TestGenerateContactHistory:
    def test_single_pair_example(self):
        target = [tr("A", 100.0, (0, 0))]
        others = [tr("B", 110.0, (1, 0))]
        histories = generate_contact_history(target, others)
        expected = histories_from_oracle(brute_force_contacts(target, others))
        assert histories == expected
        h = histories[0]
        assert h.contact_duration == 1
        assert h.contact_distance_min_cells == 1.0
        assert h.contact_distance_avg_cells == 1.0
        assert h.last_contact_time_s == 100.0
        assert h.distance_range == (1, 0, 0)

    def test_distance_sixteen_excluded(self):
        target = [tr("A", 100.0, (0, 0))]
        others = [tr("B", 100.0, (16, 0))]
        assert generate_contact_history(target, others) == []

    def test_distance_fifteen_included(self):
        target = [tr("A", 100.0, (0, 0))]
        others = [tr("B", 100.0, (15, 0))]
        histories = generate_contact_history(target, others)
        assert len(histories) == 1
        assert histories[0].distance_range == (0, 0, 1)

    def test_window_boundary_closed(self):
        target = [tr("A", 100.0, (0, 0))]
        others = [tr("B", 115.0, (0, 0)), tr("C", 115.0001, (0, 0)),
                  tr("D", 85.0, (0, 0)), tr("E", 84.9999, (0, 0))]
        histories = generate_contact_history(target, others)
        assert {h.second_key for h in histories} == {"B", "D"}

    def test_site_mismatch_excluded(self):
        target = [tr("A", 100.0, (0, 0), site="siteA")]
        others = [tr("B", 100.0, (0, 0), site="siteB")]
        assert generate_contact_history(target, others) == []

    def test_empty_inputs(self):
        assert generate_contact_history([], []) == []
        assert generate_contact_history([tr("A", 0, (0, 0))], []) == []

    def test_duration_equals_band_total(self):
        rng = np.random.default_rng(0)
        target = [tr("A", t, (int(rng.integers(0, 8)), int(rng.integers(0, 8))))
                  for t in sorted(rng.uniform(0, 500, size=60))]
        others = [tr(f"B{i % 3}", t, (int(rng.integers(0, 8)), int(rng.integers(0, 8))))
                  for i, t in enumerate(sorted(rng.uniform(0, 500, size=80)))]
        for h in generate_contact_history(target, others):
            assert h.contact_duration == sum(h.distance_range)
            assert h.contact_distance_min_cells <= h.contact_distance_avg_cells <= 15.0

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force_random(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(0, 120)), int(rng.integers(0, 150))
        sites = ["s1", "s2"]

        def mk(key_pool, count):
            recs = []
            for t in sorted(rng.uniform(0, 300, size=count)):
                recs.append(TraceRecord(
                    key=str(rng.choice(key_pool)),
                    site_id=str(rng.choice(sites)),
                    time_s=float(t),
                    cell=(int(rng.integers(-20, 20)), int(rng.integers(-20, 20)))))
            return recs

        target = mk(["A"], n)
        others = mk(["B", "C", "D"], m)
        got = generate_contact_history(target, others)
        expected = histories_from_oracle(brute_force_contacts(target, others))
        assert got == expected

    def test_monotone_in_max_distance_and_window(self):
        rng = np.random.default_rng(3)
        target = [tr("A", t, (int(rng.integers(0, 10)), 0))
                  for t in sorted(rng.uniform(0, 200, size=40))]
        others = [tr("B", t, (int(rng.integers(0, 10)), 0))
                  for t in sorted(rng.uniform(0, 200, size=40))]

        def durations(max_d, res):
            hs = generate_contact_history(target, others, max_distance=max_d,
                                          time_resolution=res)
            return {(h.first_key, h.second_key, h.site_id): h.contact_duration
                    for h in hs}

        base = durations(5, 30)
        wider = durations(10, 30)
        longer = durations(5, 60)
        for key, dur in base.items():
            assert wider.get(key, 0) >= dur
            assert longer.get(key, 0) >= dur

    def test_symmetry_of_pair_statistics(self):
        rng = np.random.default_rng(4)
        a = [tr("A", t, (int(rng.integers(0, 6)), int(rng.integers(0, 6))))
             for t in sorted(rng.uniform(0, 100, size=30))]
        b = [tr("B", t, (int(rng.integers(0, 6)), int(rng.integers(0, 6))))
             for t in sorted(rng.uniform(0, 100, size=30))]
        fwd = generate_contact_history(a, b)
        rev = generate_contact_history(b, a)
        assert len(fwd) == len(rev) == 1
        assert fwd[0].contact_duration == rev[0].contact_duration
        assert fwd[0].contact_distance_min_cells == rev[0].contact_distance_min_cells
        assert fwd[0].distance_range == rev[0].distance_range


class TestIndirectContacts:
    def test_weight_at_zero_delta(self):
        target = [tr("A", 100.0, (0, 0))]
        others = [tr("B", 100.0, (0, 0))]
        histories = indirect_contacts(target, others, half_life_s=60.0)
        assert histories[0].exposure_score == 1.0

    def test_weight_at_half_life(self):
        target = [tr("A", 100.0, (0, 0))]
        others = [tr("B", 160.0, (0, 0))]
        histories = indirect_contacts(target, others, half_life_s=60.0)
        assert histories[0].exposure_score == 0.5

    def test_weights_sum(self):
        target = [tr("A", 100.0, (0, 0))]
        others = [tr("B", 100.0, (0, 0)), tr("B", 160.0, (0, 0))]
        histories = indirect_contacts(target, others, half_life_s=60.0)
        assert histories[0].exposure_score == 1.5
        assert histories[0].contact_duration == 2

    def test_window_one_sided(self):
        target = [tr("A", 100.0, (0, 0))]
        others = [tr("B", 99.0, (0, 0)), tr("C", 101.0, (0, 0))]
        histories = indirect_contacts(target, others, half_life_s=60.0)
        assert {h.second_key for h in histories} == {"C"}

    def test_horizon_defaults_to_four_half_lives(self):
        target = [tr("A", 0.0, (0, 0))]
        others = [tr("B", 239.9, (0, 0)), tr("C", 240.1, (0, 0))]
        histories = indirect_contacts(target, others, half_life_s=60.0)
        assert {h.second_key for h in histories} == {"B"}

    def test_invalid_half_life(self):
        with pytest.raises(ValueError):
            indirect_contacts([], [], half_life_s=0.0)


class TestContactGraph:
    def _history(self, a, b):
        return ContactHistory(first_key=a, second_key=b, site_id="s",
                              contact_duration=1, last_contact_time_s=0.0,
                              contact_distance_avg_cells=1.0,
                              contact_distance_min_cells=1.0,
                              distance_range=(1, 0, 0))

    def test_star_graph(self):
        histories = [self._history("c", x) for x in ("u1", "u2", "u3")]
        graph = build_contact_graph({"c"}, histories)
        assert graph.nodes == {"c", "u1", "u2", "u3"}
        assert sorted((a, b) for a, b, _ in graph.edges) == \
            [("c", "u1"), ("c", "u2"), ("c", "u3")]

    def test_no_histories(self):
        graph = build_contact_graph({"c"}, [])
        assert graph.nodes == {"c"}
        assert graph.edges == []

    def test_depth_two_chain(self):
        histories = [self._history("c", "a"), self._history("a", "b")]
        graph = build_contact_graph({"c"}, histories, depth=2)
        assert sorted((a, b) for a, b, _ in graph.edges) == [("a", "b"), ("c", "a")]

    @pytest.mark.parametrize("depth", [1, 2, 3])
    def test_matches_bfs_oracle(self, depth):
        rng = np.random.default_rng(depth)
        keys = [f"k{i}" for i in range(12)]
        pairs = []
        for _ in range(20):
            a, b = rng.choice(keys, size=2, replace=False)
            pairs.append((str(a), str(b)))
        histories = [self._history(a, b) for a, b in pairs]
        confirmed = {"k0", "k5"}
        graph = build_contact_graph(confirmed, histories, depth=depth)
        expected = bfs_contact_edges(confirmed, pairs, depth)
        assert {(a, b) for a, b, _ in graph.edges} == expected


class TestReport:
    def test_csv_columns(self):
        target = [tr("A", 100.0, (0, 0))]
        others = [tr("B", 110.0, (3, 4))]
        text = contact_report_csv(generate_contact_history(target, others))
        lines = text.strip().splitlines()
        assert lines[0].split(",") == [
            "first_key", "second_key", "site_id", "contact_duration",
            "last_contact_time", "avg_distance", "min_distance",
            "band_0_5", "band_5_10", "band_10_15"]
        assert lines[1] == "A,B,siteA,1,100.0,5.0,5.0,0,1,0"
