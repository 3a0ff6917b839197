"""Contact histories, suspect graphs, and indirect-contact exposure.

A contact history pairs one confirmed-case trace with one other device
within a closed +-15 s window (half the 30 s time resolution) at the same
site, whenever the predicted grid cells lie within 15 cells of each other.
Per pair it accumulates duration (matched samples), the last contact time,
average and minimum distance, and a three-band distance histogram.

Indirect contacts extend the window one-sidedly after the confirmed case
leaves, weighting each match by pathogen decay 2^(-dt / half_life).
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

MAX_DISTANCE_CELLS = 15.0
TIME_RESOLUTION_S = 30.0

DISTANCE_BANDS = ((0.0, 5.0), (5.0, 10.0), (10.0, 15.0))


@dataclass(frozen=True)
class TraceRecord:
    key: str
    site_id: str
    time_s: float
    cell: tuple[int, int]


@dataclass
class ContactHistory:
    first_key: str
    second_key: str
    site_id: str
    contact_duration: int
    last_contact_time_s: float
    contact_distance_avg_cells: float
    contact_distance_min_cells: float
    distance_range: tuple[int, int, int]
    exposure_score: Optional[float] = None


@dataclass
class ContactGraph:
    nodes: set[str]
    edges: list[tuple[str, str, ContactHistory]]


def _band_index(distance: float) -> int:
    if distance < 5.0:
        return 0
    if distance < 10.0:
        return 1
    return 2


def _neighbour_offsets(max_distance: float) -> list[tuple[int, int, float]]:
    """Precomputed relative cell offsets within the distance cap, with their
    Euclidean lengths (the in-memory stand-in for the distance map)."""
    r = int(math.floor(max_distance))
    out = []
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            d = math.hypot(di, dj)
            if d <= max_distance:
                out.append((di, dj, d))
    return out


def _histories_from_matches(matches: dict, weights: Optional[dict] = None) -> list[ContactHistory]:
    histories = []
    for (first, second, site), (times, dists) in sorted(matches.items()):
        bands = [0, 0, 0]
        for d in dists:
            bands[_band_index(d)] += 1
        histories.append(ContactHistory(
            first_key=first, second_key=second, site_id=site,
            contact_duration=len(times),
            last_contact_time_s=times[-1],
            contact_distance_avg_cells=sum(dists) / len(dists),
            contact_distance_min_cells=min(dists),
            distance_range=tuple(bands),
            exposure_score=None if weights is None else sum(weights[(first, second, site)]),
        ))
    return histories


def _index_others(others: Sequence[TraceRecord]):
    """others grouped by (site, cell) as (time, input position, record)
    triples, each group time-sorted."""
    index: dict[tuple[str, tuple[int, int]], list[tuple[float, int, TraceRecord]]] = {}
    for pos, o in enumerate(others):
        index.setdefault((o.site_id, o.cell), []).append((o.time_s, pos, o))
    for group in index.values():
        group.sort(key=lambda item: (item[0], item[1]))
    return index


def generate_contact_history(target: Sequence[TraceRecord],
                             others: Sequence[TraceRecord],
                             max_distance: float = MAX_DISTANCE_CELLS,
                             time_resolution: float = TIME_RESOLUTION_S) -> list[ContactHistory]:
    """Contact histories between a target device and everything in ``others``.

    For each target sample, other samples within the closed window
    [t - time_resolution/2, t + time_resolution/2], at the same site and
    within ``max_distance`` cells, accumulate into one history per
    (target_key, other_key, site).  Inputs must be time-sorted; output is
    ordered by (first_key, second_key, site_id).
    """
    index = _index_others(others)
    offsets = _neighbour_offsets(max_distance)
    half = 0.5 * time_resolution
    matches: dict[tuple, tuple[list, list]] = {}
    for t in target:
        ci, cj = t.cell
        found: list[tuple[int, TraceRecord, float]] = []
        for di, dj, dist in offsets:
            group = index.get((t.site_id, (ci + di, cj + dj)))
            if not group:
                continue
            lo = bisect_left(group, (t.time_s - half,))
            hi = bisect_right(group, (t.time_s + half, len(others)))
            for _, pos, o in group[lo:hi]:
                found.append((pos, o, dist))
        # Accumulate in input order so float sums match the direct scan.
        for _, o, dist in sorted(found, key=lambda item: item[0]):
            key = (t.key, o.key, t.site_id)
            ts, ds = matches.setdefault(key, ([], []))
            ts.append(t.time_s)
            ds.append(dist)
    return _histories_from_matches(matches)


def indirect_contacts(target: Sequence[TraceRecord],
                      others: Sequence[TraceRecord],
                      half_life_s: float,
                      max_distance: float = MAX_DISTANCE_CELLS,
                      horizon_s: Optional[float] = None) -> list[ContactHistory]:
    """Surface/droplet exposure after the confirmed case has left.

    The window becomes one-sided, [t, t + horizon], and each match carries
    weight 2^(-dt / half_life); a history's exposure_score sums them.
    """
    if half_life_s <= 0:
        raise ValueError("half_life_s must be positive")
    if horizon_s is None:
        horizon_s = 4.0 * half_life_s
    index = _index_others(others)
    offsets = _neighbour_offsets(max_distance)
    matches: dict[tuple, tuple[list, list]] = {}
    weights: dict[tuple, list] = {}
    for t in target:
        ci, cj = t.cell
        found: list[tuple[int, TraceRecord, float]] = []
        for di, dj, dist in offsets:
            group = index.get((t.site_id, (ci + di, cj + dj)))
            if not group:
                continue
            lo = bisect_left(group, (t.time_s,))
            hi = bisect_right(group, (t.time_s + horizon_s, len(others)))
            for _, pos, o in group[lo:hi]:
                found.append((pos, o, dist))
        for _, o, dist in sorted(found, key=lambda item: item[0]):
            key = (t.key, o.key, t.site_id)
            ts, ds = matches.setdefault(key, ([], []))
            ts.append(t.time_s)
            ds.append(dist)
            weights.setdefault(key, []).append(
                2.0 ** (-(o.time_s - t.time_s) / half_life_s))
    return _histories_from_matches(matches, weights)


def build_contact_graph(confirmed: Iterable[str],
                        histories: Sequence[ContactHistory],
                        depth: int = 1) -> ContactGraph:
    """Star graph of confirmed cases and their contacts; with depth > 1 the
    frontier expands breadth-first over the contact relation."""
    nodes: set[str] = set(confirmed)
    for h in histories:
        nodes.add(h.first_key)
        nodes.add(h.second_key)
    edges: list[tuple[str, str, ContactHistory]] = []
    visited = set(confirmed)
    frontier = set(confirmed)
    for _ in range(depth):
        next_frontier: set[str] = set()
        for h in histories:
            for source, other in ((h.first_key, h.second_key),
                                  (h.second_key, h.first_key)):
                if source in frontier and other not in visited:
                    edges.append((source, other, h))
                    next_frontier.add(other)
        visited |= next_frontier
        frontier = next_frontier
        if not frontier:
            break
    return ContactGraph(nodes=nodes, edges=edges)


REPORT_COLUMNS = ("first_key,second_key,site_id,contact_duration,"
                  "last_contact_time,avg_distance,min_distance,"
                  "band_0_5,band_5_10,band_10_15")


def contact_report_csv(histories: Sequence[ContactHistory]) -> str:
    lines = [REPORT_COLUMNS]
    for h in histories:
        lines.append(
            f"{h.first_key},{h.second_key},{h.site_id},{h.contact_duration},"
            f"{h.last_contact_time_s!r},{h.contact_distance_avg_cells!r},"
            f"{h.contact_distance_min_cells!r},{h.distance_range[0]},"
            f"{h.distance_range[1]},{h.distance_range[2]}")
    return "\n".join(lines) + "\n"
