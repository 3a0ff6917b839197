#!/usr/bin/env python3
"""Contact histories, the suspect graph, and indirect exposure.

Two people walk a hallway fifteen seconds apart; a third never comes close.
The direct contact report catches the first pair, the indirect report
scores the lingering-droplet exposure for the third.
"""

from tracewave.tracing import (TraceRecord, build_contact_graph,
                               contact_report_csv, generate_contact_history,
                               indirect_contacts)


def walk(key, t0, cells, dt=10.0, site="eow3"):
    return [TraceRecord(key=key, site_id=site, time_s=t0 + i * dt, cell=c)
            for i, c in enumerate(cells)]


hall = [(x, 0) for x in range(10)]
confirmed = walk("case-0", 100.0, hall)
close_contact = walk("user-1", 112.0, hall)                 # trailing 12 s
far_away = walk("user-2", 100.0, [(x, 40) for x in range(10)])  # 40 cells off

others = sorted(close_contact + far_away, key=lambda r: r.time_s)
histories = generate_contact_history(confirmed, others)
print("== direct contact report ==")
print(contact_report_csv(histories))

graph = build_contact_graph({"case-0"}, histories)
print(f"suspect graph: {sorted(graph.nodes)} with edges "
      f"{[(a, b) for a, b, _ in graph.edges]}")

print("\n== indirect (surface/droplet) exposure ==")
late_visitor = walk("user-3", 400.0, hall)  # 5 minutes behind the case
indirect = indirect_contacts(confirmed, late_visitor, half_life_s=600.0)
for h in indirect:
    print(f"{h.first_key} -> {h.second_key}: {h.contact_duration} touches, "
          f"exposure score {h.exposure_score:.2f} "
          f"(half-life weighting, no direct overlap required)")
