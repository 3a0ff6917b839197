#!/usr/bin/env python3
"""Survey simulation walkthrough.

Plans a coverage survey over the bundled corridor map, emits synthetic
packets through the log-distance channel, and reports what the robot saw.
"""

from importlib import resources

import numpy as np

from tracewave.simulate import (ChannelModel, DeviceProfile, SiteMap,
                                load_routers, run_survey)

site = SiteMap.parse((resources.files("tracewave") / "data" / "corridor.map").read_text())
with resources.as_file(resources.files("tracewave") / "data"
                       / "corridor_routers.csv") as p:
    routers = load_routers(p)

print(f"site {site.site_id}: {site.width}x{site.height} cells at "
      f"{site.resolution_m} m, {len(site.free_cell_centers())} free cells")
print(f"{len(routers)} routers: "
      + ", ".join(f"{r.router_id}@{r.pos_m}" for r in routers[:4]) + ", ...")

channel = ChannelModel(shadow_sigma_db=4.0, ftm_jitter_sigma_ns=1.0)
profile = DeviceProfile(macs=("02:00:00:00:00:01",),
                        model_info=((221, bytes.fromhex("0050f204")),))

runs = run_survey(site, routers, channel, seed=5, n_trajectories=1,
                  profile=profile)
run = runs[0]
print(f"\nsurvey finished: {len(run.waypoints)} waypoints, "
      f"{len(run.records)} packets, {run.retraces} retraces")

visited = np.asarray(run.waypoints)
worst = max(float(np.hypot(visited[:, 0] - cx, visited[:, 1] - cy).min())
            for cx, cy in site.free_cell_centers())
print(f"coverage: every free cell within {worst:.2f} m of a visited position")

kinds = {}
for r in run.records:
    kinds[r.frame_kind.value] = kinds.get(r.frame_kind.value, 0) + 1
print("packet mix:", kinds)

# ASCII render: dots where the robot went.
grid = [list(row) for row in site.dump().splitlines()[1:]]
for x, y in run.waypoints:
    col, row = site.cell_of((x, y))
    grid[row][col] = "o"
print("\n" + "\n".join("".join(row) for row in grid))
