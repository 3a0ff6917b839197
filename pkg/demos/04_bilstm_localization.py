#!/usr/bin/env python3
"""Train the BiLSTM on a small simulated survey and compare it with the
3-NN fingerprint baseline.

A scaled-down version of the full pipeline (the acceptance suite runs the
real thing): tiny corridor, a few hundred trajectories, a couple of minutes.
"""

import time
from importlib import resources

import numpy as np

from tracewave import bilstm, localize
from tracewave.features import Deployment, estimate_wifi_tx_power
from tracewave.simulate import (ChannelModel, DeviceProfile, SiteMap,
                                load_routers, run_survey)

site = SiteMap.parse((resources.files("tracewave") / "data" / "corridor.map").read_text())
with resources.as_file(resources.files("tracewave") / "data"
                       / "corridor_routers.csv") as p:
    routers = load_routers(p)

channel = ChannelModel(shadow_sigma_db=2.0, ftm_jitter_sigma_ns=1.0)
profile = DeviceProfile(macs=("02:00:00:00:00:01", "02:00:00:00:00:02"),
                        model_info=((221, bytes.fromhex("0050f204")),),
                        emit_sqi=False)
runs = run_survey(site, routers, channel, seed=3, n_trajectories=2,
                  profile=profile)
deployment = Deployment.from_records(runs[0].records)
print(f"deployment: F_input={deployment.f_input}")


def survey_points(run):
    tx = estimate_wifi_tx_power(run.records).p_wifi_tx_dbm
    return localize.survey_points_from_records(run.records, deployment,
                                               wifi_tx_dbm=tx)


train_pts = survey_points(runs[0])
test_pts = survey_points(runs[1])
print(f"{len(train_pts)} training survey points, {len(test_pts)} held out")

trajectories = localize.generate_trajectories(train_pts, n=800, length=20, seed=1)
x, y = localize.trajectories_to_arrays(trajectories, deployment)

model = bilstm.BilstmModel.create(deployment.f_input, seed=0)
t0 = time.time()
losses = bilstm.train(model, x, y, epochs=45, lr=2e-3, batch_size=64, seed=0,
                      log=lambda e, l: e % 15 == 0 and print(f"  epoch {e}: {l:.4f}"))
print(f"trained in {time.time() - t0:.0f}s")

frames = [p.frame for p in test_pts]
truth = np.array([p.pos_m for p in test_pts])
pred = bilstm.forward(model, localize.frames_to_inputs(frames, deployment))
m_lstm = localize.evaluate(pred, truth)
m_knn = localize.evaluate(
    localize.knn_predict(train_pts, frames, k=3, deployment=deployment), truth)

print(f"\nBiLSTM: RMSE {m_lstm.rmse_m:.2f} m, MAE {m_lstm.mae_m:.2f} m")
print(f"3-NN:   RMSE {m_knn.rmse_m:.2f} m, MAE {m_knn.mae_m:.2f} m")
print("(the acceptance suite trains the full 2000-trajectory version)")
