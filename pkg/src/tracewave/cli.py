"""Command-line front end.

    tracewave simulate   synthesize survey captures over a site map
    tracewave cluster    bucket randomized MACs from a capture
    tracewave extract    export synchronized feature frames for one device
    tracewave train      fit the BiLSTM on survey captures
    tracewave localize   predict a path for a capture with a trained model
    tracewave ingest     run the full pipeline into an encrypted store
    tracewave trace      offline contact report from a store
    tracewave serve      start the query service and operator console

The storage key comes from the TRACEWAVE_KEY environment variable (64 hex
chars).  ``--config`` points at a flat ``key = value`` file.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bilstm, localize, macclust, service, simulate
from .capture import parse_capture, serialize_capture, write_capture
from .features import Deployment, NoTxPowerEstimateError, estimate_wifi_tx_power, \
    frames_to_csv, synchronize
from .service import TraceService, group_devices, load_config
from .simulate import ChannelModel, DeviceProfile, SiteMap, load_routers, run_survey
from .store import DeviceStore, key_from_hex


def _storage_key() -> bytes:
    text = os.environ.get("TRACEWAVE_KEY")
    if not text:
        raise SystemExit("TRACEWAVE_KEY is not set (need 64 hex characters)")
    return key_from_hex(text)


def _add_channel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--l0", type=float, default=40.0, help="path loss at d0 (dB)")
    p.add_argument("--d0", type=float, default=1.0, help="reference distance (m)")
    p.add_argument("--exponent", type=float, default=3.0, help="path-loss exponent")
    p.add_argument("--shadow-sigma", type=float, default=4.0,
                   help="shadowing sigma (dB)")
    p.add_argument("--ftm-jitter", type=float, default=1.0,
                   help="FTM timing jitter sigma (ns)")
    p.add_argument("--response-rate", type=float, default=1.0,
                   help="probability a stimulus elicits a packet")


def _channel(args) -> ChannelModel:
    return ChannelModel(l0_db=args.l0, d0_m=args.d0, exponent_n=args.exponent,
                        shadow_sigma_db=args.shadow_sigma,
                        ftm_jitter_sigma_ns=args.ftm_jitter,
                        response_rate=args.response_rate)


def _profile(args) -> DeviceProfile:
    macs = tuple(args.device_macs.split(","))
    model_info = tuple()
    if args.model_info:
        model_info = tuple(
            (int(part.split(":")[0]), bytes.fromhex(part.split(":")[1]))
            for part in args.model_info.split(";") if part)
    return DeviceProfile(macs=macs, model_info=model_info,
                         p_tx_wifi_dbm=args.device_tx_wifi,
                         p_tx_ble_dbm=args.device_tx_ble,
                         emit_sqi=not args.no_sqi)


def cmd_simulate(args) -> int:
    site = SiteMap.load(args.map)
    routers = load_routers(args.routers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = run_survey(site, routers, _channel(args), seed=args.seed,
                      n_trajectories=args.trajectories, profile=_profile(args),
                      waypoint_dt_ns=args.waypoint_dt_ns)
    for i, run in enumerate(runs):
        write_capture(run.records, out / f"capture_{i:02d}.csv")
        (out / f"truth_{i:02d}.csv").write_text(simulate.truth_to_csv(run.truth))
        print(f"trajectory {i}: {len(run.records)} records, "
              f"{len(run.truth)} truth points, mac {run.mac}")
    return 0


def cmd_cluster(args) -> int:
    records = parse_capture(args.capture)
    groups = group_devices(records)
    buckets = [macclust.MacBucket(g.fingerprint, frozenset(g.macs))
               for g in groups if g.fingerprint is not None]
    report = macclust.bucket_report(buckets)
    Path(args.out).write_text(report)
    print(f"{len(buckets)} buckets -> {args.out}")
    unclustered = [g for g in groups if g.fingerprint is None]
    if unclustered:
        print(f"{len(unclustered)} unfingerprintable MACs left unclustered")
    return 0


def cmd_extract(args) -> int:
    records = parse_capture(args.capture)
    groups = group_devices(records)
    if not groups:
        raise SystemExit("no mobile devices in capture")
    if args.bucket >= len(groups):
        raise SystemExit(f"bucket {args.bucket} out of range (0..{len(groups) - 1})")
    group = groups[args.bucket]
    deployment = Deployment.from_records(group.records)
    try:
        tx = estimate_wifi_tx_power(group.records).p_wifi_tx_dbm
    except NoTxPowerEstimateError:
        tx = None
    frames = synchronize(group.records, deployment, wifi_tx_dbm=tx)
    Path(args.out).write_text(frames_to_csv(frames, deployment))
    print(f"bucket {args.bucket} ({'/'.join(group.macs)}): {len(frames)} frames, "
          f"F_input={deployment.f_input} -> {args.out}")
    return 0


def _survey_points(paths: list[str]) -> tuple[list, Deployment]:
    all_records = []
    for path in paths:
        all_records.extend(parse_capture(path))
    groups = group_devices(all_records)
    if not groups:
        raise SystemExit("no mobile devices in survey captures")
    points = []
    deployment = None
    for group in groups:
        dep = Deployment.from_records(group.records)
        deployment = dep if deployment is None else deployment
        if dep != deployment:
            raise SystemExit("survey captures disagree on the feature layout")
        try:
            tx = estimate_wifi_tx_power(group.records).p_wifi_tx_dbm
        except NoTxPowerEstimateError:
            tx = None
        points.extend(localize.survey_points_from_records(
            group.records, deployment, wifi_tx_dbm=tx))
    return points, deployment


def cmd_train(args) -> int:
    points, deployment = _survey_points(args.survey)
    print(f"{len(points)} survey points, F_input={deployment.f_input}")
    trajectories = localize.generate_trajectories(
        points, n=args.trajectories, length=args.length, seed=args.seed)
    x, y = localize.trajectories_to_arrays(trajectories, deployment)
    model = bilstm.BilstmModel.create(deployment.f_input, seed=args.seed)
    t0 = time.time()
    losses = bilstm.train(model, x, y, epochs=args.epochs, lr=args.lr,
                          batch_size=args.batch_size, seed=args.seed,
                          log=lambda e, l: print(f"epoch {e}: loss {l:.4f}"))
    print(f"trained in {time.time() - t0:.1f}s, final loss {losses[-1]:.4f}")
    bilstm.save_checkpoint(model, args.out, deployment.labels())
    print(f"checkpoint -> {args.out}")
    return 0


def cmd_localize(args) -> int:
    records = parse_capture(args.capture)
    groups = group_devices(records)
    if args.bucket >= len(groups):
        raise SystemExit(f"bucket {args.bucket} out of range")
    group = groups[args.bucket]
    if args.knn_survey:
        points, deployment = _survey_points([args.knn_survey])
        try:
            tx = estimate_wifi_tx_power(group.records).p_wifi_tx_dbm
        except NoTxPowerEstimateError:
            tx = None
        frames = synchronize(group.records, deployment, wifi_tx_dbm=tx)
        pred = localize.knn_predict(points, frames, k=args.k,
                                    deployment=deployment)
    else:
        if not args.model:
            raise SystemExit("need --model or --knn-survey")
        model, columns = bilstm.load_checkpoint(args.model)
        deployment = Deployment.from_labels(columns)
        try:
            tx = estimate_wifi_tx_power(group.records).p_wifi_tx_dbm
        except NoTxPowerEstimateError:
            tx = None
        frames = synchronize(group.records, deployment, wifi_tx_dbm=tx)
        pred = bilstm.forward(model, localize.frames_to_inputs(frames, deployment))
    lines = ["t_ns,x_m,y_m"]
    lines.extend(f"{f.t_ns},{float(p[0])!r},{float(p[1])!r}"
                 for f, p in zip(frames, pred))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"{len(frames)} positions -> {args.out}")
    return 0


def _service_from_args(args) -> TraceService:
    config = load_config(args.config) if args.config else {}
    if args.store:
        config["store_path"] = args.store
    if "store_path" not in config:
        raise SystemExit("need --store or store_path in config")
    return TraceService.from_config(config, _storage_key())


def cmd_ingest(args) -> int:
    svc = _service_from_args(args)
    text = Path(args.capture).read_text(encoding="utf-8")
    summary = svc.ingest_capture(text, site_id=args.site)
    print(f"ingested {args.capture}: {summary['records']} records, "
          f"{summary['devices']} devices, {summary['frames']} frames, "
          f"{summary['paths']} paths")
    return 0


def cmd_trace(args) -> int:
    svc = _service_from_args(args)
    csv = svc.contacts_report_csv(args.bucket, start_s=args.start,
                                  end_s=args.end,
                                  max_distance=args.max_distance)
    Path(args.out).write_text(csv)
    print(f"contact report for bucket {args.bucket} -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    config = load_config(args.config) if args.config else {}
    if args.store:
        config["store_path"] = args.store
    svc = TraceService.from_config(config, _storage_key())
    host = args.host or config.get("host", "127.0.0.1")
    port = args.port or int(config.get("port", 8787))
    static_dir = config.get("static_dir")
    token = config.get("api_token")
    server = service.serve(svc, host=host, port=port, static_dir=static_dir,
                           token=token)
    print(f"serving on http://{host}:{port} "
          f"(static={static_dir or 'none'}, auth={'on' if token else 'off'})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracewave",
        description="Passive indoor contact tracing pipeline.")
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    parser.add_argument("--config", help="flat key = value config file")
    # Global flags are accepted before or after the subcommand; the
    # subcommand copy only overrides when actually provided.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=lambda **kw: argparse.ArgumentParser(
                                    parents=[common], **kw))

    p = sub.add_parser("simulate", help="synthesize survey captures")
    p.add_argument("--map", required=True)
    p.add_argument("--routers", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trajectories", type=int, default=3)
    p.add_argument("--waypoint-dt-ns", type=int, default=100_000)
    p.add_argument("--device-macs", default="02:00:00:00:00:01")
    p.add_argument("--device-tx-wifi", type=float, default=15.0)
    p.add_argument("--device-tx-ble", type=float, default=4.0)
    p.add_argument("--model-info", default="221:0050f204")
    p.add_argument("--no-sqi", action="store_true")
    _add_channel_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cluster", help="bucket randomized MACs")
    p.add_argument("--capture", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("extract", help="export feature frames")
    p.add_argument("--capture", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bucket", type=int, default=0)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the BiLSTM")
    p.add_argument("--survey", required=True, nargs="+",
                   help="survey capture file(s) with truth positions")
    p.add_argument("--out", required=True)
    p.add_argument("--trajectories", type=int, default=20_000)
    p.add_argument("--length", type=int, default=20)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("localize", help="predict a device path")
    p.add_argument("--capture", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bucket", type=int, default=0)
    p.add_argument("--model")
    p.add_argument("--knn-survey")
    p.add_argument("--k", type=int, default=3)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("ingest", help="ingest a capture into the store")
    p.add_argument("--store")
    p.add_argument("--site", default="default")
    p.add_argument("capture")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("trace", help="offline contact report")
    p.add_argument("--store")
    p.add_argument("--bucket", required=True)
    p.add_argument("--start", type=float)
    p.add_argument("--end", type=float)
    p.add_argument("--max-distance", type=float, default=15.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("serve", help="start the query service")
    p.add_argument("--store")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
