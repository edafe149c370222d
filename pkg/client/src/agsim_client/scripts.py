"""Console scripts: ping the endpoints, probe odometry rates, drive tracking."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import threading
import time

from . import CAR, MULTIROTOR, PORT_OFFSETS, AgsimClient, Endpoint, RpcError, connect


def _base_port(args) -> int:
    if args.port is not None:
        return args.port
    return int(os.environ.get("AGSIM_BASE_PORT", "41451"))


def ping_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="agsim-ping", description="Ping all three agsim endpoints")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=None, help="base port (env AGSIM_BASE_PORT or 41451)")
    args = parser.parse_args(argv)
    try:
        client = AgsimClient(args.host, _base_port(args))
    except ConnectionRefusedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for vtype, ep in client.endpoints.items():
        t0 = time.perf_counter()
        ep.ping()
        print(f"{vtype:>10} port {ep.port}: ok ({(time.perf_counter()-t0)*1e3:.2f} ms)")
    client.close()
    return 0


def poll_rate_probe(host: str, base_port: int, vehicles: list, hz: float, seconds: float) -> dict:
    """Poll get_odometry per vehicle at the target rate; report achieved rates.

    One connection per vehicle, one thread each (endpoints are
    single-threaded by design).
    """
    results: dict = {}

    def worker(vid: str, vtype: str):
        ep = Endpoint(host, base_port + PORT_OFFSETS[vtype], vtype)
        count = 0
        errors = []
        t0 = time.perf_counter()
        k = 0
        while True:
            now = time.perf_counter() - t0
            if now >= seconds:
                break
            lag = k / hz - now
            if lag > 0:
                time.sleep(lag)
            try:
                payload = ep.call("get_odometry", vid)
                if not payload:
                    errors.append("EMPTY_PAYLOAD")
            except RpcError as exc:
                errors.append(exc.code)
            count += 1
            k += 1
        elapsed = time.perf_counter() - t0
        ep.close()
        results[vid] = {"achieved_hz": count / elapsed, "requests": count, "errors": errors}

    threads = [threading.Thread(target=worker, args=(v["id"], v["type"])) for v in vehicles]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return results


def rates_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="agsim-rates", description="Odometry polling rate probe")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--hz", type=float, default=26.0, help="per-vehicle request rate")
    parser.add_argument("--seconds", type=float, default=30.0)
    parser.add_argument("--min-hz", type=float, default=25.0, help="pass threshold per vehicle")
    parser.add_argument("--out", default=None, help="write the JSON report here")
    args = parser.parse_args(argv)
    try:
        client = connect(args.host, _base_port(args))
    except ConnectionRefusedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    vehicles = client.list_vehicles()
    client.close()
    print(f"polling {len(vehicles)} vehicles at {args.hz} Hz for {args.seconds} s")
    results = poll_rate_probe(args.host, _base_port(args), vehicles, args.hz, args.seconds)
    ok = True
    for vid in sorted(results):
        r = results[vid]
        good = r["achieved_hz"] >= args.min_hz and not r["errors"]
        ok &= good
        print(f"{vid:>8}: {r['achieved_hz']:6.2f} Hz over {r['requests']} requests, "
              f"errors={len(r['errors'])} [{'ok' if good else 'FAIL'}]")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(results, f, indent=1)
    return 0 if ok else 1


def _wrap(a: float) -> float:
    while a > math.pi:
        a -= 2 * math.pi
    while a <= -math.pi:
        a += 2 * math.pi
    return a


def track_demo_main(argv=None) -> int:
    """Drive the tracking task entirely over RPC against a served scenario.

    The server runs the tracking scenario (scripted target, idle agents);
    this script closes the standoff loops from outside, like an external
    autonomy stack would.
    """
    parser = argparse.ArgumentParser(prog="agsim-track-demo")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--uav", default="uav1")
    parser.add_argument("--ugv", default="ugv1")
    parser.add_argument("--uav-distance", type=float, default=14.0)
    parser.add_argument("--ugv-distance", type=float, default=6.0)
    parser.add_argument("--altitude", type=float, default=12.0)
    parser.add_argument("--gain", type=float, default=0.8)
    parser.add_argument("--duration", type=float, default=200.0, help="simulated seconds to drive")
    parser.add_argument("--period", type=float, default=0.05, help="wall seconds between control cycles")
    parser.add_argument("--out", default="track_demo_report.json")
    args = parser.parse_args(argv)
    try:
        client = connect(args.host, _base_port(args))
    except ConnectionRefusedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    series = []
    prev_truth = None
    prev_t = None
    ff_n = ff_e = 0.0
    start_sim = client.sim_time()["seconds"]
    while True:
        cycle_t0 = time.perf_counter()
        now = client.sim_time()["seconds"] - start_sim
        if now >= args.duration:
            break
        truth = client.target_truth()
        uav = client.get_state(MULTIROTOR, args.uav)
        ugv = client.get_state(CAR, args.ugv)
        tn, te, td = truth["position"]

        if prev_truth is not None and truth["seconds"] > prev_t:
            dt = truth["seconds"] - prev_t
            beta = 0.3
            ff_n = (1 - beta) * ff_n + beta * (tn - prev_truth[0]) / dt
            ff_e = (1 - beta) * ff_e + beta * (te - prev_truth[1]) / dt
        prev_truth = (tn, te)
        prev_t = truth["seconds"]

        def standoff(state, desired):
            px, py, pz = state["position"]
            dn, de, dd = tn - px, te - py, td - pz
            dist = math.sqrt(dn * dn + de * de + dd * dd)
            horiz = math.hypot(dn, de)
            un, ue = (dn / horiz, de / horiz) if horiz > 1e-9 else (0.0, 0.0)
            err = args.gain * (dist - desired)
            return dist, un, ue, err

        uav_dist, un, ue, err = standoff(uav, args.uav_distance)
        vd = args.gain * ((-args.altitude) - uav["position"][2])
        yaw = math.atan2(te - uav["position"][1], tn - uav["position"][0])
        client.send_command(MULTIROTOR, args.uav, {
            "mode": "velocity",
            "velocity": [ff_n + un * err, ff_e + ue * err, vd],
            "yaw": yaw,
        })

        ugv_dist, un, ue, err = standoff(ugv, args.ugv_distance)
        speed = ff_n * un + ff_e * ue + err
        client.send_command(CAR, args.ugv, {
            "mode": "waypoint",
            "waypoint": [tn, te, ugv["position"][2]],
            "speed": speed,
        })

        bearing = math.atan2(te - ugv["position"][1], tn - ugv["position"][0])
        yaw_err = abs(math.degrees(_wrap(bearing - ugv["yaw"])))
        series.append({"seconds": now, "uav_dist": uav_dist, "ugv_dist": ugv_dist, "yaw_err_deg": yaw_err})

        lag = args.period - (time.perf_counter() - cycle_t0)
        if lag > 0:
            time.sleep(lag)
    client.close()

    window = series[int(len(series) * 0.75):]
    report = {
        "cycles": len(series),
        "sim_seconds": series[-1]["seconds"] if series else 0.0,
        "desired": {"uav": args.uav_distance, "ugv": args.ugv_distance},
        "steady_state": {
            "window_start_s": window[0]["seconds"] if window else None,
            "uav_mean_abs_dist_err_m": sum(abs(s["uav_dist"] - args.uav_distance) for s in window) / len(window),
            "ugv_mean_abs_dist_err_m": sum(abs(s["ugv_dist"] - args.ugv_distance) for s in window) / len(window),
            "ugv_yaw_err_mean_deg": sum(s["yaw_err_deg"] for s in window) / len(window),
        },
    }
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=1)
    ss = report["steady_state"]
    print(f"cycles={report['cycles']} sim={report['sim_seconds']:.1f}s "
          f"uav_err={ss['uav_mean_abs_dist_err_m']:.3f} ugv_err={ss['ugv_mean_abs_dist_err_m']:.3f} "
          f"yaw={ss['ugv_yaw_err_mean_deg']:.2f} deg -> {args.out}")
    ok = (
        ss["uav_mean_abs_dist_err_m"] < 0.5
        and ss["ugv_mean_abs_dist_err_m"] < 0.5
        and ss["ugv_yaw_err_mean_deg"] < 5.0
    )
    return 0 if ok else 1
