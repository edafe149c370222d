"""Framed TCP JSON-RPC with one dedicated port per vehicle type.

Wire format: a 4-byte big-endian unsigned length prefix followed by that
many bytes of UTF-8 JSON. Envelopes carry {id, vehicle_type, vehicle_id,
method, params}; responses carry {id, status, payload | error_code}. JSON
is emitted canonically (sorted keys, compact separators) so independent
clients can compare bytes. Frames above 16 MiB are rejected.

Requests arriving on the wrong port type are refused, never served with
another instance's data: a multirotor envelope on the car port yields
VEHICLE_TYPE_MISMATCH by construction.
"""

from __future__ import annotations

import json
import math
import socket
import struct
import threading
from dataclasses import dataclass, field

from .errors import BindError, FrameTooLarge, MalformedJson, MissingField
from .geometry import Vec3
from .simcore import Simulator
from .vehicles import CarCommand, UavCommand, VehicleType

MAX_FRAME = 16 * 1024 * 1024
HEADER = struct.Struct(">I")

WORLD = "world"
PORT_TYPES = (VehicleType.MULTIROTOR.value, VehicleType.CAR.value, WORLD)


@dataclass(frozen=True)
class RpcEnvelope:
    id: int
    vehicle_type: str
    vehicle_id: str
    method: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RpcResponse:
    id: int
    status: str  # "ok" | "error"
    payload: dict | None = None
    error_code: str | None = None

    @classmethod
    def ok(cls, req_id: int, payload: dict) -> "RpcResponse":
        return cls(req_id, "ok", payload, None)

    @classmethod
    def error(cls, req_id: int, code: str) -> "RpcResponse":
        return cls(req_id, "error", None, code)


@dataclass(frozen=True)
class EndpointConfig:
    base_port: int = 41451
    host: str = "127.0.0.1"

    @property
    def port_map(self) -> dict:
        return {
            VehicleType.MULTIROTOR.value: self.base_port,
            VehicleType.CAR.value: self.base_port + 1,
            WORLD: self.base_port + 2,
        }


def _canonical(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_frame(env: RpcEnvelope) -> bytes:
    body = _canonical(
        {
            "id": env.id,
            "vehicle_type": env.vehicle_type,
            "vehicle_id": env.vehicle_id,
            "method": env.method,
            "params": env.params,
        }
    )
    if len(body) > MAX_FRAME:
        raise FrameTooLarge(f"frame of {len(body)} bytes exceeds 16 MiB")
    return HEADER.pack(len(body)) + body


def encode_response_frame(resp: RpcResponse) -> bytes:
    doc: dict = {"id": resp.id, "status": resp.status}
    if resp.status == "ok":
        doc["payload"] = resp.payload if resp.payload is not None else {}
    else:
        doc["error_code"] = resp.error_code
    body = _canonical(doc)
    if len(body) > MAX_FRAME:
        raise FrameTooLarge(f"frame of {len(body)} bytes exceeds 16 MiB")
    return HEADER.pack(len(body)) + body


def _envelope_from_doc(doc) -> RpcEnvelope:
    if not isinstance(doc, dict):
        raise MalformedJson("frame body must be a JSON object")
    extra = set(doc) - {"id", "vehicle_type", "vehicle_id", "method", "params"}
    if extra:
        raise MalformedJson(f"unexpected envelope field '{sorted(extra)[0]}'")
    for name, typ in (("id", int), ("vehicle_type", str), ("vehicle_id", str), ("method", str), ("params", dict)):
        if name not in doc:
            raise MissingField(f"envelope missing '{name}'")
        if not isinstance(doc[name], typ) or (name == "id" and isinstance(doc[name], bool)):
            raise MissingField(f"envelope field '{name}' has the wrong type")
    if doc["id"] < 0:
        raise MissingField("envelope id must be unsigned")
    if not doc["method"]:
        raise MissingField("envelope method must be nonempty")
    return RpcEnvelope(doc["id"], doc["vehicle_type"], doc["vehicle_id"], doc["method"], doc["params"])


def decode_frame(data: bytes) -> RpcEnvelope:
    """Decode one complete frame (prefix + body)."""
    if len(data) < HEADER.size:
        raise MissingField("incomplete frame header")
    (length,) = HEADER.unpack(data[: HEADER.size])
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared length {length} exceeds 16 MiB")
    body = data[HEADER.size : HEADER.size + length]
    if len(body) < length:
        raise MissingField("incomplete frame body")
    try:
        doc = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedJson(str(exc)) from exc
    return _envelope_from_doc(doc)


class FrameDecoder:
    """Incremental frame splitter: partial frames wait, they never error."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> list[RpcEnvelope]:
        self._buf.extend(chunk)
        out = []
        while True:
            if len(self._buf) < HEADER.size:
                return out
            (length,) = HEADER.unpack(bytes(self._buf[: HEADER.size]))
            if length > MAX_FRAME:
                raise FrameTooLarge(f"declared length {length} exceeds 16 MiB")
            if len(self._buf) < HEADER.size + length:
                return out
            frame = bytes(self._buf[: HEADER.size + length])
            del self._buf[: HEADER.size + length]
            out.append(decode_frame(frame))


# -- routing -------------------------------------------------------------------


def _vec(v: Vec3) -> list:
    return [v.n, v.e, v.d]


def _parse_vec(raw, name: str) -> Vec3:
    if not isinstance(raw, list) or len(raw) != 3 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw):
        raise ValueError(f"{name} must be [n, e, d]")
    return Vec3(float(raw[0]), float(raw[1]), float(raw[2]))


def _parse_command(vtype: VehicleType, params: dict):
    mode = params.get("mode")
    if vtype is VehicleType.CAR:
        if mode == "drive":
            return CarCommand("drive", float(params["speed"]), float(params["steer"]))
        if mode == "waypoint":
            return CarCommand("waypoint", float(params["speed"]), 0.0, _parse_vec(params["waypoint"], "waypoint"))
        raise ValueError("car mode must be 'drive' or 'waypoint'")
    if mode == "velocity":
        return UavCommand("velocity", _parse_vec(params["velocity"], "velocity"), Vec3(), float(params.get("yaw", 0.0)))
    if mode == "waypoint":
        return UavCommand(
            "waypoint", Vec3(), _parse_vec(params["waypoint"], "waypoint"),
            float(params.get("yaw", 0.0)), float(params["speed_limit"]),
        )
    raise ValueError("multirotor mode must be 'velocity' or 'waypoint'")


_VEHICLE_METHODS = {"get_state", "get_odometry", "get_lidar", "get_depth", "send_command"}
_WORLD_METHODS = {"list_vehicles", "get_target_truth"}
_ANY_METHODS = {"ping", "get_sim_time"}


def route(env: RpcEnvelope, port_type: str, sim: Simulator) -> RpcResponse:
    """Dispatch an envelope that arrived on the port of the given type."""
    if env.vehicle_type != port_type:
        return RpcResponse.error(env.id, "VEHICLE_TYPE_MISMATCH")
    published = sim.published
    if env.method in _ANY_METHODS:
        if env.method == "ping":
            return RpcResponse.ok(env.id, {"pong": True, "port": port_type})
        t = published.time
        return RpcResponse.ok(env.id, {"tick": t.tick, "seconds": t.seconds, "dt": sim.config.dt})
    if port_type == WORLD:
        if env.method not in _WORLD_METHODS:
            return RpcResponse.error(env.id, "UNKNOWN_METHOD")
        if env.method == "list_vehicles":
            vehicles = [{"id": vid, "type": sim.vehicle_type(vid).value} for vid in sim.vehicle_ids()]
            return RpcResponse.ok(env.id, {"vehicles": vehicles})
        target = sim.target_vehicle_id()
        if target is None:
            return RpcResponse.error(env.id, "NO_TARGET")
        state = published.states[target]
        return RpcResponse.ok(
            env.id,
            {
                "vehicle_id": target,
                "position": _vec(state.pose.position),
                "yaw": state.pose.orientation.yaw(),
                "velocity": _vec(state.velocity),
                "tick": state.stamp.tick,
                "seconds": state.stamp.seconds,
            },
        )
    if env.method not in _VEHICLE_METHODS:
        return RpcResponse.error(env.id, "UNKNOWN_METHOD")
    if env.vehicle_id not in published.states:
        return RpcResponse.error(env.id, "UNKNOWN_VEHICLE")
    if sim.vehicle_type(env.vehicle_id).value != port_type:
        return RpcResponse.error(env.id, "VEHICLE_TYPE_MISMATCH")
    vid = env.vehicle_id
    if env.method == "get_state":
        state = published.states[vid]
        return RpcResponse.ok(
            env.id,
            {
                "id": vid,
                "type": state.vtype.value,
                "tick": state.stamp.tick,
                "seconds": state.stamp.seconds,
                "position": _vec(state.pose.position),
                "yaw": state.pose.orientation.yaw(),
                "velocity": _vec(state.velocity),
                "yaw_rate": state.yaw_rate,
            },
        )
    if env.method == "get_odometry":
        odom = published.odometry[vid]
        return RpcResponse.ok(
            env.id,
            {
                "vehicle_id": vid,
                "tick": odom.stamp.tick,
                "seconds": odom.stamp.seconds,
                "position": _vec(odom.pose.position),
                "yaw": odom.pose.orientation.yaw(),
                "velocity": _vec(odom.velocity),
            },
        )
    if env.method == "get_lidar":
        cloud = published.lidar.get(vid)
        if cloud is None:
            return RpcResponse.error(env.id, "NO_SUCH_SENSOR")
        return RpcResponse.ok(
            env.id,
            {
                "frame_id": cloud.frame_id,
                "tick": cloud.stamp.tick,
                "count": int(len(cloud.points)),
                "points": [[float(p[0]), float(p[1]), float(p[2])] for p in cloud.points],
            },
        )
    if env.method == "get_depth":
        grid = published.depth.get(vid)
        if grid is None:
            return RpcResponse.error(env.id, "NO_SUCH_SENSOR")
        flat = [(-1.0 if math.isinf(r) else float(r)) for r in grid.ranges.reshape(-1)]
        return RpcResponse.ok(
            env.id,
            {"tick": grid.stamp.tick, "width": grid.width, "height": grid.height, "hfov_deg": grid.hfov_deg, "ranges": flat},
        )
    # send_command: acknowledged on enqueue, effects visible via later reads.
    try:
        cmd = _parse_command(sim.vehicle_type(vid), env.params)
    except (KeyError, TypeError, ValueError):
        return RpcResponse.error(env.id, "BAD_PARAMS")
    sim.submit_command(vid, cmd)
    return RpcResponse.ok(env.id, {"accepted": True, "tick": published.time.tick})


# -- server --------------------------------------------------------------------


class RpcService:
    """Three listening sockets (multirotor, car, world) with per-connection threads."""

    def __init__(self, endpoints: EndpointConfig, sim: Simulator):
        self.endpoints = endpoints
        self.sim = sim
        self._stop = threading.Event()
        self._listeners: list[tuple[str, socket.socket]] = []
        self._threads: list[threading.Thread] = []
        self._conn_lock = threading.Lock()
        self._conns: list[socket.socket] = []

    @property
    def ports(self) -> dict:
        return self.endpoints.port_map

    def start(self) -> "RpcService":
        try:
            for port_type, port in self.endpoints.port_map.items():
                sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
                sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
                try:
                    sock.bind((self.endpoints.host, port))
                except OSError as exc:
                    sock.close()
                    raise BindError(f"cannot bind {port_type} port {port}: {exc}") from exc
                sock.listen(16)
                sock.settimeout(0.2)
                self._listeners.append((port_type, sock))
        except BindError:
            self.stop()
            raise
        for port_type, sock in self._listeners:
            t = threading.Thread(target=self._accept_loop, args=(port_type, sock), daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self) -> None:
        self._stop.set()
        for _, sock in self._listeners:
            try:
                sock.close()
            except OSError:
                pass
        with self._conn_lock:
            for conn in self._conns:
                try:
                    conn.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                try:
                    conn.close()
                except OSError:
                    pass
            self._conns.clear()
        for t in self._threads:
            t.join(timeout=1.0)

    def _accept_loop(self, port_type: str, sock: socket.socket) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._conn_lock:
                self._conns.append(conn)
            t = threading.Thread(target=self._serve_connection, args=(port_type, conn), daemon=True)
            t.start()

    def _serve_connection(self, port_type: str, conn: socket.socket) -> None:
        decoder = FrameDecoder()
        try:
            while not self._stop.is_set():
                try:
                    chunk = conn.recv(65536)
                except OSError:
                    return
                if not chunk:
                    return
                try:
                    envelopes = decoder.feed(chunk)
                except (FrameTooLarge, MalformedJson, MissingField) as exc:
                    code = "FRAME_TOO_LARGE" if isinstance(exc, FrameTooLarge) else "MALFORMED_FRAME"
                    try:
                        conn.sendall(encode_response_frame(RpcResponse.error(0, code)))
                    except OSError:
                        pass
                    return
                for env in envelopes:
                    resp = route(env, port_type, self.sim)
                    try:
                        conn.sendall(encode_response_frame(resp))
                    except OSError:
                        return
        finally:
            try:
                conn.close()
            except OSError:
                pass


def serve(endpoints: EndpointConfig, sim: Simulator) -> RpcService:
    """Bind all three per-type ports and start accepting clients."""
    return RpcService(endpoints, sim).start()
