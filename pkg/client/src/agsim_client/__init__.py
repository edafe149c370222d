"""Stdlib-only client for the agsim TCP JSON-RPC protocol.

Wire format: 4-byte big-endian length prefix, then canonical UTF-8 JSON
(sorted keys, compact separators). One endpoint per vehicle type:
multirotor on the base port, car on base+1, world on base+2. Requests on
an endpoint carry monotonically increasing ids; each response echoes the
id of its request.
"""

from __future__ import annotations

import json
import socket
import struct

__version__ = "0.1.0"

MAX_FRAME = 16 * 1024 * 1024
_HEADER = struct.Struct(">I")

MULTIROTOR = "multirotor"
CAR = "car"
WORLD = "world"

PORT_OFFSETS = {MULTIROTOR: 0, CAR: 1, WORLD: 2}


class ProtocolError(Exception):
    """Frame-level violation: bad prefix, bad JSON, or id mismatch."""


class RpcError(Exception):
    """Server answered status=error; .code carries the error code."""

    def __init__(self, code: str, request_id: int):
        super().__init__(f"{code} (request {request_id})")
        self.code = code
        self.request_id = request_id


def canonical_json(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_envelope(req_id: int, vehicle_type: str, vehicle_id: str, method: str, params: dict) -> bytes:
    body = canonical_json(
        {
            "id": req_id,
            "vehicle_type": vehicle_type,
            "vehicle_id": vehicle_id,
            "method": method,
            "params": params,
        }
    )
    if len(body) > MAX_FRAME:
        raise ProtocolError("frame exceeds 16 MiB")
    return _HEADER.pack(len(body)) + body


def decode_body(body: bytes) -> dict:
    try:
        doc = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"bad frame body: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProtocolError("frame body is not an object")
    return doc


def read_frame(sock: socket.socket) -> dict:
    header = _read_exactly(sock, _HEADER.size)
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise ProtocolError(f"declared frame length {length} exceeds 16 MiB")
    return decode_body(_read_exactly(sock, length))


def _read_exactly(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("server closed the connection")
        buf += chunk
    return buf


class Endpoint:
    """One socket speaking for one vehicle type. Single-threaded use."""

    def __init__(self, host: str, port: int, vehicle_type: str, timeout: float = 5.0):
        self.host = host
        self.port = port
        self.vehicle_type = vehicle_type
        self._next_id = 0
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ConnectionRefusedError(f"cannot reach {vehicle_type} endpoint on port {port}: {exc}") from exc
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def call(self, method: str, vehicle_id: str = "", params: dict | None = None) -> dict:
        req_id = self._next_id
        self._next_id += 1
        self.sock.sendall(encode_envelope(req_id, self.vehicle_type, vehicle_id, method, params or {}))
        resp = read_frame(self.sock)
        if resp.get("id") != req_id:
            raise ProtocolError(f"response id {resp.get('id')} does not match request {req_id}")
        if resp.get("status") == "ok":
            return resp.get("payload", {})
        raise RpcError(str(resp.get("error_code", "UNKNOWN")), req_id)

    def ping(self) -> dict:
        return self.call("ping")

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class AgsimClient:
    """Three live endpoints (multirotor, car, world) against one server."""

    def __init__(self, host: str = "127.0.0.1", base_port: int = 41451, timeout: float = 5.0):
        self.host = host
        self.base_port = base_port
        self.endpoints = {
            vtype: Endpoint(host, base_port + off, vtype, timeout)
            for vtype, off in PORT_OFFSETS.items()
        }

    def ping_all(self) -> dict:
        return {vtype: ep.ping() for vtype, ep in self.endpoints.items()}

    @property
    def world(self) -> Endpoint:
        return self.endpoints[WORLD]

    def endpoint_for(self, vehicle_type: str) -> Endpoint:
        return self.endpoints[vehicle_type]

    def list_vehicles(self) -> list:
        return self.world.call("list_vehicles")["vehicles"]

    def sim_time(self) -> dict:
        return self.world.call("get_sim_time")

    def target_truth(self) -> dict:
        return self.world.call("get_target_truth")

    def get_state(self, vehicle_type: str, vehicle_id: str) -> dict:
        return self.endpoints[vehicle_type].call("get_state", vehicle_id)

    def get_odometry(self, vehicle_type: str, vehicle_id: str) -> dict:
        return self.endpoints[vehicle_type].call("get_odometry", vehicle_id)

    def send_command(self, vehicle_type: str, vehicle_id: str, params: dict) -> dict:
        return self.endpoints[vehicle_type].call("send_command", vehicle_id, params)

    def close(self) -> None:
        for ep in self.endpoints.values():
            ep.close()


def connect(host: str = "127.0.0.1", base_port: int = 41451, timeout: float = 5.0) -> AgsimClient:
    """Open all three endpoints and verify each answers ping."""
    client = AgsimClient(host, base_port, timeout)
    client.ping_all()
    return client
