"""Serve any in-process victim over the wire protocol.

Built on the standard library's threading HTTP server: victims are pure
functions of the request, so concurrent requests need no locking.  An
optional artificial delay proportional to the generated length makes
latency metrics meaningful on synthetic victims (the delay is part of the
reported server decode time).
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import ProtocolError
from .protocol import GENERATE_PATH, decode_request, encode_response
from .victims import VictimEndpoint


def _make_handler(victim: VictimEndpoint):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        # Header and body go out in separate writes; without TCP_NODELAY the
        # Nagle/delayed-ACK interaction adds ~40 ms per loopback request,
        # which would swamp the artificial per-token delay.
        disable_nagle_algorithm = True

        def log_message(self, fmt: str, *args) -> None:
            pass

        def _send(self, status: int, body: bytes) -> None:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_error(self, status: int, message: str) -> None:
            self._send(status, json.dumps({"error": message}).encode("utf-8"))

        def do_POST(self) -> None:  # noqa: N802 (http.server API)
            if self.path != GENERATE_PATH:
                self._send_error(404, f"unknown path {self.path}")
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
            except (TypeError, ValueError):
                self._send_error(400, "missing or invalid Content-Length")
                return
            try:
                image, k, decode_opts = decode_request(body)
            except ProtocolError as exc:
                self._send_error(400, str(exc))
                return
            try:
                start = time.perf_counter()
                resp = victim.query(image, decode_opts)
                delay_ms = getattr(victim, "delay_ms_per_token", 0.0) * resp.length
                if delay_ms > 0:
                    time.sleep(delay_ms / 1000.0)
                    # Report decode time only for delayed victims; undelayed
                    # responses then stay byte-for-byte deterministic.
                    resp = replace(
                        resp, server_decode_ms=(time.perf_counter() - start) * 1000.0
                    )
                if k < resp.topk_probs.shape[1]:
                    # The client asked for fewer entries than the victim
                    # produced; rows are sorted, so keep the k largest.
                    resp = replace(resp, topk_probs=resp.topk_probs[:, :k])
                self._send(200, encode_response(resp))
            except Exception as exc:  # pragma: no cover - defensive path
                self._send_error(500, f"victim failed: {exc}")

    return Handler


class MockVictimServer:
    """Threaded wire-protocol server around one victim; usable as a context
    manager in tests or run blocking from the CLI."""

    def __init__(self, victim: VictimEndpoint, host: str = "127.0.0.1", port: int = 0):
        self.victim = victim
        self._server = ThreadingHTTPServer((host, port), _make_handler(victim))
        self.host, self.port = self._server.server_address[:2]
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "MockVictimServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="mock-victim", daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def serve_forever(self) -> None:
        try:
            self._server.serve_forever()
        finally:
            self._server.server_close()

    def __enter__(self) -> "MockVictimServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve_mock(victim: VictimEndpoint, host: str = "127.0.0.1", port: int = 0) -> MockVictimServer:
    """Start a mock server for the victim and return it (already running)."""
    return MockVictimServer(victim, host, port).start()
