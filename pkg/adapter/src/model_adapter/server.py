"""HTTP server exposing one captioning model at /v1/generate.

The HTTP layer accepts connections concurrently, but every generation
runs under a single worker lock: one model, one decode at a time.
Structural request problems answer 400, unsupported-but-well-formed
requests 422, generation failures 500.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .config import AdapterConfig
from .errors import BadRequestError, UnsupportedRequestError
from .modeling import CaptioningModel, load_model
from .wire import encode_response, parse_request

logger = logging.getLogger("model_adapter")


class AdapterServer:
    """Bind, serve, shut down.  Usable as a context manager in tests."""

    def __init__(self, config: AdapterConfig, host: str = "127.0.0.1", port: int = 0):
        # Load before binding: an unloadable model must fail startup, not
        # the first request.
        self.config = config
        self.model: CaptioningModel = load_model(config)
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), _make_handler(self))
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def generate_response(self, body: bytes) -> bytes:
        request = parse_request(body)
        k = min(request.topk, self.config.k)
        max_new = min(request.max_new_tokens, self.config.max_new_tokens)
        with self._lock:
            started = time.perf_counter()
            payload = self.model.generate(request.image, k, max_new)
            decode_ms = (time.perf_counter() - started) * 1000.0
        if payload.ended_via_eos and payload.length > 1:
            final = float(payload.eos_probs[-1])
            peak = float(np.max(payload.eos_probs))
            if final < peak:
                # Sanity expectation for well-behaved greedy runs; logged,
                # never asserted.
                logger.info(
                    "final EOS probability %.4f below the per-position peak %.4f",
                    final, peak,
                )
        return encode_response(
            payload.eos_probs, payload.topk_probs, payload.text, decode_ms
        )

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=10.0)
            self._thread = None

    def __enter__(self) -> "AdapterServer":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.shutdown()


def _make_handler(server: AdapterServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        # Header and body go out in separate writes; without TCP_NODELAY
        # the Nagle/delayed-ACK interaction stalls loopback requests.
        disable_nagle_algorithm = True

        def do_POST(self) -> None:
            if self.path != "/v1/generate":
                self._send_error(404, f"no such path {self.path}")
                return
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            try:
                response = server.generate_response(body)
            except BadRequestError as exc:
                self._send_error(400, str(exc))
                return
            except UnsupportedRequestError as exc:
                self._send_error(422, str(exc))
                return
            except Exception as exc:
                logger.exception("generation failed")
                self._send_error(500, f"generation failed: {exc}")
                return
            self._send(200, response)

        def _send_error(self, status: int, message: str) -> None:
            self._send(status, json.dumps({"error": message}).encode("utf-8"))

        def _send(self, status: int, body: bytes) -> None:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, format: str, *args) -> None:
            logger.debug("%s %s", self.address_string(), format % args)

    return Handler


def serve(config: AdapterConfig, host: str = "127.0.0.1", port: int = 0) -> AdapterServer:
    """Load the model and return a bound, not yet started server."""
    return AdapterServer(config, host=host, port=port)
