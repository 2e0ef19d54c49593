"""HTTP client against the threaded mock server: transparency, retries, timing."""

from __future__ import annotations

import socket
from concurrent.futures import ThreadPoolExecutor
from http.server import ThreadingHTTPServer

import numpy as np
import pytest
import requests

from slowgen import HttpVictim, ImageTensor, MockVictimServer, RuleVictim, serve_mock
from slowgen.client import http_query, resolve_endpoint
from slowgen.errors import ProtocolError, TransportError
from slowgen.mockserver import _make_handler
from slowgen.protocol import encode_request


@pytest.fixture(scope="module")
def rule_server():
    victim = RuleVictim(max_length=50, k=5, seed=11)
    with MockVictimServer(victim) as server:
        yield victim, server


def _integer_image(value: float = 127.0, shape=(2, 2, 3)) -> ImageTensor:
    return ImageTensor(np.full(shape, value))


class _FlakyServer:
    """Serves the wire protocol but answers HTTP 500 for the first n requests."""

    def __init__(self, victim, fail_first: int):
        self.attempts = 0
        outer = self

        class Handler(_make_handler(victim)):
            def do_POST(self) -> None:  # noqa: N802 (http.server API)
                outer.attempts += 1
                if outer.attempts <= fail_first:
                    body = b'{"error": "transient"}'
                    self.send_response(500)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                    return
                super().do_POST()

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        host, port = self._server.server_address[:2]
        self.endpoint = f"http://{host}:{port}"

    def __enter__(self):
        import threading

        threading.Thread(target=self._server.serve_forever, daemon=True).start()
        return self

    def __exit__(self, *exc_info):
        self._server.shutdown()
        self._server.server_close()


class TestResolveEndpoint:
    def test_appends_generate_path(self):
        assert resolve_endpoint("http://h:1") == "http://h:1/v1/generate"
        assert resolve_endpoint("http://h:1/") == "http://h:1/v1/generate"

    def test_keeps_full_path(self):
        assert resolve_endpoint("http://h:1/v1/generate") == "http://h:1/v1/generate"


class TestTransportTransparency:
    def test_wire_equals_in_process(self, rule_server):
        victim, server = rule_server
        client = HttpVictim(server.endpoint, k=victim.k)
        try:
            image = _integer_image()
            over_wire = client.query(image)
            direct = victim.query(image)
            assert over_wire == direct
            assert over_wire.client_latency_ms is not None
            assert over_wire.client_latency_ms > 0.0
        finally:
            client.close()

    def test_requested_k_truncates_rows(self, rule_server):
        victim, server = rule_server
        client = HttpVictim(server.endpoint, k=3)
        try:
            resp = client.query(_integer_image())
            assert resp.topk_probs.shape[1] == 3
            direct = victim.query(_integer_image())
            assert np.array_equal(resp.topk_probs, direct.topk_probs[:, :3])
        finally:
            client.close()

    def test_concurrent_identical_requests_identical_bodies(self, rule_server):
        _, server = rule_server
        body = encode_request(_integer_image(), 4)
        url = server.endpoint + "/v1/generate"

        def post() -> bytes:
            return requests.post(url, data=body, timeout=10).content

        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(lambda _: post(), range(8)))
        assert all(r == results[0] for r in results)


class TestLatencyAccounting:
    def test_artificial_delay_recorded(self):
        # 2 ms per token at N=25 puts server decode time at 50 ms plus
        # scheduling slack; client latency must dominate it.
        victim = RuleVictim(max_length=50, k=4, seed=1, delay_ms_per_token=2.0)
        with MockVictimServer(victim) as server:
            client = HttpVictim(server.endpoint, k=4)
            try:
                resp = client.query(_integer_image(127.5))
                assert resp.length == 25
                assert resp.server_decode_ms is not None
                assert 50.0 <= resp.server_decode_ms <= 100.0
                assert resp.client_latency_ms >= resp.server_decode_ms
            finally:
                client.close()

    def test_undelayed_server_omits_decode_ms(self, rule_server):
        _, server = rule_server
        client = HttpVictim(server.endpoint, k=4)
        try:
            assert client.query(_integer_image()).server_decode_ms is None
        finally:
            client.close()


class TestHttpErrors:
    def test_unknown_path_is_protocol_error(self, rule_server):
        _, server = rule_server
        body = encode_request(_integer_image(), 4)
        with pytest.raises(ProtocolError):
            http_query(server.endpoint + "/wrong", body, retries=0)

    def test_malformed_request_is_protocol_error(self, rule_server):
        _, server = rule_server
        with pytest.raises(ProtocolError):
            http_query(server.endpoint, b"this is not a request", retries=3)

    def test_transient_failures_retried(self):
        victim = RuleVictim(max_length=20, k=4, seed=5)
        with _FlakyServer(victim, fail_first=2) as flaky:
            resp = http_query(flaky.endpoint, encode_request(_integer_image(), 4), retries=3)
            assert resp.length > 0
            assert flaky.attempts == 3

    def test_retries_exhausted_is_transport_error(self):
        victim = RuleVictim(max_length=20, k=4, seed=5)
        with _FlakyServer(victim, fail_first=99) as flaky:
            with pytest.raises(TransportError):
                http_query(flaky.endpoint, encode_request(_integer_image(), 4), retries=2)
            assert flaky.attempts == 3

    def test_connection_refused_is_transport_error(self):
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        with pytest.raises(TransportError):
            http_query(
                f"http://127.0.0.1:{port}",
                encode_request(_integer_image(), 4),
                retries=1,
            )


class TestServeMockHelper:
    def test_returns_running_server(self):
        server = serve_mock(RuleVictim(max_length=10, k=4, seed=2))
        try:
            client = HttpVictim(server.endpoint, k=4)
            assert client.query(_integer_image()).length > 0
            client.close()
        finally:
            server.stop()
