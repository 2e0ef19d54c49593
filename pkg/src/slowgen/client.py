"""HTTP client for victim endpoints speaking the generation wire protocol.

Transport failures (connection errors, timeouts, HTTP 5xx) are retried a
bounded number of times with a fresh latency measurement per attempt; a
request the server rejects as invalid is never retried.  A retried call
still counts as one victim query from the optimizer's point of view, but
every attempt is logged.
"""

from __future__ import annotations

import logging
import time

import requests

from .errors import ProtocolError, TransportError
from .imageops import ImageTensor
from .objectives import GenerationResponse
from .protocol import GENERATE_PATH, encode_request, parse_response
from .victims import VictimEndpoint

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 120.0
DEFAULT_RETRIES = 3


def resolve_endpoint(url: str) -> str:
    """Accept a base URL or a full generate URL; return the generate URL."""
    url = url.rstrip("/")
    if not url.endswith(GENERATE_PATH):
        url += GENERATE_PATH
    return url


def http_query(
    endpoint_url: str,
    request_body: bytes,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    retries: int = DEFAULT_RETRIES,
    session: requests.Session | None = None,
) -> GenerationResponse:
    """POST an encoded request and return the validated response.

    The returned response carries the client-side wall-clock latency of the
    successful attempt in milliseconds.
    """
    url = resolve_endpoint(endpoint_url)
    post = session.post if session is not None else requests.post
    last_failure: Exception | None = None
    for attempt in range(1, retries + 2):
        start = time.perf_counter()
        try:
            http_resp = post(
                url,
                data=request_body,
                headers={"Content-Type": "application/json"},
                timeout=timeout_s,
            )
        except requests.RequestException as exc:
            last_failure = exc
            logger.warning("attempt %d to %s failed in transport: %s", attempt, url, exc)
            continue
        latency_ms = (time.perf_counter() - start) * 1000.0
        if http_resp.status_code == 200:
            return parse_response(http_resp.content, client_latency_ms=latency_ms)
        if http_resp.status_code in (400, 422):
            raise ProtocolError(
                f"server rejected request (HTTP {http_resp.status_code}): "
                f"{http_resp.text[:300]}"
            )
        if 500 <= http_resp.status_code < 600:
            last_failure = TransportError(
                f"HTTP {http_resp.status_code}: {http_resp.text[:300]}"
            )
            logger.warning(
                "attempt %d to %s got HTTP %d", attempt, url, http_resp.status_code
            )
            continue
        raise ProtocolError(
            f"unexpected HTTP status {http_resp.status_code}: {http_resp.text[:300]}"
        )
    raise TransportError(
        f"giving up on {url} after {retries + 1} attempts: {last_failure}"
    )


class HttpVictim(VictimEndpoint):
    """A remote victim reachable over the wire protocol.

    Thread safe: the underlying connection pool may serve concurrent
    requests, and the client keeps no other mutable state.
    """

    def __init__(
        self,
        url: str,
        k: int = 100,
        decode: dict | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        retries: int = DEFAULT_RETRIES,
        name: str | None = None,
    ):
        self.url = resolve_endpoint(url)
        self.k = k
        self.decode = decode
        self.timeout_s = timeout_s
        self.retries = retries
        self.name = name or f"http:{self.url}"
        self._session = requests.Session()

    def query(self, image: ImageTensor, decode: dict | None = None) -> GenerationResponse:
        body = encode_request(image, self.k, decode if decode is not None else self.decode)
        return http_query(
            self.url,
            body,
            timeout_s=self.timeout_s,
            retries=self.retries,
            session=self._session,
        )

    def close(self) -> None:
        self._session.close()
