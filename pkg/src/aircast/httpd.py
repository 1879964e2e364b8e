"""Tiny threaded JSON-over-HTTP server used by the edge node and the API.

A dispatch callable maps (path, single-valued query dict) to (status, body);
the body is serialized as UTF-8 JSON with permissive CORS headers so the
browser dashboard can call either server directly.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable
from urllib.parse import parse_qs, urlsplit

Dispatch = Callable[[str, dict[str, str]], tuple[int, object]]

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".svg": "image/svg+xml",
    ".json": "application/json",
}


class JsonHttpServer:
    """Wraps ThreadingHTTPServer; optionally serves static files under /."""

    def __init__(
        self,
        dispatch: Dispatch,
        host: str = "127.0.0.1",
        port: int = 0,
        cors_origin: str = "*",
        static_dir: str | Path | None = None,
    ):
        self._dispatch = dispatch
        self._host = host
        self._requested_port = port
        self._cors_origin = cors_origin
        self._static_dir = Path(static_dir).resolve() if static_dir else None
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        if self._server is None:
            raise RuntimeError("server not started")
        return self._server.server_address[1]

    def start(self) -> None:
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):  # keep test output quiet
                pass

            def _respond(self, status: int, body: bytes, content_type: str) -> None:
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", outer._cors_origin)
                self.end_headers()
                self.wfile.write(body)

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", outer._cors_origin)
                self.send_header("Access-Control-Allow-Methods", "GET, OPTIONS")
                self.send_header("Content-Length", "0")
                self.end_headers()

            def do_GET(self):
                parts = urlsplit(self.path)
                query = {k: v[0] for k, v in parse_qs(parts.query).items()}
                static = outer._try_static(parts.path)
                if static is not None:
                    body, content_type = static
                    self._respond(200, body, content_type)
                    return
                try:
                    status, payload = outer._dispatch(parts.path, query)
                except Exception as exc:  # noqa: BLE001 - surface as 500, keep serving
                    status, payload = 500, {"error": str(exc)}
                body = json.dumps(payload).encode("utf-8")
                self._respond(status, body, "application/json")

        self._server = ThreadingHTTPServer((self._host, self._requested_port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def _try_static(self, path: str) -> tuple[bytes, str] | None:
        if self._static_dir is None or path.startswith("/api"):
            return None
        name = path.lstrip("/") or "index.html"
        candidate = (self._static_dir / name).resolve()
        if not str(candidate).startswith(str(self._static_dir)) or not candidate.is_file():
            return None
        content_type = CONTENT_TYPES.get(candidate.suffix, "application/octet-stream")
        return candidate.read_bytes(), content_type

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None


__all__ = ["JsonHttpServer", "Dispatch"]
