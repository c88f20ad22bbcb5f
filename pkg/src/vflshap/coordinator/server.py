"""HTTP/JSON front end for the coordinator."""

from __future__ import annotations

import hmac
import json
import logging
import os
import re
import ssl
import threading
from dataclasses import dataclass, fields
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlsplit

from vflshap import wire
from vflshap.coordinator.session import Coordinator
from vflshap.errors import ConfigurationError, ErrorCode, InputError, ProtocolError

log = logging.getLogger(__name__)

ENV_PREFIX = "VFLSHAP_"

STATUS_FOR = {
    ErrorCode.UNKNOWN_SESSION: HTTPStatus.NOT_FOUND,
    ErrorCode.DUPLICATE_SUBMISSION: HTTPStatus.CONFLICT,
    ErrorCode.MALFORMED_GROUPS: HTTPStatus.BAD_REQUEST,
    ErrorCode.NOT_READY: HTTPStatus.TOO_EARLY,
    ErrorCode.NO_OVERLAP: HTTPStatus.UNPROCESSABLE_ENTITY,
    ErrorCode.UNAUTHORIZED_PARTY: HTTPStatus.FORBIDDEN,
    ErrorCode.LABEL_FROM_DATA_PARTY: HTTPStatus.FORBIDDEN,
    ErrorCode.INVALID_REQUEST: HTTPStatus.BAD_REQUEST,
    ErrorCode.INTERNAL: HTTPStatus.INTERNAL_SERVER_ERROR,
}


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8750
    tls_cert: Optional[str] = None
    tls_key: Optional[str] = None
    idle_timeout: float = 3600.0
    max_body_bytes: int = 256 * 1024 * 1024
    snapshot_dir: Optional[str] = None
    auth_token: Optional[str] = None
    workers: int = 1

    @classmethod
    def load(cls, path: Optional[str] = None, env=None, **overrides) -> "ServerConfig":
        """Defaults, then the JSON file, then VFLSHAP_* variables, then keyword overrides."""
        env = os.environ if env is None else env
        values = {}
        if path:
            try:
                with open(path, encoding="utf-8") as fh:
                    values.update(json.load(fh))
            except (OSError, ValueError) as exc:
                raise ConfigurationError(f"cannot read server config {path}: {exc}") from exc
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(types)
        if unknown:
            raise ConfigurationError(f"unknown server config keys: {sorted(unknown)}")
        for name in types:
            raw = env.get(ENV_PREFIX + name.upper())
            if raw is not None:
                values[name] = raw
        values.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**values)
        try:
            cfg.port = int(cfg.port)
            cfg.idle_timeout = float(cfg.idle_timeout)
            cfg.max_body_bytes = int(cfg.max_body_bytes)
            cfg.workers = int(cfg.workers)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad server config value: {exc}") from exc
        if bool(cfg.tls_cert) != bool(cfg.tls_key):
            raise ConfigurationError("tls_cert and tls_key must be given together")
        return cfg


_ROUTE = re.compile(r"^/sessions(?:/(?P<sid>[^/]+)(?:/(?P<leaf>submissions|status|results|permutations))?)?/?$")


class _Handler(BaseHTTPRequestHandler):
    server_version = "vflshap"
    coordinator: Coordinator
    config: ServerConfig

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, exc: ProtocolError) -> None:
        self._send(STATUS_FOR[exc.code], wire.dumps(exc.to_dict()))

    def _authorized(self) -> bool:
        token = self.config.auth_token
        if not token:
            return True
        given = self.headers.get("Authorization", "")
        return hmac.compare_digest(given.encode(), f"Bearer {token}".encode())

    def _read_json(self, code: ErrorCode):
        length = int(self.headers.get("Content-Length") or 0)
        if length > self.config.max_body_bytes:
            raise ProtocolError(code, "request body too large")
        raw = self.rfile.read(length) if length else b""
        try:
            body = json.loads(raw or b"null")
        except ValueError as exc:
            raise ProtocolError(code, f"body is not JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise ProtocolError(code, "body must be a JSON object")
        return body

    def _dispatch(self, method: str) -> None:
        url = urlsplit(self.path)
        match = _ROUTE.match(url.path)
        try:
            if not self._authorized():
                raise ProtocolError(ErrorCode.UNAUTHORIZED_PARTY, "missing or wrong bearer token")
            if match is None:
                raise ProtocolError(ErrorCode.INVALID_REQUEST, f"no route {method} {url.path}")
            sid, leaf = match.group("sid"), match.group("leaf")
            co = self.coordinator
            if method == "POST" and sid is None:
                body = self._read_json(ErrorCode.INVALID_REQUEST)
                try:
                    session_id = co.create_session(body)
                except InputError as exc:
                    raise ProtocolError(ErrorCode.INVALID_REQUEST, str(exc)) from exc
                self._send(HTTPStatus.CREATED, wire.dumps({"session_id": session_id}))
            elif method == "POST" and leaf == "submissions":
                co.get(sid)
                body = self._read_json(ErrorCode.MALFORMED_GROUPS)
                party, features = wire.decode_submission(body)
                remaining = co.accept_submission(sid, party, features)
                self._send(HTTPStatus.OK, wire.dumps({"accepted": True, "parties_remaining": remaining}))
            elif method == "GET" and leaf == "status":
                self._send(HTTPStatus.OK, wire.dumps(co.status(sid)))
            elif method == "GET" and leaf == "results":
                party = parse_qs(url.query).get("party", [None])[0]
                if party is None:
                    raise ProtocolError(ErrorCode.UNAUTHORIZED_PARTY, "party query parameter required")
                self._send(HTTPStatus.OK, co.results_payload(sid, party))
            elif method == "GET" and leaf == "permutations":
                self._send(HTTPStatus.OK, wire.dumps({"permutations": co.export_permutations(sid)}))
            else:
                raise ProtocolError(ErrorCode.INVALID_REQUEST, f"no route {method} {url.path}")
        except ProtocolError as exc:
            self._error(exc)
        except Exception as exc:  # noqa: BLE001
            log.exception("unhandled error on %s %s", method, url.path)
            self._error(ProtocolError(ErrorCode.INTERNAL, type(exc).__name__))

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")


class CoordinatorServer:
    """Threaded HTTP server; ``start()`` runs it on a daemon thread."""

    def __init__(self, config: ServerConfig | None = None, coordinator: Coordinator | None = None):
        self.config = config or ServerConfig()
        self.coordinator = coordinator or Coordinator(
            background=True,
            idle_timeout=self.config.idle_timeout,
            snapshot_dir=self.config.snapshot_dir,
            workers=self.config.workers,
        )
        handler = type("Handler", (_Handler,), {"coordinator": self.coordinator, "config": self.config})
        self.httpd = ThreadingHTTPServer((self.config.host, self.config.port), handler)
        self.httpd.daemon_threads = True
        if self.config.tls_cert:
            ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            ctx.load_cert_chain(self.config.tls_cert, self.config.tls_key)
            self.httpd.socket = ctx.wrap_socket(self.httpd.socket, server_side=True)
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        scheme = "https" if self.config.tls_cert else "http"
        return f"{scheme}://{host}:{port}"

    def start(self) -> "CoordinatorServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.coordinator.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
