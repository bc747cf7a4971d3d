"""HTTP service per node: auth, transactions, assets, provenance, events.

Sessions map password logins onto node-held signing identities; clients
never see private keys. Submission is asynchronous: POST returns 202 with
the transaction id, final status comes from polling or the event stream.
The event stream is server-sent events with replay via Last-Event-ID.
"""
from __future__ import annotations

import hashlib
import json
import os
import queue
import re
import secrets
import threading
import time
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from grainledger import identity as ids, ledger
from grainledger.canonical import canonical_dumps, canonical_loads
from grainledger.errors import (
    AclDenied,
    ContractAbort,
    EndorsementMismatch,
    GrainLedgerError,
    LotNotFound,
    NonCanonicalizable,
    NotChannelMember,
    PolicyNotMet,
    RevokedIdentity,
    SimulationFailed,
)

DEFAULT_CHANNEL = "gebn-main"
SESSION_TTL_MS = 3_600_000
PBKDF2_ITERATIONS = 50_000


def hash_password(password: str, salt: bytes | None = None,
                  iterations: int = PBKDF2_ITERATIONS) -> dict:
    salt = salt if salt is not None else secrets.token_bytes(16)
    digest = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"), salt, iterations
    )
    return {
        "salt": salt.hex(),
        "hash": digest.hex(),
        "iterations": iterations,
    }


def check_password(password: str, record: dict) -> bool:
    digest = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"),
        bytes.fromhex(record["salt"]), record["iterations"],
    )
    return secrets.compare_digest(digest.hex(), record["hash"])


class ApiError(GrainLedgerError):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.error_code = code


class NodeApi:
    """Request-level logic, separated from HTTP plumbing for testability."""

    def __init__(self, node, network, credentials: dict,
                 keyring: dict[str, ids.KeyPair], ui_dir: str | None = None):
        self.node = node
        self.network = network
        self.credentials = {u["username"]: u for u in credentials.get("users", [])}
        self.keyring = keyring
        self.ui_dir = ui_dir
        self.sessions: dict[str, dict] = {}
        self._lock = threading.Lock()

    # --- sessions -------------------------------------------------------------

    def login(self, username: str, password: str) -> dict:
        record = self.credentials.get(username)
        if record is None or not check_password(password, record):
            raise ApiError(401, "BadCredentials", "unknown user or wrong password")
        participant_id = record["participant_id"]
        ident = self.node.gov.identity_record(participant_id)
        if ident is None:
            raise ApiError(401, "BadCredentials", "no identity for user")
        if ident.get("revoked"):
            raise ApiError(423, "RevokedIdentity", "identity has been revoked")
        participant = self.node.gov.participant(participant_id) or {}
        token = secrets.token_hex(16)
        with self._lock:
            self.sessions[token] = {
                "token": token,
                "participant_id": participant_id,
                "role": participant.get("role", ""),
                "expires_at": self._now_ms() + SESSION_TTL_MS,
            }
        return {
            "token": token,
            "participant_id": participant_id,
            "role": participant.get("role", ""),
        }

    def _now_ms(self) -> int:
        return int(time.time() * 1000)

    def session_for(self, token: str | None) -> dict:
        if not token:
            raise ApiError(401, "Unauthenticated", "missing bearer token")
        with self._lock:
            session = self.sessions.get(token)
            if session is None:
                raise ApiError(401, "Unauthenticated", "unknown session token")
            if session["expires_at"] <= self._now_ms():
                del self.sessions[token]
                raise ApiError(401, "SessionExpired", "session expired")
        return session

    # --- transactions ------------------------------------------------------------

    def submit_transaction(self, session: dict, body: dict) -> dict:
        contract_id = body.get("contract_id")
        operation = body.get("operation")
        if not contract_id or not operation:
            raise ApiError(400, "BadRequest", "contract_id and operation required")
        channel_id = body.get("channel_id", DEFAULT_CHANNEL)
        participant_id = session["participant_id"]
        ident = self.node.gov.identity_record(participant_id)
        if ident is None:
            raise ApiError(403, "Unauthorized", "no on-ledger identity")
        keypair = self.keyring.get(participant_id)
        if keypair is None:
            raise ApiError(
                403, "Unauthorized",
                "signing identity for %s is not held by this node" % participant_id,
            )
        envelope = ledger.build_envelope(
            channel_id, contract_id, operation,
            body.get("args", {}), participant_id, self._now_ms(),
        )
        try:
            ids.sign_envelope(envelope, keypair, ident)
        except RevokedIdentity as exc:
            raise ApiError(423, "RevokedIdentity", str(exc)) from exc
        ledger.finalize_envelope(envelope, keypair)
        try:
            tx_id = self.network.client_submit(self.node.node_id, envelope)
        except SimulationFailed as exc:
            cause = exc.__cause__
            if isinstance(cause, AclDenied):
                raise ApiError(403, "AclDenied", str(cause)) from exc
            if isinstance(cause, ContractAbort):
                raise ApiError(422, cause.code, str(cause)) from exc
            raise ApiError(422, "SimulationFailed", str(exc)) from exc
        except AclDenied as exc:
            raise ApiError(403, "AclDenied", str(exc)) from exc
        except EndorsementMismatch as exc:
            raise ApiError(409, "EndorsementMismatch", str(exc)) from exc
        except PolicyNotMet as exc:
            raise ApiError(409, "PolicyNotMet", str(exc)) from exc
        except NotChannelMember as exc:
            raise ApiError(403, "NotChannelMember", str(exc)) from exc
        return {"tx_id": tx_id, "status": "PENDING"}

    def transaction_status(self, session: dict, tx_id: str) -> dict:
        status = self.node.tx_status.get(tx_id)
        if status is None:
            raise ApiError(404, "UnknownTransaction", "no such transaction")
        return {"tx_id": tx_id, **status}

    # --- queries --------------------------------------------------------------------

    def _channel_or_403(self, channel_id: str) -> str:
        if not self.node.is_member(channel_id):
            raise ApiError(
                403, "NotChannelMember",
                "%s is not a member of %s" % (self.node.node_id, channel_id),
            )
        return channel_id

    def get_asset(self, session: dict, registry: str, key: str,
                  channel_id: str) -> dict:
        self._channel_or_403(channel_id)
        value = self.node.get_asset(channel_id, registry, key)
        if value is None:
            raise ApiError(404, "NotFound", "no asset %s#%s" % (registry, key))
        return value

    def query_assets(self, session: dict, registry: str, filters: dict,
                     channel_id: str, limit: int | None) -> list:
        self._channel_or_403(channel_id)
        return self.node.filter_assets(channel_id, registry, filters, limit)

    def provenance(self, session: dict, lot_id: str, channel_id: str) -> dict:
        self._channel_or_403(channel_id)
        try:
            return self.node.trace_lot(channel_id, lot_id)
        except LotNotFound as exc:
            raise ApiError(404, "LotNotFound", str(exc)) from exc

    def receipt(self, session: dict, invoice: str, channel_id: str) -> dict:
        self._channel_or_403(channel_id)
        signer_id = self.node.node_id
        keypair = self.network.node_keys[self.node.node_id]
        try:
            return self.node.ingest_receipt(channel_id, invoice, signer_id, keypair)
        except ContractAbort as exc:
            raise ApiError(422, exc.code, str(exc)) from exc

    def node_info(self) -> dict:
        return {
            "node_id": self.node.node_id,
            "org": self.node.org,
            "channels": sorted(self.node.channels),
            "orderer": self.network.orderer.node.node_id == self.node.node_id,
        }


def _json_bytes(doc) -> bytes:
    return canonical_dumps(doc)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    api: NodeApi = None  # set per server class

    # --- plumbing ---------------------------------------------------------------

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, doc) -> None:
        data = _json_bytes(doc)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _send_error(self, exc: ApiError) -> None:
        self._send_json(exc.status, {"error": exc.error_code, "message": str(exc)})

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            doc = canonical_loads(raw)
        except NonCanonicalizable as exc:
            raise ApiError(400, "BadRequest", "invalid JSON body: %s" % exc)
        if not isinstance(doc, dict):
            raise ApiError(400, "BadRequest", "body must be a JSON object")
        return doc

    def _bearer(self) -> str | None:
        header = self.headers.get("Authorization", "")
        if header.startswith("Bearer "):
            return header[7:].strip()
        return None

    def _session(self) -> dict:
        return self.api.session_for(self._bearer())

    # --- routing -------------------------------------------------------------------

    def do_GET(self):
        try:
            self._route("GET")
        except ApiError as exc:
            self._send_error(exc)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_POST(self):
        try:
            self._route("POST")
        except ApiError as exc:
            self._send_error(exc)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _route(self, method: str) -> None:
        parsed = urllib.parse.urlsplit(self.path)
        path = parsed.path
        params = dict(urllib.parse.parse_qsl(parsed.query))

        if method == "GET" and path == "/healthz":
            self._send_json(200, {"status": "ok",
                                  "node_id": self.api.node.node_id})
            return
        if method == "POST" and path == "/auth/login":
            body = self._body()
            self._send_json(200, self.api.login(
                body.get("username", ""), body.get("password", "")
            ))
            return
        if method == "GET" and (path == "/ui" or path.startswith("/ui/")):
            self._serve_ui(path)
            return

        session = self._session()
        channel_id = params.get("channel", DEFAULT_CHANNEL)

        if method == "POST" and path == "/transactions":
            self._send_json(202, self.api.submit_transaction(session, self._body()))
            return
        match = re.fullmatch(r"/transactions/([0-9a-f]{64})", path)
        if method == "GET" and match:
            self._send_json(200, self.api.transaction_status(session, match.group(1)))
            return
        match = re.fullmatch(r"/assets/([^/]+)/(.+)", path)
        if method == "GET" and match:
            registry = urllib.parse.unquote(match.group(1))
            key = urllib.parse.unquote(match.group(2))
            self._send_json(
                200, self.api.get_asset(session, registry, key, channel_id)
            )
            return
        match = re.fullmatch(r"/assets/([^/]+)", path)
        if method == "GET" and match:
            registry = urllib.parse.unquote(match.group(1))
            filters = {k: v for k, v in params.items()
                       if k not in ("channel", "limit")}
            limit = int(params["limit"]) if "limit" in params else None
            self._send_json(200, {
                "assets": self.api.query_assets(
                    session, registry, filters, channel_id, limit
                )
            })
            return
        match = re.fullmatch(r"/provenance/lots/(.+)", path)
        if method == "GET" and match:
            lot_id = urllib.parse.unquote(match.group(1))
            self._send_json(200, self.api.provenance(session, lot_id, channel_id))
            return
        match = re.fullmatch(r"/receipts/(.+)", path)
        if method == "GET" and match:
            invoice = urllib.parse.unquote(match.group(1))
            self._send_json(200, self.api.receipt(session, invoice, channel_id))
            return
        if method == "GET" and path == "/node":
            self._send_json(200, self.api.node_info())
            return
        if method == "GET" and path == "/events/stream":
            self._serve_events(session, params)
            return
        raise ApiError(404, "NotFound", "no route %s %s" % (method, path))

    # --- static ui --------------------------------------------------------------------

    _CONTENT_TYPES = {
        ".html": "text/html; charset=utf-8",
        ".js": "application/javascript",
        ".css": "text/css",
        ".json": "application/json",
        ".svg": "image/svg+xml",
        ".ico": "image/x-icon",
        ".map": "application/json",
    }

    def _serve_ui(self, path: str) -> None:
        rel = path[len("/ui"):].lstrip("/") or "index.html"
        if rel == "config.json":
            self._send_json(200, {"api_base_url": ""})
            return
        base = self.api.ui_dir
        if not base:
            raise ApiError(404, "NotFound", "no UI bundle installed")
        full = os.path.realpath(os.path.join(base, rel))
        if not full.startswith(os.path.realpath(base) + os.sep) \
                and full != os.path.realpath(base):
            raise ApiError(404, "NotFound", "no such asset")
        if not os.path.isfile(full):
            raise ApiError(404, "NotFound", "no such asset")
        with open(full, "rb") as fh:
            data = fh.read()
        ext = os.path.splitext(full)[1]
        self.send_response(200)
        self.send_header(
            "Content-Type", self._CONTENT_TYPES.get(ext, "application/octet-stream")
        )
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    # --- events ------------------------------------------------------------------------

    def _serve_events(self, session: dict, params: dict) -> None:
        last_seq = None
        header_id = self.headers.get("Last-Event-ID") or params.get("after")
        if header_id is not None:
            try:
                last_seq = int(header_id)
            except ValueError:
                last_seq = None
        channel_filter = params.get("channel")

        events_queue: queue.Queue = queue.Queue()
        node = self.api.node

        def push(event: dict) -> None:
            events_queue.put(event)

        with node.lock:
            backlog = node.events_since(last_seq)
            node.event_subscribers.append(push)
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            for event in backlog:
                if self._forward_event(event, channel_filter) is False:
                    return
            while True:
                if session["expires_at"] <= self.api._now_ms():
                    return
                try:
                    event = events_queue.get(timeout=0.25)
                except queue.Empty:
                    try:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                    except (BrokenPipeError, ConnectionResetError, OSError):
                        return
                    continue
                if self._forward_event(event, channel_filter) is False:
                    return
        finally:
            with node.lock:
                if push in node.event_subscribers:
                    node.event_subscribers.remove(push)

    def _forward_event(self, event: dict, channel_filter: str | None):
        if channel_filter and event["channel_id"] != channel_filter:
            return True
        frame = (
            "id: %d\nevent: %s\ndata: %s\n\n"
            % (
                event["seq"],
                event["event_name"],
                _json_bytes(event).decode("utf-8"),
            )
        )
        try:
            self.wfile.write(frame.encode("utf-8"))
            self.wfile.flush()
            return True
        except (BrokenPipeError, ConnectionResetError, OSError):
            return False


class ApiServer:
    """ThreadingHTTPServer wrapper bound to one node."""

    def __init__(self, api: NodeApi, listen_addr: str):
        host, port = listen_addr.rsplit(":", 1)
        handler = type("BoundHandler", (_Handler,), {"api": api})
        self.httpd = ThreadingHTTPServer((host, int(port)), handler)
        self.httpd.daemon_threads = True
        self.listen_addr = listen_addr
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self.httpd.serve_forever, kwargs={"poll_interval": 0.1},
            daemon=True,
        )
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def load_credentials(path: str) -> dict:
    with open(path, "rb") as fh:
        return json.loads(fh.read().decode("utf-8"))


def build_credentials(participants: list[dict],
                      passwords: dict[str, str]) -> dict:
    users = []
    for participant in participants:
        pid = participant["participant_id"]
        record = hash_password(passwords[pid])
        users.append({
            "username": pid,
            "participant_id": pid,
            **record,
        })
    return {"users": users}
