"""TCP front end for the delivery service.

Connections speak newline-delimited JSON frames and must open with HELLO.
Recipient connections are live sessions (a later connect supersedes an
earlier one); sender connections are plain request/response. Frames the
service addresses to other principals (for example REACTION_NOTIFY for a
sessionless sender) are recorded in the frame log and not transmitted here;
senders pick them up by polling their view.
"""

from __future__ import annotations

import errno
import socket
import socketserver
import threading
from typing import Any

from . import protocol
from .errors import AddressInUse, ParseError
from .service import DeliveryService


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        service: DeliveryService = self.server.service  # type: ignore[attr-defined]
        principal: str | None = None
        role: str | None = None
        session_generation: int | None = None
        try:
            for raw in self.rfile:
                line = raw.strip()
                if not line:
                    continue
                try:
                    frame = protocol.decode_frame(line)
                except ParseError as exc:
                    self._send(protocol.make_frame(protocol.ERROR, {"code": exc.code, "detail": exc.detail}))
                    continue
                if principal is None:
                    if frame["kind"] != protocol.HELLO:
                        self._send(
                            protocol.make_frame(
                                protocol.ERROR,
                                {"code": "ParseError", "detail": "first frame must be HELLO"},
                            )
                        )
                        continue
                    principal = frame["payload"].get("principal")
                    role = frame["payload"].get("role")
                frame.setdefault("from", principal)
                for response in service.handle_frame(frame):
                    # Only direct responses travel on this connection.
                    if response.get("to") in (None, principal):
                        self._send(response)
                if frame["kind"] == protocol.HELLO and role == "recipient":
                    session_generation = service.session_generation(principal)
        except (ConnectionResetError, BrokenPipeError):
            pass
        finally:
            if role == "recipient" and principal is not None:
                service.close_session(principal, session_generation)

    def _send(self, frame: dict[str, Any]) -> None:
        self.wfile.write(protocol.encode_frame(frame))
        self.wfile.flush()


class WandRelayServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = False

    def __init__(self, host: str, port: int, service: DeliveryService):
        self.service = service
        try:
            super().__init__((host, port), _Handler)
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise AddressInUse(f"{host}:{port}") from None
            raise

    def serve_in_thread(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class WireClient:
    """Minimal frame client for the CLI and tests."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rwb")

    def send(self, frame: dict[str, Any]) -> None:
        self._file.write(protocol.encode_frame(frame))
        self._file.flush()

    def read_frame(self) -> dict[str, Any]:
        line = self._file.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        return protocol.decode_frame(line)

    def request(self, frame: dict[str, Any]) -> dict[str, Any]:
        """Send one frame and read exactly one response frame."""
        self.send(frame)
        return self.read_frame()

    def hello(self, role: str, principal: str) -> dict[str, Any]:
        return self.request(
            protocol.make_frame(protocol.HELLO, {"role": role, "principal": principal}, sender=principal)
        )

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()

    def __enter__(self) -> "WireClient":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()
