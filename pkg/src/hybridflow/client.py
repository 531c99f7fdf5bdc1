"""Per-process client: framed connection, metadata cache, request plumbing.

Every application process owns one client. Requests from any thread are
multiplexed over the single server connection by correlation id; a background
reader thread completes pending requests and applies INVALIDATE pushes to the
metadata cache.
"""
from __future__ import annotations

import itertools
import os
import socket
import threading
import uuid
from dataclasses import dataclass
from typing import Callable

from . import errors as errmod
from . import protocol
from .codec import pack_blocks
from .errors import ProtocolError, RegistrationError, ServerUnreachable
from .model import ConsumerMode, LogRecord, StreamKind

_ERROR_CLASSES = {
    name: obj for name, obj in vars(errmod).items()
    if isinstance(obj, type) and issubclass(obj, errmod.HybridflowError)
}

DEFAULT_TIMEOUT_S = 30.0


@dataclass
class CacheEntry:
    alias: str | None
    kind: StreamKind
    closed: bool
    backend: str


class ClientMetadataCache:
    """Cache of server metadata; a closed flag, once true, never reverts."""

    def __init__(self) -> None:
        self._entries: dict[str, CacheEntry] = {}
        self._lock = threading.Lock()
        self.generation = 0

    def put(self, stream_id: str, entry: CacheEntry) -> None:
        with self._lock:
            old = self._entries.get(stream_id)
            if old is not None and old.closed:
                entry.closed = True
            self._entries[stream_id] = entry

    def get(self, stream_id: str) -> CacheEntry | None:
        with self._lock:
            return self._entries.get(stream_id)

    def invalidate(self, stream_id: str) -> None:
        with self._lock:
            self.generation += 1
            entry = self._entries.get(stream_id)
            if entry is not None and not entry.closed:
                del self._entries[stream_id]


class _Pending:
    __slots__ = ("event", "frame")

    def __init__(self) -> None:
        self.event = threading.Event()
        self.frame: protocol.Frame | None = None


class DistroStreamClient:
    """Connection to the DistroStream server used by one process."""

    def __init__(self, host: str | None = None, port: int | None = None,
                 group: str | None = None,
                 request_timeout_s: float = DEFAULT_TIMEOUT_S) -> None:
        self.host = host or os.environ.get("DS_SERVER_HOST", "127.0.0.1")
        self.port = port if port is not None else int(os.environ.get("DS_SERVER_PORT", "49049"))
        self.process_id = f"p-{os.getpid()}-{uuid.uuid4().hex[:6]}"
        self.group = group or os.environ.get("DS_APP_GROUP") or f"app-{self.process_id}"
        self.cache = ClientMetadataCache()
        self.on_invalidate: list[Callable[[str], None]] = []
        self._timeout = request_timeout_s
        self._corr = itertools.count(1)
        self._tokens = itertools.count(1)
        self._pending: dict[str, _Pending] = {}
        self._plock = threading.Lock()
        self._closed = False
        try:
            raw = socket.create_connection((self.host, self.port), timeout=10)
        except OSError as exc:
            raise ServerUnreachable(f"{self.host}:{self.port}: {exc}") from exc
        raw.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        raw.settimeout(None)
        self._conn = protocol.Connection(raw)
        self._reader = threading.Thread(target=self._read_loop,
                                        name=f"ds-client-{self.process_id}", daemon=True)
        self._reader.start()

    # -- transport --

    def _read_loop(self) -> None:
        while True:
            try:
                frame = self._conn.recv()
            except (ProtocolError, OSError):
                frame = None
            if frame is None:
                break
            if frame.verb == "INVALIDATE":
                stream_id = frame.fields[0] if frame.fields else ""
                self.cache.invalidate(stream_id)
                for hook in list(self.on_invalidate):
                    try:
                        hook(stream_id)
                    except Exception:  # noqa: BLE001 - hooks must not kill the reader
                        pass
                continue
            with self._plock:
                pending = self._pending.pop(frame.corr_id, None)
            if pending is not None:
                pending.frame = frame
                pending.event.set()
        # connection gone: fail whatever is still waiting
        with self._plock:
            waiters = list(self._pending.values())
            self._pending.clear()
        for pending in waiters:
            pending.event.set()

    def request(self, verb: str, fields: list[str],
                payload: bytes = b"") -> protocol.Frame:
        if self._closed:
            raise ServerUnreachable("client closed")
        corr = str(next(self._corr))
        pending = _Pending()
        with self._plock:
            self._pending[corr] = pending
        try:
            self._conn.send(protocol.Frame(verb=verb, fields=fields,
                                           corr_id=corr, payload=payload))
        except OSError as exc:
            with self._plock:
                self._pending.pop(corr, None)
            raise ServerUnreachable(str(exc)) from exc
        if not pending.event.wait(self._timeout):
            with self._plock:
                self._pending.pop(corr, None)
            raise ServerUnreachable(f"{verb} timed out after {self._timeout}s")
        if pending.frame is None:
            raise ServerUnreachable("connection lost")
        frame = pending.frame
        if frame.verb == "ERR":
            kind = frame.fields[0] if frame.fields else "HybridflowError"
            message = frame.fields[1] if len(frame.fields) > 1 else ""
            raise _ERROR_CLASSES.get(kind, errmod.HybridflowError)(message)
        return frame

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._conn.send(protocol.Frame(verb="BYE", corr_id=str(next(self._corr))))
        except OSError:
            pass
        self._conn.close()

    def new_token(self) -> str:
        return f"{self.process_id}#{next(self._tokens)}"

    # -- registry operations --

    def register_stream(self, kind: StreamKind, alias: str | None,
                        base_dir: str | None, partitions: int = 1,
                        tick_ms: int | None = None) -> tuple[str, bool]:
        try:
            frame = self.request("REGISTER", [
                kind.value, alias or "", base_dir or "", str(partitions),
                str(tick_ms) if tick_ms else "",
            ])
        except ServerUnreachable as exc:
            raise RegistrationError(str(exc)) from exc
        return frame.fields[0], frame.fields[1] == "1"

    def lookup(self, stream_id: str) -> CacheEntry:
        frame = self.request("LOOKUP", [stream_id])
        entry = CacheEntry(alias=frame.fields[1] or None,
                           kind=StreamKind(frame.fields[2]),
                           closed=frame.fields[3] == "1",
                           backend=frame.fields[4])
        self.cache.put(stream_id, entry)
        return entry

    def status(self, stream_id: str) -> bool:
        """Authoritative closed flag straight from the server."""
        frame = self.request("STATUS", [stream_id])
        closed = frame.fields[0] == "1"
        cached = self.cache.get(stream_id)
        if cached is not None:
            cached.closed = cached.closed or closed
        return closed

    def is_closed(self, stream_id: str) -> bool:
        cached = self.cache.get(stream_id)
        if cached is not None:
            return cached.closed
        entry = self.lookup(stream_id)
        return entry.closed

    def add_producer(self, stream_id: str, token: str) -> bool:
        frame = self.request("ADDPROD", [stream_id, token])
        return frame.fields[0] == "1"

    def add_consumer(self, stream_id: str, token: str, group: str | None = None) -> None:
        self.request("ADDCONS", [stream_id, token, group or self.group])

    def close_producer(self, stream_id: str, token: str) -> bool:
        frame = self.request("CLOSE", [stream_id, token])
        return frame.fields[0] == "1"

    def revoke_producer(self, stream_id: str, token: str) -> bool:
        """Erase a grant as if never registered (failed-task cleanup)."""
        frame = self.request("CLOSE", [stream_id, token, "revoke"])
        return frame.fields[0] == "1"

    # -- data path --

    def publish(self, stream_id: str, token: str, payloads: list[bytes]) -> None:
        self.request("PUBREQ", [stream_id, token], pack_blocks(payloads))

    def poll_once(self, stream_id: str, token: str, mode: ConsumerMode,
                  max_records: int | None = None,
                  group: str | None = None) -> list[tuple[int, bytes]]:
        frame = self.request("POLLREQ", [
            stream_id, token, group or self.group, mode.value,
            str(max_records) if max_records is not None else "",
        ])
        return protocol.unpack_elements(frame.payload)

    # -- raw broker surface --

    def new_topic(self, name: str, partitions: int = 1) -> None:
        self.request("NEWTOPIC", [name, str(partitions)])

    def delete_topic(self, name: str) -> None:
        self.request("DELTOPIC", [name])

    def append(self, topic: str, value: bytes, key: bytes | None = None) -> int:
        frame = self.request("APPEND", [topic, key.decode("utf-8") if key else ""], value)
        return int(frame.fields[0])

    def fetch(self, topic: str, group: str, consumer: str,
              max_records: int | None = None,
              mode: ConsumerMode = ConsumerMode.EXACTLY_ONCE) -> list[LogRecord]:
        frame = self.request("FETCH", [
            topic, group, consumer,
            str(max_records) if max_records is not None else "", mode.value,
        ])
        return [
            LogRecord(value=value, offset=off, partition=part, publish_time=ts)
            for part, off, ts, value in protocol.unpack_records(frame.payload)
        ]

    def commit(self, topic: str, group: str, consumer: str,
               offsets: dict[int, list[int]], delete: bool = True) -> None:
        spec = ";".join(
            f"{part}:{'+'.join(str(o) for o in offs)}" for part, offs in offsets.items()
        )
        self.request("COMMIT", [topic, group, consumer, "1" if delete else "0", spec])

    def join_topic_group(self, topic: str, group: str, consumer: str) -> None:
        self.request("BJOIN", [topic, group, consumer])

    def poll_topic(self, topic: str, group: str, consumer: str,
                   mode: ConsumerMode,
                   max_records: int | None = None) -> list[LogRecord]:
        """Mode-aware poll against a raw topic (separate-broker deployments)."""
        frame = self.request("BPOLL", [
            topic, group, consumer, mode.value,
            str(max_records) if max_records is not None else "",
        ])
        return [
            LogRecord(value=value, offset=off, partition=part, publish_time=ts)
            for part, off, ts, value in protocol.unpack_records(frame.payload)
        ]
