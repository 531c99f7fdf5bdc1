"""DistroStream server: stream registry, permission checks, close propagation.

One server process coordinates every application sharing the stream set. It
hosts the log broker and the directory monitors in-process and talks to the
per-process clients over the framed socket protocol. When the last producer
of a stream closes, the server flags the stream closed and pushes an
INVALIDATE frame to every connected client before answering the closing
request, so a client can never observe a stale open flag after its close
round trip completes.
"""
from __future__ import annotations

import logging
import os
import socket
import threading
import time
from dataclasses import dataclass, field

from . import protocol
from .broker import Broker
from .codec import unpack_blocks
from .dirmon import DirectoryMonitor
from .errors import (
    AliasKindMismatch, BackendError, BindError, ClosedStreamError,
    HybridflowError, InvalidPath, ProtocolError, UnknownStream,
)
from .model import ConsumerMode, StreamKind

log = logging.getLogger("hybridflow.server")

DEFAULT_PORT = int(os.environ.get("DS_SERVER_PORT", "49049"))
DEFAULT_HOST = os.environ.get("DS_SERVER_HOST", "127.0.0.1")


class RemoteBroker:
    """Broker facade over a separately-running broker server.

    Lets the metadata server delegate log storage to another process while
    keeping the same internal interface the in-process broker offers.
    """

    def __init__(self, host: str, port: int) -> None:
        from .client import DistroStreamClient
        self._client = DistroStreamClient(host=host, port=port, group="broker-link")

    def create_topic(self, name: str, partition_count: int = 1) -> None:
        self._client.new_topic(name, partition_count)

    def delete_topic(self, name: str) -> None:
        self._client.delete_topic(name)

    def append(self, topic: str, value: bytes, key: bytes | None = None) -> int:
        return self._client.append(topic, value, key)

    def join_group(self, topic: str, group_id: str, consumer: str) -> None:
        self._client.join_topic_group(topic, group_id, consumer)

    def fetch(self, topic: str, group_id: str, consumer: str,
              max_records: int | None = None,
              mode: ConsumerMode = ConsumerMode.EXACTLY_ONCE):
        return self._client.fetch(topic, group_id, consumer, max_records, mode)

    def commit_and_delete(self, topic: str, group_id: str, consumer: str,
                          offsets: dict[int, list[int]], delete: bool = True) -> None:
        self._client.commit(topic, group_id, consumer, offsets, delete)

    def poll(self, topic: str, group_id: str, consumer: str,
             mode: ConsumerMode, max_records: int | None = None):
        return self._client.poll_topic(topic, group_id, consumer, mode, max_records)

    def close(self) -> None:
        self._client.close()


@dataclass
class StreamRegistryEntry:
    id: str
    alias: str | None
    kind: StreamKind
    backend_ref: str
    base_dir: str | None = None
    open_producers: set[str] = field(default_factory=set)
    ever_producers: set[str] = field(default_factory=set)
    consumers: set[tuple[str, str]] = field(default_factory=set)
    closed: bool = False
    closes_observed: int = 0


class StreamRegistry:
    """Single source of truth for stream metadata; mutations are serialized."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._entries: dict[str, StreamRegistryEntry] = {}
        self._by_alias: dict[tuple[str, StreamKind], str] = {}
        self._counter = 0
        self.registered_total = 0
        self.deleted_total = 0

    def register(self, kind: StreamKind, alias: str | None,
                 backend_ref_for: "callable", base_dir: str | None) -> tuple[StreamRegistryEntry, bool]:
        with self._lock:
            if alias:
                other = self._by_alias.get((alias, StreamKind.FILE if kind is StreamKind.OBJECT
                                            else StreamKind.OBJECT))
                if other is not None:
                    raise AliasKindMismatch(
                        f"alias {alias!r} already registered with kind "
                        f"{self._entries[other].kind.value}")
                existing = self._by_alias.get((alias, kind))
                if existing is not None:
                    return self._entries[existing], False
            self._counter += 1
            stream_id = f"s-{self._counter:06d}"
            entry = StreamRegistryEntry(
                id=stream_id, alias=alias or None, kind=kind,
                backend_ref=backend_ref_for(stream_id), base_dir=base_dir,
            )
            self._entries[stream_id] = entry
            if alias:
                self._by_alias[(alias, kind)] = stream_id
            self.registered_total += 1
            return entry, True

    def get(self, stream_id: str) -> StreamRegistryEntry:
        with self._lock:
            entry = self._entries.get(stream_id)
            if entry is None:
                raise UnknownStream(stream_id)
            return entry

    def add_producer(self, stream_id: str, token: str) -> bool:
        """Producer grant; denied (False) once the stream is closed."""
        with self._lock:
            entry = self.get(stream_id)
            if entry.closed:
                return False
            entry.open_producers.add(token)
            entry.ever_producers.add(token)
            return True

    def add_consumer(self, stream_id: str, token: str, group: str) -> None:
        with self._lock:
            entry = self.get(stream_id)
            entry.consumers.add((token, group))

    def close_producer(self, stream_id: str, token: str) -> bool:
        """Remove a producer grant; returns True when the stream just closed.

        A token without a grant is a no-op. The stream closes once every
        producer that ever registered has closed (and at least one did).
        """
        with self._lock:
            entry = self.get(stream_id)
            if token not in entry.open_producers:
                return False
            entry.open_producers.discard(token)
            entry.closes_observed += 1
            return self._maybe_close(entry)

    def revoke_producer(self, stream_id: str, token: str) -> bool:
        """Erase an open grant as if it never registered (failed attempts).

        Unlike close, a revoke does not count as a close; but removing the
        grant can complete a closure that other producers already initiated.
        """
        with self._lock:
            entry = self.get(stream_id)
            if token not in entry.open_producers:
                return False
            entry.open_producers.discard(token)
            entry.ever_producers.discard(token)
            return self._maybe_close(entry)

    def _maybe_close(self, entry: StreamRegistryEntry) -> bool:
        if (not entry.open_producers and entry.ever_producers
                and entry.closes_observed > 0 and not entry.closed):
            entry.closed = True
            return True
        return False

    def live_entries(self) -> int:
        with self._lock:
            return len(self._entries)

    def snapshot(self) -> dict[str, StreamRegistryEntry]:
        with self._lock:
            return dict(self._entries)


class StreamServer:
    """TCP front end over the registry, broker, and directory monitors."""

    def __init__(self, host: str = DEFAULT_HOST, port: int = DEFAULT_PORT,
                 lease_ms: int | None = None, tick_ms: int = 200,
                 broker_address: tuple[str, int] | None = None,
                 journal_path: str | None = None) -> None:
        self.host = host
        self._requested_port = port
        self.port: int | None = None
        self.registry = StreamRegistry()
        if broker_address is not None:
            self.broker = RemoteBroker(*broker_address)
        else:
            self.broker = Broker(journal_path=journal_path,
                                 **({"lease_ms": lease_ms} if lease_ms else {}))
        self.monitor = DirectoryMonitor(self._monitor_sink, tick_ms=tick_ms)
        self._sock: socket.socket | None = None
        self._conns: set[protocol.Connection] = set()
        self._conn_lock = threading.Lock()
        # producer grants made through each connection, for expiry on drop
        self._conn_grants: dict[protocol.Connection, set[tuple[str, str]]] = {}
        self._stop = threading.Event()
        self._accept_thread: threading.Thread | None = None

    def _monitor_sink(self, stream_id: str, payload: bytes) -> None:
        self.broker.append(stream_id, payload)

    # -- lifecycle --

    def start(self) -> None:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.host, self._requested_port))
        except OSError as exc:
            sock.close()
            raise BindError(f"cannot bind {self.host}:{self._requested_port}: {exc}") from exc
        sock.listen(128)
        self._sock = sock
        self.port = sock.getsockname()[1]
        self.monitor.start()
        self._stop.clear()
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="ds-accept", daemon=True)
        self._accept_thread.start()
        log.info("%d | SERVE | - | - | listening on %s:%d",
                 int(time.time() * 1000), self.host, self.port)

    def serve(self) -> None:
        """Run until interrupted; blocking variant used by the CLI."""
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        self.monitor.stop()
        if isinstance(self.broker, RemoteBroker):
            self.broker.close()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        with self._conn_lock:
            conns = list(self._conns)
        for conn in conns:
            conn.close()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)
            self._accept_thread = None

    # -- connection handling --

    def _accept_loop(self) -> None:
        assert self._sock is not None
        # a timeout lets stop() interrupt accept(), which close() alone won't
        self._sock.settimeout(0.25)
        while not self._stop.is_set():
            try:
                raw, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            raw.settimeout(None)
            raw.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = protocol.Connection(raw)
            with self._conn_lock:
                self._conns.add(conn)
                self._conn_grants[conn] = set()
            threading.Thread(target=self._serve_conn, args=(conn,),
                             name=f"ds-conn-{conn.peer}", daemon=True).start()

    def _serve_conn(self, conn: protocol.Connection) -> None:
        try:
            while not self._stop.is_set():
                try:
                    frame = conn.recv()
                except ProtocolError:
                    break
                except OSError:
                    break
                if frame is None:
                    break
                if frame.verb == "BYE":
                    try:
                        conn.send(protocol.ok(frame.corr_id))
                    except OSError:
                        pass
                    break
                try:
                    reply = self._dispatch(conn, frame)
                except HybridflowError as exc:
                    reply = protocol.err(frame.corr_id, type(exc).__name__, str(exc))
                    self._log(frame, f"error:{type(exc).__name__}")
                except Exception as exc:  # noqa: BLE001 - protocol robustness
                    reply = protocol.err(frame.corr_id, "InternalError", str(exc))
                    self._log(frame, "error:internal")
                try:
                    conn.send(reply)
                except OSError:
                    break
        finally:
            self._drop_conn(conn)

    def _drop_conn(self, conn: protocol.Connection) -> None:
        with self._conn_lock:
            self._conns.discard(conn)
            grants = self._conn_grants.pop(conn, set())
        conn.close()
        # a producer that vanishes without closing is treated as closed
        for stream_id, token in grants:
            try:
                if self.registry.close_producer(stream_id, token):
                    self._push_invalidate(stream_id)
            except UnknownStream:
                pass

    def _push_invalidate(self, stream_id: str) -> None:
        with self._conn_lock:
            targets = list(self._conns)
        frame = protocol.Frame(verb="INVALIDATE", fields=[stream_id])
        for target in targets:
            try:
                target.send(frame)
            except OSError:
                pass

    def _log(self, frame: protocol.Frame, outcome: str) -> None:
        stream_id = frame.fields[0] if frame.fields else "-"
        process = frame.fields[1] if len(frame.fields) > 1 else "-"
        log.info("%d | %s | %s | %s | %s",
                 int(time.time() * 1000), frame.verb, stream_id, process, outcome)

    # -- request dispatch --

    def _dispatch(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        handler = getattr(self, f"_op_{frame.verb.lower()}", None)
        if handler is None:
            raise ProtocolError(f"unknown verb {frame.verb!r}")
        return handler(conn, frame)

    @staticmethod
    def _field(frame: protocol.Frame, idx: int, what: str) -> str:
        try:
            return frame.fields[idx]
        except IndexError:
            raise ProtocolError(f"{frame.verb} missing field {what!r}") from None

    def _op_register(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        kind = StreamKind(self._field(frame, 0, "kind"))
        alias = self._field(frame, 1, "alias") or None
        base_dir = self._field(frame, 2, "base_dir") or None
        partitions = int(self._field(frame, 3, "partitions") or "1")
        tick_raw = frame.fields[4] if len(frame.fields) > 4 else ""
        tick_ms = int(tick_raw) if tick_raw else None
        if kind is StreamKind.FILE:
            if not base_dir:
                raise InvalidPath("FILE streams require base_dir")
            if not os.path.isabs(base_dir):
                raise InvalidPath(f"base_dir must be absolute: {base_dir!r}")
            if not os.path.isdir(base_dir) or not os.access(base_dir, os.R_OK):
                raise InvalidPath(f"base_dir missing or unreadable: {base_dir!r}")
        elif base_dir:
            raise InvalidPath("base_dir is only valid for FILE streams")

        entry, created = self.registry.register(
            kind, alias, backend_ref_for=lambda sid: sid if kind is StreamKind.OBJECT
            else base_dir, base_dir=base_dir)
        if created:
            self.broker.create_topic(entry.id, partition_count=partitions)
            if kind is StreamKind.FILE:
                self.monitor.register_dir(entry.id, base_dir, tick_ms=tick_ms)
        self._log(frame, f"id={entry.id} created={int(created)}")
        return protocol.ok(frame.corr_id, [entry.id, "1" if created else "0"])

    def _op_lookup(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        entry = self.registry.get(self._field(frame, 0, "id"))
        return protocol.ok(frame.corr_id, [
            entry.id, entry.alias or "", entry.kind.value, "1" if entry.closed else "0",
            entry.backend_ref or "",
        ])

    def _op_status(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        entry = self.registry.get(self._field(frame, 0, "id"))
        return protocol.ok(frame.corr_id, ["1" if entry.closed else "0"])

    def _op_addprod(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        stream_id = self._field(frame, 0, "id")
        token = self._field(frame, 1, "token")
        granted = self.registry.add_producer(stream_id, token)
        if granted:
            with self._conn_lock:
                if conn in self._conn_grants:
                    self._conn_grants[conn].add((stream_id, token))
        self._log(frame, "granted" if granted else "denied")
        return protocol.ok(frame.corr_id, ["1" if granted else "0"])

    def _op_addcons(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        stream_id = self._field(frame, 0, "id")
        token = self._field(frame, 1, "token")
        group = self._field(frame, 2, "group")
        self.registry.add_consumer(stream_id, token, group)
        self.broker.join_group(stream_id, group, token)
        return protocol.ok(frame.corr_id, ["1"])

    def _op_close(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        stream_id = self._field(frame, 0, "id")
        token = self._field(frame, 1, "token")
        revoke = len(frame.fields) > 2 and frame.fields[2] == "revoke"
        if revoke:
            fully_closed = self.registry.revoke_producer(stream_id, token)
        else:
            fully_closed = self.registry.close_producer(stream_id, token)
        if fully_closed:
            # invalidations go out before the closing client gets its answer
            self._push_invalidate(stream_id)
        with self._conn_lock:
            if conn in self._conn_grants:
                self._conn_grants[conn].discard((stream_id, token))
        self._log(frame, "closed" if fully_closed else "open")
        return protocol.ok(frame.corr_id, ["1" if fully_closed else "0"])

    def _op_pubreq(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        stream_id = self._field(frame, 0, "id")
        token = self._field(frame, 1, "token")
        entry = self.registry.get(stream_id)
        if entry.kind is not StreamKind.OBJECT:
            raise BackendError("publish is implicit for FILE streams (write to base_dir)")
        if entry.closed:
            raise ClosedStreamError(stream_id)
        if token not in entry.open_producers:
            if not self.registry.add_producer(stream_id, token):
                raise ClosedStreamError(stream_id)
            with self._conn_lock:
                if conn in self._conn_grants:
                    self._conn_grants[conn].add((stream_id, token))
        payloads = unpack_blocks(frame.payload)
        for value in payloads:
            if not value:
                raise BackendError("empty payloads are not allowed")
            self.broker.append(stream_id, value)
        self._log(frame, f"published={len(payloads)}")
        return protocol.ok(frame.corr_id, [str(len(payloads))])

    def _op_pollreq(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        stream_id = self._field(frame, 0, "id")
        token = self._field(frame, 1, "token")
        group = self._field(frame, 2, "group")
        mode = ConsumerMode(self._field(frame, 3, "mode"))
        max_raw = frame.fields[4] if len(frame.fields) > 4 else ""
        max_records = int(max_raw) if max_raw else None
        entry = self.registry.get(stream_id)
        self.registry.add_consumer(stream_id, token, group)
        if entry.kind is StreamKind.FILE:
            # scan synchronously so files written before a producer's close
            # are in the queue by the time the closed flag is observable
            self.monitor.scan_once(stream_id)
        records = self.broker.poll(entry.id, group, token, mode, max_records)
        payload = protocol.pack_elements([(r.publish_time, r.value) for r in records])
        return protocol.ok(frame.corr_id, [str(len(records))], payload)

    # -- raw broker verbs --

    def _op_newtopic(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        name = self._field(frame, 0, "name")
        partitions = int(self._field(frame, 1, "partitions") or "1")
        self.broker.create_topic(name, partitions)
        return protocol.ok(frame.corr_id)

    def _op_deltopic(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        self.broker.delete_topic(self._field(frame, 0, "name"))
        return protocol.ok(frame.corr_id)

    def _op_append(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        topic = self._field(frame, 0, "topic")
        key = self._field(frame, 1, "key").encode("utf-8") or None
        offset = self.broker.append(topic, frame.payload, key)
        return protocol.ok(frame.corr_id, [str(offset)])

    def _op_fetch(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        topic = self._field(frame, 0, "topic")
        group = self._field(frame, 1, "group")
        consumer = self._field(frame, 2, "consumer")
        max_raw = self._field(frame, 3, "max")
        mode = ConsumerMode(self._field(frame, 4, "mode"))
        records = self.broker.fetch(topic, group, consumer,
                                    int(max_raw) if max_raw else None, mode)
        return protocol.ok(frame.corr_id, [str(len(records))],
                           protocol.pack_records(records))

    def _op_bjoin(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        topic = self._field(frame, 0, "topic")
        group = self._field(frame, 1, "group")
        consumer = self._field(frame, 2, "consumer")
        self.broker.join_group(topic, group, consumer)
        return protocol.ok(frame.corr_id)

    def _op_bpoll(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        topic = self._field(frame, 0, "topic")
        group = self._field(frame, 1, "group")
        consumer = self._field(frame, 2, "consumer")
        mode = ConsumerMode(self._field(frame, 3, "mode"))
        max_raw = frame.fields[4] if len(frame.fields) > 4 else ""
        records = self.broker.poll(topic, group, consumer, mode,
                                   int(max_raw) if max_raw else None)
        return protocol.ok(frame.corr_id, [str(len(records))],
                           protocol.pack_records(records))

    def _op_commit(self, conn: protocol.Connection, frame: protocol.Frame) -> protocol.Frame:
        topic = self._field(frame, 0, "topic")
        group = self._field(frame, 1, "group")
        consumer = self._field(frame, 2, "consumer")
        delete = self._field(frame, 3, "delete") == "1"
        spec = self._field(frame, 4, "offsets")
        offsets: dict[int, list[int]] = {}
        for chunk in spec.split(";"):
            if not chunk:
                continue
            part_raw, _, offs_raw = chunk.partition(":")
            offsets[int(part_raw)] = [int(o) for o in offs_raw.split("+") if o]
        self.broker.commit_and_delete(topic, group, consumer, offsets, delete=delete)
        return protocol.ok(frame.corr_id)
