"""User-facing stream abstraction over the object and file backends.

A DistroStream wraps a StreamHandle plus the process-local client. Each
instance carries its own producer/consumer token, so two instances of the
same stream (for example, the same handle deserialized inside two tasks)
count as two producers or two group members -- mirroring the per-process
publisher/consumer instantiation of the backends.
"""
from __future__ import annotations

import time

from .client import DistroStreamClient
from .codec import DEFAULT_CODEC, Codec
from .errors import BackendError
from .model import ConsumerMode, StreamElement, StreamHandle, StreamKind

DEFAULT_POLL_TICK_MS = 50


class DistroStream:
    """Publish/poll/close/metadata API bound to one backend stream."""

    def __init__(self, client: DistroStreamClient, handle: StreamHandle,
                 codec: Codec = DEFAULT_CODEC,
                 group: str | None = None,
                 poll_tick_ms: int = DEFAULT_POLL_TICK_MS) -> None:
        self._client = client
        self.handle = handle
        self._codec = codec
        self._group = group
        self._token = client.new_token()
        self._tick_s = poll_tick_ms / 1000.0

    # -- metadata --

    @property
    def id(self) -> str:
        return self.handle.id

    @property
    def alias(self) -> str | None:
        return self.handle.alias

    @property
    def kind(self) -> StreamKind:
        return self.handle.kind

    def get_metadata(self) -> tuple[str, str | None, StreamKind]:
        """Creation-time metadata, verified against the server registry."""
        entry = self._client.lookup(self.handle.id)
        return self.handle.id, entry.alias, entry.kind

    def is_closed(self) -> bool:
        return self._client.is_closed(self.handle.id)

    # -- producer side --

    def publish(self, elements) -> None:
        """Publish one payload or an ordered list; each becomes one record."""
        if self.handle.kind is not StreamKind.OBJECT:
            raise BackendError(
                "FILE streams publish implicitly: write files into base_dir")
        items = elements if isinstance(elements, list) else [elements]
        if not items:
            return
        payloads = []
        for item in items:
            data = self._codec.encode(item)
            if not data:
                raise BackendError("stream payloads must be non-empty")
            payloads.append(data)
        self._client.publish(self.handle.id, self._token, payloads)

    def close(self) -> None:
        """Close this instance's producer registration; idempotent."""
        self._client.close_producer(self.handle.id, self._token)

    # -- consumer side --

    def _poll_once(self, max_elements: int | None) -> list[StreamElement]:
        raw = self._client.poll_once(
            self.handle.id, self._token, self.handle.consumer_mode,
            max_elements, self._group)
        return [StreamElement(payload=value, publish_time=ts) for ts, value in raw]

    def poll(self, timeout_ms: int | None = None,
             max_elements: int | None = None) -> list[StreamElement]:
        """Return all currently unread elements for this consumer's group.

        Without a timeout the call returns immediately (possibly empty).
        With one, it waits until an element arrives, the timeout expires, or
        the stream closes mid-wait (early return with whatever is available).
        """
        elements = self._poll_once(max_elements)
        if elements or timeout_ms is None:
            return elements
        deadline = time.monotonic() + timeout_ms / 1000.0
        while True:
            if self.is_closed():
                return self._poll_once(max_elements)
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return []
            time.sleep(min(self._tick_s, remaining))
            elements = self._poll_once(max_elements)
            if elements:
                return elements

    def drain(self, proc=None, max_elements: int | None = None,
              timeout_ms: int = 10 * 60 * 1000,
              settle_ms: int = 0) -> list[StreamElement]:
        """Consume until the stream is closed and empty.

        The loop always finishes with an empty poll after observing the
        closed flag, which also acknowledges the final at-least-once batch.
        settle_ms keeps the consumer polling that much longer after the
        stream first looks drained, so records redelivered from a crashed
        group member (lease expiry) are still picked up.
        """
        collected: list[StreamElement] = []
        deadline = time.monotonic() + timeout_ms / 1000.0
        quiet_since: float | None = None
        while time.monotonic() < deadline:
            batch = self.poll(timeout_ms=int(self._tick_s * 1000), max_elements=max_elements)
            if proc is not None:
                for element in batch:
                    proc(element)
            collected.extend(batch)
            if batch:
                quiet_since = None
                continue
            if self.is_closed():
                final = self._poll_once(max_elements)
                if final:
                    if proc is not None:
                        for element in final:
                            proc(element)
                    collected.extend(final)
                    quiet_since = None
                    continue
                now = time.monotonic()
                if quiet_since is None:
                    quiet_since = now
                if (now - quiet_since) * 1000.0 >= settle_ms:
                    return collected
                time.sleep(self._tick_s)
        return collected


def create_stream(client: DistroStreamClient, kind: StreamKind,
                  alias: str | None = None, base_dir: str | None = None,
                  consumer_mode: ConsumerMode = ConsumerMode.EXACTLY_ONCE,
                  partitions: int = 1, tick_ms: int | None = None,
                  register_producer: bool = False,
                  codec: Codec = DEFAULT_CODEC,
                  group: str | None = None,
                  poll_tick_ms: int = DEFAULT_POLL_TICK_MS) -> DistroStream:
    """Create (or attach to, by alias) a stream and return its local binding.

    register_producer acquires a producer grant for this instance up front;
    file producers need it because writing files never goes through publish.
    """
    stream_id, _created = client.register_stream(
        kind, alias, base_dir, partitions=partitions, tick_ms=tick_ms)
    handle = StreamHandle(id=stream_id, kind=kind, alias=alias,
                          base_dir=base_dir, consumer_mode=consumer_mode)
    stream = DistroStream(client, handle, codec=codec, group=group,
                          poll_tick_ms=poll_tick_ms)
    if register_producer:
        client.add_producer(stream_id, stream._token)
    return stream


def attach(client: DistroStreamClient, handle: StreamHandle,
           codec: Codec = DEFAULT_CODEC, group: str | None = None,
           poll_tick_ms: int = DEFAULT_POLL_TICK_MS) -> DistroStream:
    """Bind an existing handle (e.g. received as a task argument) locally."""
    return DistroStream(client, handle, codec=codec, group=group,
                        poll_tick_ms=poll_tick_ms)
