"""Stream API over a live server: create, publish, poll, close, metadata."""
import os
import time

import pytest

from hybridflow.errors import (
    AliasKindMismatch, BackendError, ClosedStreamError, InvalidPath,
    RegistrationError, UnknownStream,
)
from hybridflow.model import ConsumerMode, StreamHandle, StreamKind
from hybridflow.streams import attach, create_stream


class TestCreate:
    def test_object_stream_with_alias(self, client):
        s = create_stream(client, StreamKind.OBJECT, alias="myStream")
        assert s.kind is StreamKind.OBJECT
        assert s.alias == "myStream"
        assert s.id

    def test_file_stream_with_base_dir(self, client, tmp_path):
        s = create_stream(client, StreamKind.FILE, alias="myStream",
                          base_dir=str(tmp_path))
        assert s.kind is StreamKind.FILE

    def test_same_alias_same_id(self, client):
        # registry-lookup oracle on a two-call sequence
        a = create_stream(client, StreamKind.OBJECT, alias="shared")
        b = create_stream(client, StreamKind.OBJECT, alias="shared")
        assert a.id == b.id

    def test_distinct_ids_without_alias(self, client):
        a = create_stream(client, StreamKind.OBJECT)
        b = create_stream(client, StreamKind.OBJECT)
        assert a.id != b.id

    def test_alias_kind_mismatch(self, client, tmp_path):
        create_stream(client, StreamKind.OBJECT, alias="dual")
        with pytest.raises(AliasKindMismatch):
            create_stream(client, StreamKind.FILE, alias="dual",
                          base_dir=str(tmp_path))

    def test_relative_base_dir(self, client):
        with pytest.raises(InvalidPath):
            create_stream(client, StreamKind.FILE, base_dir="not/absolute")

    def test_missing_base_dir(self, client, tmp_path):
        with pytest.raises(InvalidPath):
            create_stream(client, StreamKind.FILE,
                          base_dir=str(tmp_path / "absent"))

    def test_server_unreachable(self):
        from hybridflow.client import DistroStreamClient
        from hybridflow.errors import ServerUnreachable
        with pytest.raises(ServerUnreachable):
            DistroStreamClient(host="127.0.0.1", port=1)

    def test_default_mode_exactly_once(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        assert s.handle.consumer_mode is ConsumerMode.EXACTLY_ONCE


class TestPublishPoll:
    def test_list_preserves_order(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        s.publish([b"a", b"b", b"c"])
        got = [e.payload for e in s.poll()]
        assert got == [b"a", b"b", b"c"]

    def test_empty_list_no_records(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        s.publish([])
        assert s.poll() == []

    def test_publish_on_closed(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        s.publish(b"x")
        s.close()
        with pytest.raises(ClosedStreamError):
            s.publish(b"y")

    def test_publish_on_file_stream_rejected(self, client, tmp_path):
        s = create_stream(client, StreamKind.FILE, base_dir=str(tmp_path))
        with pytest.raises(BackendError):
            s.publish(b"x")

    def test_second_poll_empty(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        s.publish([b"1", b"2", b"3"])
        assert len(s.poll()) == 3
        assert s.poll() == []

    def test_poll_timeout_expires(self, client):
        s = create_stream(client, StreamKind.OBJECT, register_producer=True)
        start = time.monotonic()
        assert s.poll(timeout_ms=60) == []
        elapsed = time.monotonic() - start
        assert elapsed >= 0.06
        # returns within T plus one tick (plus generous scheduling slack)
        assert elapsed < 0.06 + 0.05 + 0.25

    def test_poll_timeout_sees_late_publish(self, client_factory):
        import threading
        c1 = client_factory()
        c2 = client_factory()
        s1 = create_stream(c1, StreamKind.OBJECT, alias="late")
        s2 = create_stream(c2, StreamKind.OBJECT, alias="late")
        threading.Timer(0.05, lambda: s1.publish(b"v")).start()
        got = s2.poll(timeout_ms=2000)
        assert [e.payload for e in got] == [b"v"]

    def test_greedy_group_delivery(self, client_factory):
        # two consumers, one group: first poller takes everything
        c1 = client_factory(group="app")
        c2 = client_factory(group="app")
        s1 = create_stream(c1, StreamKind.OBJECT, alias="greedy")
        s2 = create_stream(c2, StreamKind.OBJECT, alias="greedy")
        s1.publish([b"1", b"2", b"3", b"4"])
        assert len(s1.poll()) == 4
        assert s2.poll() == []

    def test_poll_never_errors_on_closed(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        s.publish([b"a", b"b"])
        s.close()
        assert s.is_closed()
        assert len(s.poll()) == 2

    def test_payloads_non_empty(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        with pytest.raises(BackendError):
            s.publish(b"")

    def test_max_elements_cap(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        s.publish([b"1", b"2", b"3"])
        assert len(s.poll(max_elements=1)) == 1
        assert len(s.poll(max_elements=2)) == 2


class TestClose:
    def test_single_producer_close_flips_flag(self, client_factory):
        producer = client_factory()
        consumer = client_factory()
        sp = create_stream(producer, StreamKind.OBJECT, alias="c1")
        sc = create_stream(consumer, StreamKind.OBJECT, alias="c1")
        sp.publish(b"x")
        assert sc.is_closed() is False
        sp.close()
        deadline = time.monotonic() + 2
        while not sc.is_closed() and time.monotonic() < deadline:
            time.sleep(0.01)
        assert sc.is_closed() is True

    def test_one_of_two_producers(self, client):
        # registry oracle: closed iff zero open producers remain
        a = create_stream(client, StreamKind.OBJECT, alias="two")
        b = create_stream(client, StreamKind.OBJECT, alias="two")
        a.publish(b"1")
        b.publish(b"2")
        a.close()
        assert a.is_closed() is False
        b.close()
        assert b.is_closed() is True

    def test_double_close_idempotent(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        s.publish(b"x")
        s.close()
        s.close()
        assert s.is_closed() is True

    def test_fresh_stream_not_closed(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        assert s.is_closed() is False

    def test_close_without_grant_is_noop(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        s.close()  # never published, never granted
        assert s.is_closed() is False

    def test_cache_invalidation_then_server_truth(self, client_factory):
        # cache-coherence oracle: cached false + INVALIDATE + server true -> true
        producer = client_factory()
        consumer = client_factory()
        sp = create_stream(producer, StreamKind.OBJECT, alias="coherent")
        sc = create_stream(consumer, StreamKind.OBJECT, alias="coherent")
        sp.publish(b"x")
        assert sc.is_closed() is False  # now cached false
        gen_before = consumer.cache.generation
        sp.close()
        deadline = time.monotonic() + 2
        while consumer.cache.generation == gen_before and time.monotonic() < deadline:
            time.sleep(0.01)
        assert consumer.cache.generation > gen_before
        assert sc.is_closed() is True

    def test_timeout_poll_returns_early_on_close(self, client_factory):
        import threading
        producer = client_factory()
        consumer = client_factory()
        sp = create_stream(producer, StreamKind.OBJECT, alias="early")
        sc = create_stream(consumer, StreamKind.OBJECT, alias="early")
        sp.publish(b"x")
        assert len(sc.poll()) == 1
        threading.Timer(0.05, sp.close).start()
        start = time.monotonic()
        got = sc.poll(timeout_ms=10_000)
        elapsed = time.monotonic() - start
        assert got == []
        assert elapsed < 5.0


class TestMetadata:
    def test_metadata_roundtrip(self, client):
        s = create_stream(client, StreamKind.OBJECT, alias="myStream")
        sid, alias, kind = s.get_metadata()
        assert sid == s.id
        assert alias == "myStream"
        assert kind is StreamKind.OBJECT

    def test_alias_absent(self, client):
        s = create_stream(client, StreamKind.OBJECT)
        _, alias, _ = s.get_metadata()
        assert alias is None

    def test_forged_id(self, client):
        forged = attach(client, StreamHandle(id="s-999999", kind=StreamKind.OBJECT))
        with pytest.raises(UnknownStream):
            forged.get_metadata()

    def test_handle_transitivity(self, client_factory):
        # serialize a handle, rebuild it on another process's client
        c1 = client_factory()
        c2 = client_factory()
        s1 = create_stream(c1, StreamKind.OBJECT, alias="carry")
        wire = s1.handle.to_wire()
        s2 = attach(c2, StreamHandle.from_wire(wire))
        assert s2.id == s1.id
        assert s2.kind is s1.kind
        s1.publish(b"via-wire")
        assert [e.payload for e in s2.poll()] == [b"via-wire"]


class TestFileStreams:
    def test_file_paths_flow_through(self, client, tmp_path):
        s = create_stream(client, StreamKind.FILE, base_dir=str(tmp_path),
                          tick_ms=10)
        tmp = tmp_path / ".f1"
        tmp.write_bytes(b"body")
        os.rename(tmp, tmp_path / "f1")
        got = s.poll(timeout_ms=2000)
        assert [e.text() for e in got] == [str(tmp_path / "f1")]

    def test_consumer_gets_paths_not_contents(self, client, tmp_path):
        s = create_stream(client, StreamKind.FILE, base_dir=str(tmp_path),
                          tick_ms=10)
        (tmp_path / "data.bin").write_bytes(b"\x00" * 128)
        got = s.poll(timeout_ms=2000)
        assert len(got) == 1
        assert os.path.isabs(got[0].text())
        assert got[0].text().startswith(str(tmp_path))

    def test_file_producer_close_via_registered_grant(self, client_factory, tmp_path):
        producer = client_factory()
        consumer = client_factory()
        sp = create_stream(producer, StreamKind.FILE, alias="fclose",
                           base_dir=str(tmp_path), register_producer=True,
                           tick_ms=10)
        sc = create_stream(consumer, StreamKind.FILE, alias="fclose",
                           base_dir=str(tmp_path), tick_ms=10)
        (tmp_path / "one").write_bytes(b"1")
        sp.close()
        elements = sc.drain(timeout_ms=5000)
        assert [e.text() for e in elements] == [str(tmp_path / "one")]
        assert sc.is_closed()
