"""Client metadata cache coherence rules."""
from hybridflow.client import CacheEntry, ClientMetadataCache
from hybridflow.model import StreamKind


def entry(closed: bool) -> CacheEntry:
    return CacheEntry(alias=None, kind=StreamKind.OBJECT, closed=closed,
                      backend="s-1")


def test_closed_flag_never_reverts():
    cache = ClientMetadataCache()
    cache.put("s-1", entry(closed=True))
    cache.put("s-1", entry(closed=False))
    assert cache.get("s-1").closed is True


def test_invalidation_drops_open_entries():
    cache = ClientMetadataCache()
    cache.put("s-1", entry(closed=False))
    gen = cache.generation
    cache.invalidate("s-1")
    assert cache.get("s-1") is None  # next query must go to the server
    assert cache.generation == gen + 1


def test_invalidation_keeps_closed_entries():
    cache = ClientMetadataCache()
    cache.put("s-1", entry(closed=True))
    cache.invalidate("s-1")
    assert cache.get("s-1").closed is True


def test_invalidation_of_unknown_id_bumps_generation():
    cache = ClientMetadataCache()
    gen = cache.generation
    cache.invalidate("s-unknown")
    assert cache.generation == gen + 1
