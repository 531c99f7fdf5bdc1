"""Task methods importable by worker subprocesses in the remote tests."""
import hashlib
import time


def double(x, out):
    return x * 2


def checksum_blob(blob, out):
    return hashlib.sha256(blob).hexdigest()


def slow_echo(x, out):
    time.sleep(0.05)
    return x


def publish_then_close(stream, n):
    stream.publish([f"m{i}".encode() for i in range(n)])
    stream.close()
    return None


def drain_stream(stream, out):
    got = stream.drain(timeout_ms=15_000)
    return sorted(e.payload.decode() for e in got)
