"""Process-wide method registry: tasks are invoked by registered name."""
from __future__ import annotations

import importlib
from typing import Callable

from ..errors import UnknownMethod

_METHODS: dict[str, Callable] = {}


def register(fn: Callable | None = None, *, name: str | None = None):
    """Register a callable as a task method; usable as a bare decorator."""
    def apply(func: Callable) -> Callable:
        _METHODS[name or func.__name__] = func
        return func
    if fn is not None:
        return apply(fn)
    return apply


def resolve(name: str) -> Callable:
    """Look up a registered method; 'pkg.mod:func' names import on demand."""
    fn = _METHODS.get(name)
    if fn is not None:
        return fn
    if ":" in name:
        mod_name, _, attr = name.partition(":")
        try:
            mod = importlib.import_module(mod_name)
            fn = getattr(mod, attr)
        except (ImportError, AttributeError) as exc:
            raise UnknownMethod(f"{name}: {exc}") from exc
        _METHODS[name] = fn
        return fn
    raise UnknownMethod(name)


def known(name: str) -> bool:
    return name in _METHODS or ":" in name
