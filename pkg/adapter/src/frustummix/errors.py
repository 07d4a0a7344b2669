"""Adapter-side exception hierarchy mirroring every fmx error name.

Each mirrored class subclasses :class:`FrustumMixError` and records the
primary error's class name in ``primary_error``.  ``mirrored`` raises the
adapter twin of any fmx error, chained to the original.
"""

from __future__ import annotations

import contextlib

import fmx.errors as _primary

__all__ = ["FrustumMixError", "AdapterTypeError", "mirrored", "MIRRORS"]


class FrustumMixError(Exception):
    """Base for all adapter errors."""

    primary_error = "FmxError"


class AdapterTypeError(FrustumMixError):
    """An input array has the wrong dtype, shape, or layout."""

    primary_error = "AdapterTypeError"


def _make_mirror(name: str) -> type:
    cls = type(name, (FrustumMixError,), {"primary_error": name})
    cls.__doc__ = f"Adapter twin of fmx.errors.{name}."
    cls.__module__ = __name__
    return cls


# one adapter class per primary error name (FmxError maps to the base)
MIRRORS = {"FmxError": FrustumMixError}
for _name in _primary.__all__:
    if _name != "FmxError":
        MIRRORS[_name] = _make_mirror(_name)
        globals()[_name] = MIRRORS[_name]
        __all__.append(_name)


@contextlib.contextmanager
def mirrored():
    """Re-raise any fmx error as its adapter twin (original chained)."""
    try:
        yield
    except _primary.FmxError as exc:
        raise MIRRORS[type(exc).__name__](str(exc)) from exc
