"""Range coder over 16-bit integer CDF tables.

Payload format
--------------
The coder follows the LZMA carry-propagating scheme with a 32-bit range,
so any implementation following these rules reproduces the bytes exactly.

* Symbol probabilities are integer frequencies with total ``T = 2**16``;
  a symbol ``s`` of table ``c`` occupies ``[c[s], c[s+1])``.
* Encoder state: ``low`` (33-bit), ``range`` (32-bit), ``cache`` (one
  byte), ``cache_size``. Start: ``low=0, range=0xFFFFFFFF, cache=0,
  cache_size=1``.
* Encode: ``r = range >> 16; low += r*c[s]; range = r*(c[s+1]-c[s])``;
  then while ``range < 2**24``: ``range <<= 8`` and shift-low.
* Shift-low: if ``low < 0xFF000000`` or ``low >= 2**32``, output
  ``cache + carry`` followed by ``cache_size - 1`` bytes of ``0xFF + carry``
  (mod 256, ``carry = low >> 32``), then ``cache = (low >> 24) & 0xFF``
  and ``cache_size = 0``. Always: ``cache_size += 1``,
  ``low = (low & 0xFFFFFF) << 8``.
* Flush: five shift-lows. The very first output byte is always ``0x00``
  and is not stored, so the payload is ``4 + (number of renormalisation
  shifts)`` bytes; an empty sequence gives exactly 4 bytes.
* Decoder: ``range=0xFFFFFFFF``, ``code`` = first 4 payload bytes, big
  endian. Per symbol: ``r = range >> 16; v = code // r``; ``s`` is the
  unique symbol with ``c[s] <= v < c[s+1]`` (``v >= T`` is a corrupt
  stream); ``code -= r*c[s]; range = r*(c[s+1]-c[s])``; while
  ``range < 2**24``: ``code = (code << 8 | next byte) mod 2**32``,
  ``range <<= 8``. A valid payload is consumed exactly.

Backend
-------
The compiled ``_rangecoder`` extension is used when it imports; otherwise
the pure-Python ``_pycoder`` is used. ``FAIRCODEC_PURE_PYTHON=1`` forces the
fallback. Both produce identical bytes.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pycoder
from .cdf import PRECISION, CdfError, CdfTable, build_cdf, pack_tables, quantize_pmf, tables_from_pmfs
from .errors import RangeCoderError

_compiled = None
if os.environ.get("FAIRCODEC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _rangecoder as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _pycoder


def get_backend(name=None):
    """Return the coder module for ``name`` ('cython', 'python' or None for default)."""
    if name is None:
        return _impl
    if name == "python":
        return _pycoder
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled range coder is not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def _prepare(tables, indexes, count):
    if isinstance(tables, tuple) and len(tables) == 2 and isinstance(tables[0], np.ndarray):
        cdfs, sizes = tables
    else:
        cdfs, sizes = pack_tables(tables)
    if indexes is None:
        if len(sizes) != 1:
            raise RangeCoderError("indexes are required when more than one table is given")
        indexes = np.zeros(count, dtype=np.int32)
    else:
        indexes = np.ascontiguousarray(indexes, dtype=np.int32).ravel()
        if indexes.size != count:
            raise RangeCoderError(f"{indexes.size} table indexes for {count} symbols")
        if count and (indexes.min() < 0 or indexes.max() >= len(sizes)):
            raise RangeCoderError("table index out of range")
    return np.ascontiguousarray(cdfs, dtype=np.uint32), np.ascontiguousarray(sizes, dtype=np.int32), indexes


class Encoder:
    """Incremental encoder: several ``encode`` calls share one payload."""

    def __init__(self, backend=None):
        self._enc = get_backend(backend).Encoder()

    def encode(self, symbols, tables, indexes=None):
        symbols = np.ascontiguousarray(symbols, dtype=np.int64).ravel()
        cdfs, sizes, indexes = _prepare(tables, indexes, symbols.size)
        if symbols.size:
            bad = (symbols < 0) | (symbols >= sizes[indexes])
            if bad.any():
                i = int(np.argmax(bad))
                raise RangeCoderError(
                    f"symbol {symbols[i]} at position {i} outside alphabet of size {sizes[indexes[i]]}")
        self._enc.encode(symbols.astype(np.int32), indexes, cdfs, sizes)

    def finish(self):
        return self._enc.finish()


class Decoder:
    def __init__(self, data, backend=None):
        self._dec = get_backend(backend).Decoder(data)

    def decode(self, tables, count, indexes=None):
        cdfs, sizes, indexes = _prepare(tables, indexes, count)
        return self._dec.decode(indexes, cdfs, sizes)

    def finish(self):
        self._dec.finish()


def encode_symbols(symbols, tables, indexes=None, backend=None):
    """Range-code ``symbols``; ``indexes[i]`` picks the table for symbol ``i``.

    ``tables`` is a :class:`CdfTable`, a list of them, or a pre-packed
    ``(cdf_matrix, sizes)`` pair.
    """
    enc = Encoder(backend)
    enc.encode(symbols, tables, indexes)
    return enc.finish()


def decode_symbols(data, tables, count, indexes=None, backend=None):
    """Inverse of :func:`encode_symbols`. The payload must be consumed exactly."""
    dec = Decoder(data, backend)
    out = dec.decode(tables, count, indexes)
    dec.finish()
    return out


__all__ = [
    "BACKEND", "PRECISION", "CdfError", "CdfTable", "Decoder", "Encoder", "RangeCoderError",
    "build_cdf", "decode_symbols", "encode_symbols", "get_backend", "pack_tables",
    "quantize_pmf", "tables_from_pmfs",
]
