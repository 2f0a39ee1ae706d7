"""Compressed-image container.

Layout (little-endian)::

    b"FCBS"          magic
    u8               version (1)
    8 bytes          model hash
    u8 u8 u8         rate point: kind (0 lambda-index, 1 progressive-subset), value, groups
    u16 u16 u16      image H, W, C
    u32              payload bit length
    ...              range-coder payload, ceil(bits / 8) bytes
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from .config import RATE_KINDS, ConfigError, RatePoint

MAGIC = b"FCBS"
VERSION = 1
_HEADER = struct.Struct("<4sB8sBBBHHHI")
HEADER_SIZE = _HEADER.size
_KIND_NAMES = {v: k for k, v in RATE_KINDS.items()}


class BitstreamError(ValueError):
    pass


@dataclass(frozen=True)
class Bitstream:
    model_hash: bytes
    rate_point: RatePoint
    shape: tuple
    payload: bytes
    payload_bits: int

    def __post_init__(self):
        if self.payload_bits > 8 * len(self.payload):
            raise BitstreamError("payload bit length exceeds payload bytes")

    @property
    def bits(self):
        return self.payload_bits

    def bpp(self):
        return self.payload_bits / (self.shape[0] * self.shape[1])

    def to_bytes(self):
        rp = self.rate_point
        head = _HEADER.pack(MAGIC, VERSION, self.model_hash, RATE_KINDS[rp.kind], rp.value, rp.groups,
                            *self.shape, self.payload_bits)
        return head + self.payload

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < HEADER_SIZE:
            raise BitstreamError("truncated header")
        magic, version, mhash, kind, value, groups, h, w, c, nbits = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BitstreamError("bad magic")
        if version != VERSION:
            raise BitstreamError(f"unsupported version {version}")
        if kind not in _KIND_NAMES:
            raise BitstreamError(f"unknown rate point kind {kind}")
        try:
            rp = RatePoint(_KIND_NAMES[kind], value, groups)
        except ConfigError as exc:
            raise BitstreamError(f"invalid rate point: {exc}") from None
        payload = data[HEADER_SIZE:]
        if len(payload) != (nbits + 7) // 8:
            raise BitstreamError(f"payload has {len(payload)} bytes, header declares {nbits} bits")
        return cls(mhash, rp, (h, w, c), payload, nbits)
