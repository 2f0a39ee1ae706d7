"""Pure-Python range coder; bit-identical to the compiled ``_rangecoder``."""
from __future__ import annotations

from bisect import bisect_right

import numpy as np

from .errors import RangeCoderError

PREC = 16
TOP = 1 << 24
MASK32 = 0xFFFFFFFF


class Encoder:
    def __init__(self):
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()
        self._skip = True

    def _emit(self, b):
        if self._skip:
            # leading byte of the LZMA-style scheme is always zero
            self._skip = False
            return
        self.out.append(b)

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            temp = self.cache
            while True:
                self._emit((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (low & 0x00FFFFFF) << 8

    def encode(self, symbols, indexes, cdfs, sizes):
        cdf_rows = cdfs.tolist()
        for s, t in zip(np.asarray(symbols).tolist(), np.asarray(indexes).tolist()):
            row = cdf_rows[t]
            start = row[s]
            r = self.range >> PREC
            self.low += r * start
            self.range = r * (row[s + 1] - start)
            while self.range < TOP:
                self.range <<= 8
                self._shift_low()

    def finish(self):
        for _ in range(5):
            self._shift_low()
        return bytes(self.out)


class Decoder:
    def __init__(self, data):
        self.data = bytes(data)
        self.pos = 0
        self.range = MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next()

    def _next(self):
        if self.pos >= len(self.data):
            raise RangeCoderError("truncated payload")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode(self, indexes, cdfs, sizes):
        cdf_rows = cdfs.tolist()
        size_list = sizes.tolist()
        idx = np.asarray(indexes).tolist()
        out = np.empty(len(idx), dtype=np.int32)
        code, rng = self.code, self.range
        for i, t in enumerate(idx):
            row = cdf_rows[t]
            n = size_list[t]
            r = rng >> PREC
            v = code // r
            if v >= row[n]:
                raise RangeCoderError("corrupt payload: code outside table range")
            s = bisect_right(row, v, 0, n + 1) - 1
            start = row[s]
            code -= r * start
            rng = r * (row[s + 1] - start)
            while rng < TOP:
                code = ((code << 8) | self._next()) & MASK32
                rng <<= 8
            out[i] = s
        self.code, self.range = code, rng
        return out

    def finish(self):
        if self.pos != len(self.data):
            raise RangeCoderError(f"{len(self.data) - self.pos} unread payload bytes")
