# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled range coder; bit-identical to ``_pycoder``."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint32_t, uint64_t, int32_t

from faircodec.entropycoder.errors import RangeCoderError

cnp.import_array()

cdef enum:
    PREC = 16
    TOP = 16777216  # 1 << 24


cdef class Encoder:
    cdef uint64_t low
    cdef uint32_t rng
    cdef uint32_t cache
    cdef uint64_t cache_size
    cdef bint skip
    cdef bytearray out

    def __cinit__(self):
        self.low = 0
        self.rng = 0xFFFFFFFF
        self.cache = 0
        self.cache_size = 1
        self.skip = True
        self.out = bytearray()

    cdef inline void _emit(self, uint32_t b):
        if self.skip:
            self.skip = False
            return
        self.out.append(b & 0xFF)

    cdef inline void _shift_low(self):
        cdef uint32_t carry, temp
        if self.low < 0xFF000000 or self.low > 0xFFFFFFFF:
            carry = <uint32_t>(self.low >> 32)
            temp = self.cache
            while True:
                self._emit((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = <uint32_t>((self.low >> 24) & 0xFF)
        self.cache_size += 1
        self.low = (self.low & 0x00FFFFFF) << 8

    def encode(self, symbols, indexes, cdfs, sizes):
        cdef const int32_t[:] sym = np.ascontiguousarray(symbols, dtype=np.int32)
        cdef const int32_t[:] idx = np.ascontiguousarray(indexes, dtype=np.int32)
        cdef const uint32_t[:, :] cdf = np.ascontiguousarray(cdfs, dtype=np.uint32)
        cdef Py_ssize_t i, n = sym.shape[0]
        cdef uint32_t r, start, s
        cdef int32_t t
        for i in range(n):
            t = idx[i]
            s = sym[i]
            start = cdf[t, s]
            r = self.rng >> PREC
            self.low += <uint64_t>r * start
            self.rng = r * (cdf[t, s + 1] - start)
            while self.rng < TOP:
                self.rng <<= 8
                self._shift_low()

    def finish(self):
        cdef int k
        for k in range(5):
            self._shift_low()
        return bytes(self.out)


cdef class Decoder:
    cdef bytes data
    cdef const uint8_t* buf
    cdef Py_ssize_t n
    cdef public Py_ssize_t pos
    cdef uint32_t rng
    cdef uint32_t code

    def __cinit__(self, data):
        cdef int k
        self.data = bytes(data)
        self.buf = <const uint8_t*> self.data
        self.n = len(self.data)
        self.pos = 0
        self.rng = 0xFFFFFFFF
        self.code = 0
        if self.n < 4:
            raise RangeCoderError("truncated payload")
        for k in range(4):
            self.code = (self.code << 8) | self.buf[self.pos]
            self.pos += 1

    def decode(self, indexes, cdfs, sizes):
        cdef const int32_t[:] idx = np.ascontiguousarray(indexes, dtype=np.int32)
        cdef const uint32_t[:, :] cdf = np.ascontiguousarray(cdfs, dtype=np.uint32)
        cdef const int32_t[:] sz = np.ascontiguousarray(sizes, dtype=np.int32)
        cdef Py_ssize_t i, m = idx.shape[0]
        out = np.empty(m, dtype=np.int32)
        cdef int32_t[:] o = out
        cdef uint32_t r, v, start, code = self.code, rng = self.rng
        cdef int32_t t, lo, hi, mid, na
        for i in range(m):
            t = idx[i]
            na = sz[t]
            r = rng >> PREC
            v = code // r
            if v >= cdf[t, na]:
                self.code, self.rng = code, rng
                raise RangeCoderError("corrupt payload: code outside table range")
            lo = 0
            hi = na
            while hi - lo > 1:
                mid = (lo + hi) >> 1
                if cdf[t, mid] <= v:
                    lo = mid
                else:
                    hi = mid
            start = cdf[t, lo]
            code -= r * start
            rng = r * (cdf[t, lo + 1] - start)
            while rng < TOP:
                if self.pos >= self.n:
                    self.code, self.rng = code, rng
                    raise RangeCoderError("truncated payload")
                code = (code << 8) | self.buf[self.pos]
                self.pos += 1
                rng <<= 8
            o[i] = lo
        self.code, self.rng = code, rng
        return out

    def finish(self):
        if self.pos != self.n:
            raise RangeCoderError(f"{self.n - self.pos} unread payload bytes")
