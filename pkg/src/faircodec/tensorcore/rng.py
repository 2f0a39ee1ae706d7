"""Counter-based random streams.

Philox is a counter-based generator whose output depends only on
(key, counter), so draws are identical on every platform numpy supports.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


def _stream_id(label):
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0
    counter: int = 0

    def generator(self):
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        bitgen = np.random.Philox(key=key, counter=np.array([self.counter, 0, 0, 0], dtype=np.uint64))
        return np.random.Generator(bitgen)

    def child(self, label):
        """Independent sub-stream named by ``label``."""
        return RngStream(self.seed, _stream_id(f"{self.stream}/{label}"), 0)

    def advance(self, n=1):
        return RngStream(self.seed, self.stream, self.counter + n)
