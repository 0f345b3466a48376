"""Secret bit streams and the result record shared by the stego codecs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


@dataclass
class BitStream:
    """A sequence of secret bits with a read cursor."""

    bits: np.ndarray
    cursor: int = 0

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        if self.bits.size and self.bits.max() > 1:
            raise ValueError("bits must be 0 or 1")
        if not 0 <= self.cursor <= len(self.bits):
            raise ValueError("cursor outside the stream")

    @classmethod
    def from_string(cls, text: str) -> "BitStream":
        return cls(np.array([int(c) for c in text if c in "01"], dtype=np.uint8))

    @classmethod
    def random(cls, n_bits: int, seed=None) -> "BitStream":
        rng = np.random.default_rng(seed)
        return cls(rng.integers(0, 2, size=n_bits, dtype=np.uint8))

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join(map(str, self.bits.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitStream):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    @property
    def remaining(self) -> int:
        return len(self.bits) - self.cursor

    def peek(self, pos: int, n: int) -> tuple[list[int], int]:
        """Bits ``[pos, pos + n)``, zero padded; returns ``(bits, n_padded)``."""
        chunk = self.bits[pos:pos + n].tolist()
        pad = n - len(chunk)
        return chunk + [0] * pad, pad

    def read(self, n: int) -> tuple[list[int], int]:
        chunk, pad = self.peek(self.cursor, n)
        self.cursor = min(len(self.bits), self.cursor + n)
        return chunk, pad

    def prefix(self, n: int) -> "BitStream":
        return BitStream(self.bits[:n].copy())


def as_bitstream(bits) -> BitStream:
    if isinstance(bits, BitStream):
        return bits
    if isinstance(bits, str):
        return BitStream.from_string(bits)
    return BitStream(np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits))


def bits_to_int(bits: Iterable[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def int_to_bits(value: int, width: int) -> list[int]:
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


@dataclass
class EncodeResult:
    """Output of a stego encoder.

    ``n_bits`` counts message bits actually embedded; ``n_padded`` counts the
    zero bits appended when the stream ran out mid-codeword. Decoding the
    tokens yields ``n_bits + n_padded`` bits whose first ``n_bits`` equal the
    message prefix.
    """

    tokens: list[int]
    n_bits: int
    n_padded: int = 0
    flags: set = field(default_factory=set)

    def __iter__(self):
        # unpacks as (tokens, bits consumed)
        yield self.tokens
        yield self.n_bits

    @property
    def padded(self) -> bool:
        return self.n_padded > 0
