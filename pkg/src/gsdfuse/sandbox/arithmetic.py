"""Arithmetic-coding (AC) generative steganography with integer intervals.

The secret bits are read as a binary fraction. Each step splits the current
interval ``[low, high)`` by the cumulative next-token probabilities (tokens in
id order), picks the sub-interval containing the fraction, then shifts out the
leading bits shared by both interval ends; those bits count as embedded.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..exceptions import DecodeError
from .bits import BitStream, EncodeResult, as_bitstream, bits_to_int
from .lm import TokenModel

PRECISION = 64
FREQ_BITS = 32


class _Quantizer:
    """Integer cumulative frequencies summing to ``2**FREQ_BITS`` per context."""

    def __init__(self, model: TokenModel):
        self.model = model
        self._cache: dict[tuple, tuple[list[int], int]] = {}

    def lookup(self, history) -> tuple[list[int], int]:
        ctx = self.model.context(history)
        hit = self._cache.get(ctx)
        if hit is None:
            p = self.model.next_distribution(history)
            total = 1 << FREQ_BITS
            freq = np.floor(p * total).astype(np.int64)
            best = int(np.argmax(p))
            freq[best] += total - int(freq.sum())
            cum = [0] + np.cumsum(freq).tolist()
            hit = self._cache[ctx] = (cum, best)
        return hit


def _boundary(cum: list[int], i: int, width: int) -> int:
    return (cum[i] * width) >> FREQ_BITS


def _find(cum: list[int], width: int, offset: int) -> int:
    lo, hi = 0, len(cum) - 1  # invariant: boundary(lo) <= offset < boundary(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _boundary(cum, mid, width) <= offset:
            lo = mid
        else:
            hi = mid
    return lo


def _shared_prefix(low: int, high: int, precision: int) -> int:
    """Number of leading bits shared by ``low`` and ``high - 1``."""
    diff = low ^ (high - 1)
    return precision - diff.bit_length()


class _Interval:
    def __init__(self, precision: int):
        self.precision = precision
        self.full = 1 << precision
        self.low, self.high = 0, self.full

    @property
    def width(self) -> int:
        return self.high - self.low

    def narrow(self, cum, tok):
        w = self.width
        self.low, self.high = (self.low + _boundary(cum, tok, w),
                               self.low + _boundary(cum, tok + 1, w))

    def renormalize(self) -> list[int]:
        """Shift out shared leading bits and return them."""
        n = _shared_prefix(self.low, self.high, self.precision)
        if n == 0:
            return []
        out = [(self.low >> (self.precision - 1 - i)) & 1 for i in range(n)]
        mask = self.full - 1
        top = ((((self.high - 1) << n) & mask) | ((1 << n) - 1)) + 1
        self.low = (self.low << n) & mask
        self.high = top
        return out

    def underflow(self, vocab_size: int) -> bool:
        return self.width < vocab_size

    def reset(self):
        self.low, self.high = 0, self.full


def ac_encode(model: TokenModel, bits, max_len: int,
              precision: int = PRECISION) -> EncodeResult:
    stream = as_bitstream(bits)
    quant = _Quantizer(model)
    iv = _Interval(precision)
    tokens: list[int] = []
    start = pos = stream.cursor
    flags = set()
    total = len(stream)
    while len(tokens) < max_len and pos < total:
        cum, best = quant.lookup(tokens)
        if iv.underflow(model.vocab_size):
            flags.add("underflow")
            tok = best
            iv.reset()
        else:
            chunk, _ = stream.peek(pos, precision)
            value = bits_to_int(chunk)
            tok = _find(cum, iv.width, value - iv.low)
            iv.narrow(cum, tok)
            pos += len(iv.renormalize())
        tokens.append(tok)
        if tok == model.eos_id:
            break
    consumed = pos - start
    n_bits = min(consumed, total - start)
    if consumed > n_bits:
        flags.add("padded")
    return EncodeResult(tokens, n_bits, consumed - n_bits, flags)


def ac_decode(model: TokenModel, tokens: Sequence[int],
              precision: int = PRECISION) -> BitStream:
    quant = _Quantizer(model)
    iv = _Interval(precision)
    out: list[int] = []
    for i, tok in enumerate(tokens):
        tok = int(tok)
        cum, best = quant.lookup(list(tokens[:i]))
        if iv.underflow(model.vocab_size):
            if tok != best:
                raise DecodeError(f"token {tok} at position {i} contradicts the underflow rule")
            iv.reset()
            continue
        if not 0 <= tok < model.vocab_size or cum[tok + 1] == cum[tok]:
            raise DecodeError(f"token {tok} at position {i} has no probability mass")
        iv.narrow(cum, tok)
        if iv.width <= 0:
            raise DecodeError(f"token {tok} at position {i} has an empty interval")
        out.extend(iv.renormalize())
    return BitStream(np.array(out, dtype=np.uint8))
