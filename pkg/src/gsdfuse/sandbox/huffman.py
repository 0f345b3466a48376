"""Huffman-coding (HC) generative steganography.

At every step the ``pool_size`` most probable next tokens are given canonical
Huffman codes; the token whose codeword prefixes the remaining secret bits is
emitted.
"""

from __future__ import annotations

import heapq
from typing import Sequence

import numpy as np

from ..exceptions import ConfigError, DecodeError
from .bits import BitStream, EncodeResult, as_bitstream
from .lm import TokenModel


def check_pool_size(pool_size: int, vocab_size: int | None = None):
    if pool_size < 2 or pool_size & (pool_size - 1):
        raise ConfigError(f"HC pool size must be a power of two >= 2, got {pool_size}")
    if vocab_size is not None and pool_size > vocab_size:
        raise ConfigError(f"HC pool size {pool_size} exceeds vocabulary size {vocab_size}")


def rank_tokens(probs: np.ndarray) -> np.ndarray:
    """Token ids by descending probability, ties by ascending id."""
    return np.lexsort((np.arange(len(probs)), -probs))


def huffman_lengths(probs: Sequence[float]) -> list[int]:
    """Code lengths of a binary Huffman code; merges break ties by insertion order."""
    n = len(probs)
    if n == 1:
        return [1]
    heap = [(float(p), i, (i,)) for i, p in enumerate(probs)]
    heapq.heapify(heap)
    lengths = [0] * n
    counter = n
    while len(heap) > 1:
        p1, _, a = heapq.heappop(heap)
        p2, _, b = heapq.heappop(heap)
        for s in a + b:
            lengths[s] += 1
        heapq.heappush(heap, (p1 + p2, counter, a + b))
        counter += 1
    return lengths


def canonical_codes(probs: Sequence[float]) -> list[str]:
    """Canonical prefix codes for symbols already sorted by rank.

    Shorter-or-equal lengths go to earlier (more probable) symbols, and codes
    are assigned in increasing numeric order, so the top symbol starts with 0.
    """
    lengths = sorted(huffman_lengths(probs))
    codes = []
    code = 0
    prev = lengths[0]
    for i, length in enumerate(lengths):
        if i:
            code = (code + 1) << (length - prev)
        prev = length
        codes.append(format(code, f"0{length}b"))
    return codes


class HuffmanTables:
    """Per-context code tables, cached because bigram contexts repeat."""

    def __init__(self, model: TokenModel, pool_size: int):
        check_pool_size(pool_size, model.vocab_size)
        self.model = model
        self.pool_size = pool_size
        self._cache: dict[tuple, tuple[dict, dict]] = {}

    def lookup(self, history: Sequence[int]) -> tuple[dict, dict]:
        """``(code -> token, token -> code)`` for the step after ``history``."""
        ctx = self.model.context(history)
        hit = self._cache.get(ctx)
        if hit is None:
            probs = self.model.next_distribution(history)
            pool = rank_tokens(probs)[: self.pool_size]
            codes = canonical_codes(probs[pool])
            by_code = {c: int(t) for c, t in zip(codes, pool)}
            by_token = {int(t): c for c, t in zip(codes, pool)}
            hit = self._cache[ctx] = (by_code, by_token)
        return hit


def hc_encode(model: TokenModel, bits, pool_size: int, max_len: int,
              tables: HuffmanTables | None = None) -> EncodeResult:
    """Embed ``bits`` until ``max_len`` tokens, end-of-sequence, or the stream ends."""
    stream = as_bitstream(bits)
    tables = tables or HuffmanTables(model, pool_size)
    tokens: list[int] = []
    pos = stream.cursor
    n_bits = n_pad = 0
    flags = set()
    total = len(stream)
    while len(tokens) < max_len and pos < total:
        by_code, _ = tables.lookup(tokens)
        word = ""
        while word not in by_code:
            if pos < total:
                word += str(int(stream.bits[pos]))
                pos += 1
                n_bits += 1
            else:
                word += "0"
                n_pad += 1
                flags.add("padded")
        tok = by_code[word]
        tokens.append(tok)
        if tok == model.eos_id:
            break
    return EncodeResult(tokens, n_bits, n_pad, flags)


def hc_decode(model: TokenModel, tokens: Sequence[int], pool_size: int,
              tables: HuffmanTables | None = None) -> BitStream:
    tables = tables or HuffmanTables(model, pool_size)
    out: list[str] = []
    for i, tok in enumerate(tokens):
        _, by_token = tables.lookup(list(tokens[:i]))
        code = by_token.get(int(tok))
        if code is None:
            raise DecodeError(f"token {tok} at position {i} is outside the HC candidate pool")
        out.append(code)
    return BitStream.from_string("".join(out))
