"""Adaptive dynamic grouping (ADG) steganography.

Each step partitions the next-token distribution into ``2**r`` groups of
near-equal mass, reads ``r`` secret bits to choose a group, and samples the
token inside that group proportionally to its renormalized probability.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..exceptions import DecodeError
from .bits import BitStream, EncodeResult, as_bitstream, bits_to_int, int_to_bits
from .huffman import rank_tokens
from .lm import TokenModel


@dataclass(frozen=True)
class Partition:
    r: int
    groups: tuple[tuple[int, ...], ...]
    masses: tuple[float, ...]

    def group_of(self, token: int) -> int:
        for g, members in enumerate(self.groups):
            if token in members:
                return g
        raise KeyError(token)


def group_bits(probs: np.ndarray) -> int:
    """Bits embeddable at this step.

    ``r = floor(log2(#candidates))`` capped by ``floor(-log2(p_max))`` so that
    no single token outweighs a fair group share; ``p_max > 1/2`` gives 0.
    """
    support = int(np.count_nonzero(probs > 0))
    if support < 2:
        return 0
    p_max = float(probs.max())
    r_count = int(math.floor(math.log2(support)))
    r_mass = int(math.floor(-math.log2(p_max)))
    return max(0, min(r_count, r_mass))


def partition(probs: np.ndarray, r: int | None = None) -> Partition:
    """Greedy lightest-group assignment in rank order (ties by token id)."""
    probs = np.asarray(probs, dtype=np.float64)
    if r is None:
        r = group_bits(probs)
    n_groups = 1 << r
    order = [int(t) for t in rank_tokens(probs) if probs[t] > 0]
    groups: list[list[int]] = [[] for _ in range(n_groups)]
    masses = [0.0] * n_groups
    heap = [(0.0, g) for g in range(n_groups)]
    for tok in order:
        _, g = heapq.heappop(heap)
        groups[g].append(tok)
        masses[g] += float(probs[tok])
        heapq.heappush(heap, (masses[g], g))
    return Partition(r, tuple(tuple(g) for g in groups), tuple(masses))


class _Partitions:
    def __init__(self, model: TokenModel):
        self.model = model
        self._cache: dict[tuple, Partition] = {}

    def lookup(self, history) -> Partition:
        ctx = self.model.context(history)
        hit = self._cache.get(ctx)
        if hit is None:
            hit = self._cache[ctx] = partition(self.model.next_distribution(history))
        return hit


def adg_encode(model: TokenModel, bits, max_len: int, seed=None) -> EncodeResult:
    stream = as_bitstream(bits)
    rng = np.random.default_rng(seed)
    parts = _Partitions(model)
    tokens: list[int] = []
    pos = stream.cursor
    total = len(stream)
    n_bits = n_pad = 0
    flags = set()
    while len(tokens) < max_len and pos < total:
        part = parts.lookup(tokens)
        chunk, pad = stream.peek(pos, part.r)
        pos += part.r
        n_bits += part.r - pad
        n_pad += pad
        if pad:
            flags.add("padded")
        members = part.groups[bits_to_int(chunk)]
        p = model.next_distribution(tokens)[list(members)]
        cdf = np.cumsum(p)
        k = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")),
                len(members) - 1)
        tok = members[k]
        tokens.append(tok)
        if tok == model.eos_id:
            break
    return EncodeResult(tokens, n_bits, n_pad, flags)


def adg_decode(model: TokenModel, tokens: Sequence[int]) -> BitStream:
    parts = _Partitions(model)
    out: list[int] = []
    for i, tok in enumerate(tokens):
        part = parts.lookup(list(tokens[:i]))
        try:
            g = part.group_of(int(tok))
        except KeyError:
            raise DecodeError(f"token {tok} at position {i} has no probability mass") from None
        out.extend(int_to_bits(g, part.r))
    return BitStream(np.array(out, dtype=np.uint8))
