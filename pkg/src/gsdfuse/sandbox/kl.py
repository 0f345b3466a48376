"""Empirical KL divergence between cover and stego corpora."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .lm import TokenModel


def context_counts(corpus: Iterable[Sequence[int]], vocab_size: int, order: int = 2
                   ) -> dict[tuple, np.ndarray]:
    """Next-token counts per context; sequence starts use the empty context."""
    k = order - 1
    counts: dict[tuple, np.ndarray] = {}
    for seq in corpus:
        for i, tok in enumerate(seq):
            ctx = tuple(seq[max(0, i - k):i]) if k > 0 else ()
            row = counts.get(ctx)
            if row is None:
                row = counts[ctx] = np.zeros(vocab_size)
            row[tok] += 1
    return counts


def kl_diagnostic(cover_tokens: Iterable[Sequence[int]], stego_tokens: Iterable[Sequence[int]],
                  model: TokenModel) -> float:
    """Mean over observed contexts of ``KL(P_cover || P_stego)`` in nats.

    Both conditionals are add-one smoothed, so contexts seen in only one
    corpus compare against a uniform estimate.
    """
    v = model.vocab_size
    c = context_counts(cover_tokens, v, model.order)
    s = context_counts(stego_tokens, v, model.order)
    if not c or not s:
        raise ValueError("both corpora must be non-empty")
    zero = np.zeros(v)
    total = 0.0
    contexts = sorted(set(c) | set(s))
    for ctx in contexts:
        cc = c.get(ctx, zero)
        sc = s.get(ctx, zero)
        p = (cc + 1.0) / (cc.sum() + v)
        q = (sc + 1.0) / (sc.sum() + v)
        total += float(np.sum(p * np.log(p / q)))
    return max(0.0, total / len(contexts))
