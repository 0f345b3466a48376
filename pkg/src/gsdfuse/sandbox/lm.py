"""Toy n-gram language model used for cover sampling and stego coding."""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from ..exceptions import ConfigError

_TOL = 1e-9


class TokenModel:
    """Conditional next-token distributions keyed by context tuples.

    A context is the tuple of up to ``order - 1`` previous token ids. Missing
    contexts back off to shorter suffixes and finally to the unigram entry
    ``()``, which must always exist.

    Parameters
    ----------
    vocab_size : int
    probabilities : mapping of tuple -> array of shape (vocab_size,)
    order : int, default=2
    eos_id : int or None
        Generation stops after emitting this token. ``None`` disables stopping.
    """

    def __init__(self, vocab_size: int, probabilities: Mapping[tuple, Sequence[float]],
                 order: int = 2, eos_id: int | None = None):
        if vocab_size < 1:
            raise ConfigError("vocab_size must be positive")
        if order < 1:
            raise ConfigError("order must be >= 1")
        if eos_id is not None and not 0 <= eos_id < vocab_size:
            raise ConfigError("eos_id must be a token of the vocabulary")
        table = {}
        for ctx, p in probabilities.items():
            ctx = tuple(int(t) for t in ctx)
            if len(ctx) > order - 1:
                raise ConfigError(f"context {ctx} is longer than order - 1")
            p = np.asarray(p, dtype=np.float64)
            if p.shape != (vocab_size,):
                raise ConfigError(f"distribution for {ctx} has shape {p.shape}")
            if np.any(p < 0) or abs(p.sum() - 1.0) > _TOL:
                raise ConfigError(f"distribution for {ctx} is not normalized")
            p.setflags(write=False)
            table[ctx] = p
        if () not in table:
            raise ConfigError("the unigram context () is required for backoff")
        self.vocab_size = int(vocab_size)
        self.order = int(order)
        self.eos_id = eos_id
        self.probabilities = table
        self._cdf: dict[tuple, np.ndarray] = {}

    def __repr__(self):
        return (f"TokenModel(vocab_size={self.vocab_size}, order={self.order}, "
                f"eos_id={self.eos_id}, contexts={len(self.probabilities)})")

    def context(self, history: Sequence[int]) -> tuple:
        k = self.order - 1
        return tuple(history[-k:]) if k > 0 else ()

    def next_distribution(self, history: Sequence[int]) -> np.ndarray:
        ctx = self.context(history)
        while ctx not in self.probabilities:
            ctx = ctx[1:]
        return self.probabilities[ctx]

    def next_cdf(self, history: Sequence[int]) -> np.ndarray:
        ctx = self.context(history)
        while ctx not in self.probabilities:
            ctx = ctx[1:]
        cdf = self._cdf.get(ctx)
        if cdf is None:
            cdf = self._cdf[ctx] = np.cumsum(self.probabilities[ctx])
        return cdf

    # -- constructors --------------------------------------------------------
    @classmethod
    def uniform(cls, vocab_size: int, eos_id: int | None = None) -> "TokenModel":
        return cls(vocab_size, {(): np.full(vocab_size, 1.0 / vocab_size)}, order=1,
                   eos_id=eos_id)

    @classmethod
    def dirichlet(cls, vocab_size: int, seed: int = 0, concentration: float = 0.1,
                  eos_prob: float | None = None) -> "TokenModel":
        """Random bigram model with one Dirichlet row per previous token.

        When ``eos_prob`` is given the last id is reserved as end-of-sequence and
        receives that mass in every bigram row (the start row never ends).
        """
        rng = np.random.default_rng(seed)
        n = vocab_size - (eos_prob is not None)
        rows = {}

        def draw(end_mass):
            p = rng.dirichlet(np.full(n, concentration))
            # guard against exact zeros from float underflow at small concentration
            p = np.maximum(p, 1e-12)
            p = p / p.sum() * (1.0 - end_mass)
            if eos_prob is not None:
                p = np.append(p, end_mass)
            return p / p.sum()

        rows[()] = draw(0.0)
        for t in range(vocab_size):
            rows[(t,)] = draw(eos_prob or 0.0)
        eos = vocab_size - 1 if eos_prob is not None else None
        return cls(vocab_size, rows, order=2, eos_id=eos)

    @classmethod
    def fit(cls, corpus: Iterable[Sequence[int]], vocab_size: int, order: int = 2,
            eos_id: int | None = None) -> "TokenModel":
        """Add-one smoothed n-gram estimate from token sequences."""
        counts: dict[tuple, np.ndarray] = {}
        for seq in corpus:
            for i, tok in enumerate(seq):
                for k in range(order):
                    if k > i:
                        break
                    ctx = tuple(seq[i - k:i]) if k else ()
                    row = counts.setdefault(ctx, np.zeros(vocab_size))
                    row[tok] += 1
        counts.setdefault((), np.zeros(vocab_size))
        probs = {ctx: (c + 1.0) / (c.sum() + vocab_size) for ctx, c in counts.items()}
        return cls(vocab_size, probs, order=order, eos_id=eos_id)


def sample_cover(model: TokenModel, max_len: int, seed=None) -> list[int]:
    """Ancestral sample, stopping after ``eos_id`` or ``max_len`` tokens.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if max_len < 1:
        raise ConfigError("max_len must be >= 1")
    rng = np.random.default_rng(seed)
    out: list[int] = []
    while len(out) < max_len:
        cdf = model.next_cdf(out)
        tok = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        tok = min(tok, model.vocab_size - 1)
        out.append(tok)
        if tok == model.eos_id:
            break
    return out
