"""Synthetic cover/stego dialogue forests."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from ..exceptions import ConfigError, SynthesisError
from ..graph import LABEL_STEGO, DialogueForest, MessageNode
from .adg import adg_decode, adg_encode
from .arithmetic import ac_decode, ac_encode
from .bits import BitStream, EncodeResult
from .huffman import HuffmanTables, check_pool_size, hc_decode, hc_encode
from .lm import TokenModel, sample_cover

CODECS = ("hc", "ac", "adg")


@dataclass(frozen=True)
class SandboxSpec:
    codec: str = "hc"
    hc_tree_size: int = 4
    srs: float = 0.1
    n_trees: int = 100
    mean_tree_size: int = 8
    max_len: int = 32
    seed: int = 0
    max_tree_size: int | None = None

    def __post_init__(self):
        codec = self.codec.lower()
        object.__setattr__(self, "codec", codec)
        if codec not in CODECS:
            raise ConfigError(f"unknown codec {self.codec!r}; expected one of {CODECS}")
        if not 0.0 <= self.srs <= 1.0:
            raise ConfigError("srs must lie in [0, 1]")
        check_pool_size(self.hc_tree_size)
        if self.n_trees < 1 or self.mean_tree_size < 1 or self.max_len < 1:
            raise ConfigError("n_trees, mean_tree_size and max_len must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def encode(codec: str, model: TokenModel, bits, spec: SandboxSpec, rng=None,
           tables: HuffmanTables | None = None) -> EncodeResult:
    if codec == "hc":
        return hc_encode(model, bits, spec.hc_tree_size, spec.max_len, tables=tables)
    if codec == "ac":
        return ac_encode(model, bits, spec.max_len)
    if codec == "adg":
        return adg_encode(model, bits, spec.max_len, seed=rng)
    raise ConfigError(f"unknown codec {codec!r}")


def decode(codec: str, model: TokenModel, tokens, spec: SandboxSpec) -> BitStream:
    if codec == "hc":
        return hc_decode(model, tokens, spec.hc_tree_size)
    if codec == "ac":
        return ac_decode(model, tokens)
    if codec == "adg":
        return adg_decode(model, tokens)
    raise ConfigError(f"unknown codec {codec!r}")


def grow_trees(spec: SandboxSpec, model: TokenModel) -> DialogueForest:
    """Galton-Watson reply trees populated with cover samples.

    Child counts are geometric on {0, 1, ...} with mean ``1 - 1/mean_tree_size``,
    which gives an expected tree size of ``mean_tree_size``.
    """
    m = 1.0 - 1.0 / spec.mean_tree_size
    p = 1.0 / (1.0 + m)
    cap = spec.max_tree_size or 25 * spec.mean_tree_size
    nodes = []
    next_id = 0
    for tree_id in range(spec.n_trees):
        rng = np.random.default_rng(spec.seed ^ tree_id)
        frontier = [None]
        size = 0
        while frontier and size < cap:
            parent = frontier.pop(0)
            node_id = next_id
            next_id += 1
            size += 1
            nodes.append(MessageNode(node_id, tree_id, parent,
                                     tuple(sample_cover(model, spec.max_len, rng))))
            n_children = int(rng.geometric(p)) - 1 if m > 0 else 0
            frontier.extend([node_id] * n_children)
    return DialogueForest(nodes, vocab_size=model.vocab_size)


def substitute(forest: DialogueForest, model: TokenModel, spec: SandboxSpec
               ) -> DialogueForest:
    """Replace ``round(srs * #leaves)`` random leaves with stego messages.

    Edges are untouched. The realized payload is stored in
    ``forest.metadata["bpw_realized"]`` (embedded bits per stego token).
    """
    leaves = forest.node_ids[forest.is_leaf]
    if len(leaves) == 0:
        raise SynthesisError("the forest has no eligible (leaf) nodes")
    k = int(round(spec.srs * len(leaves)))
    rng = np.random.default_rng([spec.seed, 0x5E60])
    chosen = set(rng.choice(leaves, size=k, replace=False).tolist()) if k else set()
    tables = HuffmanTables(model, spec.hc_tree_size) if spec.codec == "hc" else None
    bit_budget = 64 * spec.max_len
    n_bits = n_tokens = 0
    nodes = []
    for node in forest.nodes:
        if node.node_id not in chosen:
            nodes.append(node)
            continue
        node_rng = np.random.default_rng([spec.seed, node.node_id])
        bits = BitStream.random(bit_budget, node_rng)
        res = encode(spec.codec, model, bits, spec, rng=node_rng, tables=tables)
        n_bits += res.n_bits
        n_tokens += len(res.tokens)
        nodes.append(replace(node, token_ids=tuple(res.tokens), label=LABEL_STEGO))
    meta = dict(forest.metadata)
    meta.update(
        codec=spec.codec,
        srs=spec.srs,
        bpw_realized=(n_bits / n_tokens) if n_tokens else 0.0,
        seed=spec.seed,
        vocab_size=forest.vocab_size,
        n_eligible=int(len(leaves)),
        n_stego=k,
        generator=spec.to_dict(),
    )
    return forest.replace_nodes(nodes, metadata=meta)


def synthesize_sandbox(spec: SandboxSpec, model: TokenModel) -> DialogueForest:
    if spec.codec == "hc":
        check_pool_size(spec.hc_tree_size, model.vocab_size)
    return substitute(grow_trees(spec, model), model, spec)
