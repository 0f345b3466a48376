"""Dialogue forests: message nodes, reply edges, splits and the JSONL format."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ConfigError, ForestParseError, IntegrityError

SPLITS = ("train", "val", "test")
LABEL_COVER = 0
LABEL_STEGO = 1
DEFAULT_RATIOS = (0.75, 0.125, 0.125)

_FIELDS = ("node_id", "tree_id", "parent_id", "token_ids", "label", "split")


@dataclass(frozen=True)
class MessageNode:
    node_id: int
    tree_id: int
    parent_id: int | None
    token_ids: tuple[int, ...]
    label: int = LABEL_COVER
    split: str | None = None

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "tree_id": self.tree_id,
            "parent_id": self.parent_id,
            "token_ids": list(self.token_ids),
            "label": self.label,
            "split": self.split,
        }


@dataclass(frozen=True)
class SplitView:
    """Nodes and edges visible to the model for one split.

    ``visible_node_ids`` and ``visible_edges`` hold node ids; ``target_node_ids``
    are the nodes on which losses or metrics are computed. ``index`` and
    ``local_edges`` are the same sets expressed as forest positions and as
    positions inside ``visible_node_ids`` respectively.
    """

    split_name: str
    visible_node_ids: np.ndarray
    visible_edges: np.ndarray
    target_node_ids: np.ndarray
    index: np.ndarray = field(repr=False)
    local_edges: np.ndarray = field(repr=False)
    target_mask: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.visible_node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.visible_edges)


class DialogueForest:
    """Immutable collection of reply trees.

    Nodes are stored sorted by ``node_id``; every array property is indexed by
    that position. ``edges`` holds one ``(child, parent)`` position pair per
    non-root node and ``adjacency`` the symmetric ``(2, 2E)`` edge index.
    """

    def __init__(self, nodes: Iterable[MessageNode], vocab_size: int | None = None,
                 metadata: dict | None = None):
        nodes = sorted(nodes, key=lambda n: n.node_id)
        if not nodes:
            raise IntegrityError("a forest needs at least one node")
        ids = np.array([n.node_id for n in nodes], dtype=np.int64)
        if np.any(np.diff(ids) == 0):
            dup = ids[np.flatnonzero(np.diff(ids) == 0)[0]]
            raise IntegrityError(f"duplicate node_id {dup}")
        max_token = max((max(n.token_ids) for n in nodes if n.token_ids), default=-1)
        if vocab_size is None:
            vocab_size = max_token + 1
        if max_token >= vocab_size:
            raise IntegrityError(f"token id {max_token} is outside vocab_size {vocab_size}")
        self._nodes = tuple(nodes)
        self.vocab_size = int(vocab_size)
        self.metadata = dict(metadata or {})
        self.node_ids = ids
        self._pos = {int(i): p for p, i in enumerate(ids)}
        self._check_nodes()
        self.parent_index = np.array(
            [-1 if n.parent_id is None else self._pos[n.parent_id] for n in nodes], dtype=np.int64)
        self._check_acyclic()
        for arr in (self.node_ids, self.parent_index):
            arr.setflags(write=False)

    def _check_nodes(self):
        tree_of = {n.node_id: n.tree_id for n in self._nodes}
        for n in self._nodes:
            if len(n.token_ids) < 1:
                raise IntegrityError(f"node {n.node_id} has no tokens")
            if min(n.token_ids) < 0:
                raise IntegrityError(f"node {n.node_id} has a negative token id")
            if n.label not in (LABEL_COVER, LABEL_STEGO):
                raise IntegrityError(f"node {n.node_id} has label {n.label!r}")
            if n.split is not None and n.split not in SPLITS:
                raise IntegrityError(f"node {n.node_id} has unknown split {n.split!r}")
            if n.parent_id is None:
                continue
            if n.parent_id not in tree_of:
                raise IntegrityError(f"node {n.node_id} references absent parent {n.parent_id}")
            if tree_of[n.parent_id] != n.tree_id:
                raise IntegrityError(
                    f"node {n.node_id} (tree {n.tree_id}) has parent {n.parent_id} "
                    f"in tree {tree_of[n.parent_id]}")
        roots = {}
        for n in self._nodes:
            if n.parent_id is None:
                if n.tree_id in roots:
                    raise IntegrityError(f"tree {n.tree_id} has more than one root")
                roots[n.tree_id] = n.node_id
        missing = {n.tree_id for n in self._nodes} - set(roots)
        if missing:
            raise IntegrityError(f"cycle: tree {min(missing)} has no root")

    def _check_acyclic(self):
        parent = self.parent_index
        state = np.zeros(len(parent), dtype=np.int8)  # 0 new, 1 on path, 2 reaches a root
        for start in range(len(parent)):
            path = []
            v = start
            while v != -1 and state[v] == 0:
                state[v] = 1
                path.append(v)
                v = parent[v]
            if v != -1 and state[v] == 1:
                raise IntegrityError(f"cycle through node {self.node_ids[v]}")
            state[path] = 2

    # -- accessors -----------------------------------------------------------
    @property
    def nodes(self) -> tuple[MessageNode, ...]:
        return self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self):
        return iter(self._nodes)

    def __repr__(self) -> str:
        return (f"DialogueForest(n_nodes={len(self)}, n_trees={self.n_trees}, "
                f"vocab_size={self.vocab_size})")

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    def position(self, node_id: int) -> int:
        return self._pos[int(node_id)]

    def node(self, node_id: int) -> MessageNode:
        return self._nodes[self._pos[int(node_id)]]

    @property
    def tree_ids(self) -> np.ndarray:
        return np.array([n.tree_id for n in self._nodes], dtype=np.int64)

    @property
    def n_trees(self) -> int:
        return int(np.sum(self.parent_index == -1))

    @property
    def labels(self) -> np.ndarray:
        return np.array([n.label for n in self._nodes], dtype=np.int64)

    @property
    def splits(self) -> np.ndarray:
        return np.array([n.split for n in self._nodes], dtype=object)

    @property
    def is_split(self) -> bool:
        return all(n.split is not None for n in self._nodes)

    @property
    def edges(self) -> np.ndarray:
        child = np.flatnonzero(self.parent_index >= 0)
        return np.stack([child, self.parent_index[child]], axis=1)

    @property
    def adjacency(self) -> np.ndarray:
        e = self.edges
        return np.concatenate([e.T, e[:, ::-1].T], axis=1)

    @property
    def n_children(self) -> np.ndarray:
        counts = np.zeros(self.n_nodes, dtype=np.int64)
        np.add.at(counts, self.parent_index[self.parent_index >= 0], 1)
        return counts

    @property
    def is_leaf(self) -> np.ndarray:
        return self.n_children == 0

    def token_matrix(self, max_len: int, pad_id: int | None = None) -> np.ndarray:
        """Token ids padded or truncated to ``max_len`` columns."""
        pad_id = self.vocab_size if pad_id is None else pad_id
        out = np.full((self.n_nodes, max_len), pad_id, dtype=np.int64)
        for i, n in enumerate(self._nodes):
            toks = n.token_ids[:max_len]
            out[i, :len(toks)] = toks
        return out

    def replace_nodes(self, nodes: Iterable[MessageNode], metadata: dict | None = None
                      ) -> "DialogueForest":
        meta = self.metadata if metadata is None else metadata
        return DialogueForest(nodes, vocab_size=self.vocab_size, metadata=meta)

    def with_splits(self, splits: Sequence[str]) -> "DialogueForest":
        if len(splits) != self.n_nodes:
            raise ConfigError("one split per node is required")
        return self.replace_nodes(replace(n, split=s) for n, s in zip(self._nodes, splits))

    # -- serialization -------------------------------------------------------
    def to_jsonl(self) -> str:
        return "".join(_dump_line(n) + "\n" for n in self._nodes)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256(self.to_jsonl().encode("utf-8"))
        h.update(str(self.vocab_size).encode())
        return h.hexdigest()[:16]


def _dump_line(node: MessageNode) -> str:
    return json.dumps(node.to_dict(), separators=(",", ":"))


def _parse_line(text: str, line_number: int) -> MessageNode:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ForestParseError(f"invalid JSON ({exc.msg})", line_number) from None
    if not isinstance(rec, dict):
        raise ForestParseError("expected a JSON object", line_number)
    missing = [k for k in _FIELDS if k not in rec and k != "split"]
    if missing:
        raise ForestParseError(f"missing field(s) {', '.join(missing)}", line_number)

    def _int(key, value):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ForestParseError(f"{key} must be an integer", line_number)
        return value

    parent = rec["parent_id"]
    tokens = rec["token_ids"]
    if not isinstance(tokens, list):
        raise ForestParseError("token_ids must be a list", line_number)
    split = rec.get("split")
    if split is not None and split not in SPLITS:
        raise ForestParseError(f"split must be one of {SPLITS}", line_number)
    label = _int("label", rec["label"])
    if label not in (0, 1):
        raise ForestParseError("label must be 0 or 1", line_number)
    return MessageNode(
        node_id=_int("node_id", rec["node_id"]),
        tree_id=_int("tree_id", rec["tree_id"]),
        parent_id=None if parent is None else _int("parent_id", parent),
        token_ids=tuple(_int("token_ids", t) for t in tokens),
        label=label,
        split=split,
    )


def metadata_path(path: str | os.PathLike) -> Path:
    """Sidecar location: ``data.jsonl`` -> ``data.meta.json``."""
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def load_forest(path: str | os.PathLike, vocab_size: int | None = None) -> DialogueForest:
    """Read a forest from JSONL plus its optional metadata sidecar.

    Raises
    ------
    ForestParseError
        On a malformed line; the message carries the 1-based line number.
    IntegrityError
        On dangling parents, cycles, duplicate ids or out-of-vocabulary tokens.
    """
    path = Path(path)
    meta = {}
    side = metadata_path(path)
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
    if vocab_size is None:
        vocab_size = meta.get("vocab_size")
    nodes = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            nodes.append(_parse_line(line, i))
    return DialogueForest(nodes, vocab_size=vocab_size, metadata=meta)


def save_forest(forest: DialogueForest, path: str | os.PathLike, metadata: dict | None = None):
    """Write the canonical JSONL serialization and the metadata sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(forest.to_jsonl())
    meta = dict(forest.metadata)
    meta.update(metadata or {})
    meta["vocab_size"] = forest.vocab_size
    metadata_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")


def split_counts(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder rounding of ``ratios * n``; every split gets >= 1 node."""
    ratios = np.asarray(ratios, dtype=float)
    if ratios.shape != (3,) or np.any(ratios < 0) or abs(ratios.sum() - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three non-negative fractions summing to 1, "
                          f"got {tuple(ratios)}")
    if n < 3:
        raise ConfigError("splitting needs at least 3 nodes")
    exact = ratios * n
    counts = np.floor(exact).astype(int)
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[: n - counts.sum()]] += 1
    for i in range(3):
        if counts[i] == 0:
            # donor: the split furthest above its exact share, which stays within one node
            surplus = np.where(counts > 1, counts - exact, -np.inf)
            counts[int(np.argmax(surplus))] -= 1
            counts[i] = 1
    return counts.tolist()


def split_forest(forest: DialogueForest, ratios: Sequence[float] = DEFAULT_RATIOS,
                 seed: int = 42, unit: str = "node") -> DialogueForest:
    """Assign train/val/test uniformly at random.

    ``unit="node"`` shuffles individual messages; ``unit="tree"`` keeps every
    tree inside one split (counts then follow tree sizes, so they are only
    approximately proportional).
    """
    counts = split_counts(forest.n_nodes, ratios)
    rng = np.random.default_rng(seed)
    assign = np.empty(forest.n_nodes, dtype=object)
    if unit == "node":
        order = rng.permutation(forest.n_nodes)
        bounds = np.cumsum([0] + counts)
        for name, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
            assign[order[lo:hi]] = name
    elif unit == "tree":
        trees = forest.tree_ids
        uniq = rng.permutation(np.unique(trees))
        targets = np.cumsum(counts)
        filled = 0
        for t in uniq:
            members = trees == t
            k = int(np.searchsorted(targets, filled, side="right"))
            assign[members] = SPLITS[min(k, 2)]
            filled += int(members.sum())
    else:
        raise ConfigError(f"unknown split unit {unit!r}")
    return forest.with_splits(list(assign))


def view(forest: DialogueForest, split_name: str) -> SplitView:
    """Visibility rules per split.

    The training view keeps only train nodes and edges whose endpoints are both
    train nodes. Evaluation views (``val``, ``test``, ``all``) see the whole
    forest; targets are the nodes of that split.
    """
    if split_name not in SPLITS + ("all",):
        raise ConfigError(f"unknown split {split_name!r}")
    if split_name != "all" and not forest.is_split:
        raise ConfigError("forest has no split assignment")
    edges = forest.edges
    if split_name == "train":
        keep = forest.splits == "train"
        index = np.flatnonzero(keep)
        edges = edges[keep[edges[:, 0]] & keep[edges[:, 1]]]
        target = np.ones(len(index), dtype=bool)
    else:
        index = np.arange(forest.n_nodes)
        target = (np.ones(forest.n_nodes, dtype=bool) if split_name == "all"
                  else forest.splits == split_name)
    local = np.full(forest.n_nodes, -1, dtype=np.int64)
    local[index] = np.arange(len(index))
    ids = forest.node_ids
    return SplitView(
        split_name=split_name,
        visible_node_ids=ids[index],
        visible_edges=ids[edges].reshape(-1, 2),
        target_node_ids=ids[index][target],
        index=index,
        local_edges=local[edges].reshape(-1, 2),
        target_mask=target,
    )
