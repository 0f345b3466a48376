import numpy as np
import pytest
import torch

from gsdfuse.graph import DialogueForest, MessageNode, split_forest
from gsdfuse.sandbox import SandboxSpec, TokenModel, synthesize_sandbox


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)
    yield


@pytest.fixture(scope="session")
def bigram64():
    return TokenModel.dirichlet(64, seed=3, concentration=0.3, eos_prob=0.05)


@pytest.fixture(scope="session")
def small_forest(bigram64):
    spec = SandboxSpec(codec="hc", hc_tree_size=8, srs=0.4, n_trees=40, mean_tree_size=6, seed=5)
    return split_forest(synthesize_sandbox(spec, bigram64), seed=5)


def chain_forest(splits, tokens=None):
    """One path-shaped tree; node i replies to i - 1."""
    nodes = []
    for i, sp in enumerate(splits):
        tok = tokens[i] if tokens else (1 + i % 3,)
        nodes.append(MessageNode(i, 0, None if i == 0 else i - 1, tuple(tok), 0, sp))
    return DialogueForest(nodes, vocab_size=8)


def brute_force_rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
