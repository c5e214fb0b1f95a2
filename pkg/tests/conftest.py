from __future__ import annotations

import random

import pytest

from saracoder.ccg import CCGEdge, CCGNode, EDGE_KINDS, GraphSlice, Span
from saracoder.textnorm import fingerprint

_KIND_POOL = ("assignment", "call", "branch", "loop", "return", "other")
_TEXT_POOL = (
    "total = alpha + beta",
    "result = total * gamma",
    "print(result)",
    "if result:",
    "return result",
    "value = helper(x)",
    "x = 1",
    "y = x",
)


def make_slice(node_specs, edges=()) -> GraphSlice:
    """Build a GraphSlice from (kind, text) pairs and (src, dst, kind) edges."""
    nodes = [
        CCGNode(
            id=i,
            kind=kind,
            text=text,
            norm_hash=fingerprint(text),
            span=Span("fixture.py", i + 1, i + 1),
        )
        for i, (kind, text) in enumerate(node_specs)
    ]
    edge_objs = sorted(
        {CCGEdge(src, dst, kind) for src, dst, kind in edges},
        key=lambda e: (e.src, e.dst, e.kind),
    )
    n = len(nodes)
    return GraphSlice(anchor=n - 1, nodes=nodes, edges=edge_objs, core=n - 1)


def random_slice(rng: random.Random, max_nodes: int = 6) -> GraphSlice:
    """Small random slice; text/kind pools are tight to force matches."""
    n = rng.randint(0, max_nodes)
    specs = [(rng.choice(_KIND_POOL), rng.choice(_TEXT_POOL)) for _ in range(n)]
    edges = set()
    if n >= 2:
        for _ in range(rng.randint(0, 2 * n)):
            src = rng.randrange(n)
            dst = rng.randrange(n)
            if src != dst:
                edges.add((src, dst, rng.choice(EDGE_KINDS)))
    return make_slice(specs, edges)


@pytest.fixture
def rng():
    return random.Random(20240811)


# ---------------------------------------------------------------------------
# End-to-end fixture repository
#
# Three files holding (i) three byte-identical copies of a two-statement
# block, (ii) one token-level anagram of that block with a different
# statement structure, (iii) a class the query imports, plus filler.

COPY_BODY = "    total = alpha + beta\n    result = total * gamma\n"

E2E_FILES = {
    "util_a.py": (
        "import os\n"
        "\n"
        "def compute_block():\n" + COPY_BODY +
        "\n"
        "def pad_sort(values):\n"
        "    ordered = sorted(values)\n"
        "    return ordered\n"
        "\n"
        "LIMIT_A = 10\n"
    ),
    "util_b.py": (
        "import sys\n"
        "\n"
        "def compute_block_again():\n" + COPY_BODY +
        "\n"
        "def summarize_metrics():\n"
        "    result = alpha\n"
        "    total = beta * total + gamma\n"
        "\n"
        "def pad_join(parts):\n"
        "    merged = '-'.join(parts)\n"
        "    return merged\n"
    ),
    "util_c.py": (
        "import json\n"
        "\n"
        "class Helper:\n"
        "    scale = 2\n"
        "\n"
        "    def apply(self, value):\n"
        "        return value * self.scale\n"
        "\n"
        "def compute_block_third():\n" + COPY_BODY +
        "\n"
        "def pad_scale(n):\n"
        "    doubled = n * 2\n"
        "    return doubled\n"
    ),
}

# The triplicated snippet text as stored (slice of the block's last statement).
COPY_SNIPPET_TEXT = COPY_BODY.rstrip("\n")

# The superficially similar block: same sub-token multiset as COPY_BODY,
# different statement structure.
ANAGRAM_SNIPPET_TEXT = "    result = alpha\n    total = beta * total + gamma"

E2E_CONTEXT = (
    "import numpy as np\n"
    "from util_c import Helper\n"
    "\n"
    "helper = Helper()\n"
    "\n"
    "def fresh_compute():\n"
    "    total = alpha + beta\n"
    "    result = total * gamma\n"
)


def write_e2e_repo(root) -> None:
    root.mkdir(parents=True, exist_ok=True)
    for rel, content in E2E_FILES.items():
        (root / rel).write_text(content, encoding="utf-8")


@pytest.fixture
def e2e_repo(tmp_path):
    root = tmp_path / "repo"
    write_e2e_repo(root)
    return root


@pytest.fixture
def e2e_index(e2e_repo, tmp_path):
    from saracoder.store import index_repository

    out = tmp_path / "index"
    index_repository(e2e_repo, out)
    return out
