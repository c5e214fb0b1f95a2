"""Initial candidate retrieval by weighted token-multiset similarity."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .textnorm import subtokens

if TYPE_CHECKING:
    import numpy as np

    from .store import SnippetStore

STAGE_LEXICAL = "lexical"
STAGE_SAD = "sad"
STAGE_RAP = "rap"
STAGE_TPM = "tpm"
STAGE_DAR = "dar"


@dataclass
class Candidate:
    """One snippet moving through the refinement pipeline.

    lexical_score is set at creation; embed_sim appears once embeddings
    are computed, struct_sim and composite once structural scoring runs.
    rank_trace lists the stages the candidate survived, in order.
    """

    snippet_id: str
    lexical_score: float
    embed_sim: float | None = None
    struct_sim: float | None = None
    composite: float | None = None
    rank_trace: list[str] = field(default_factory=list)
    vector: "np.ndarray | None" = None


def tokenize(text: str) -> Counter:
    """Sub-token multiset of a text (lowercased camelCase/snake_case parts)."""
    return Counter(subtokens(text))


def weighted_jaccard(a: Counter, b: Counter) -> float:
    """Multiset Jaccard: sum of min counts over sum of max counts, in [0, 1].

    Equals 1 exactly when the multisets are equal (two empty bags count
    as equal).
    """
    if not a and not b:
        return 1.0
    inter = 0
    union = 0
    for token in set(a) | set(b):
        ca = a.get(token, 0)
        cb = b.get(token, 0)
        inter += min(ca, cb)
        union += max(ca, cb)
    if union == 0:
        return 1.0
    return inter / union


def retrieve_initial(
    query_context: str, store: "SnippetStore", top_k: int, p: int
) -> list[Candidate]:
    """Top ``top_k * p`` snippets by lexical similarity to the query.

    Ordered by score descending, ties broken by ascending snippet id; an
    empty store yields an empty list.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    if p < 1:
        raise ValueError(f"expansion factor p must be >= 1, got {p}")
    query_bag = tokenize(query_context)
    scored = [
        (weighted_jaccard(query_bag, record.token_bag), record.id) for record in store
    ]
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [
        Candidate(snippet_id=s_id, lexical_score=score, rank_trace=[STAGE_LEXICAL])
        for score, s_id in scored[: top_k * p]
    ]
