"""Four-stage candidate refinement: semantic filter, duplicate pruning,
structural scoring, and diversity reranking.

Stage order is fixed: quantile-thresholded embedding filter, then
fingerprint dedup, then a composite of lexical and graph-structural
similarity, then marginal-relevance selection of the final top_k. Any
stage can be toggled off, in which case it is the identity on the
candidate list.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .ccg import GraphSlice, empty_slice, parse_lenient, slice_at, slice_text
from .embedding import Embedder, EmbeddingVector, cosine
from .errors import SaracoderError
from .lexical import (
    STAGE_DAR,
    STAGE_RAP,
    STAGE_SAD,
    STAGE_TPM,
    Candidate,
    retrieve_initial,
)
from .store import SnippetStore
from .textnorm import fingerprint


@dataclass
class StageToggles:
    sad: bool = True
    rap: bool = True
    tpm: bool = True
    dar: bool = True


@dataclass
class PipelineConfig:
    """Knobs of the refinement pipeline; all ranges validated on creation."""

    quantile_q: float = 0.75
    gamma: float = 0.5
    alpha: float = 0.5
    mmr_lambda: float = 0.7
    top_k: int = 4
    expansion_p: int = 5
    stages: StageToggles = field(default_factory=StageToggles)

    def __post_init__(self):
        if not 0.0 < self.quantile_q < 1.0:
            raise ValueError(f"quantile_q must be in (0, 1), got {self.quantile_q}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise ValueError(f"mmr_lambda must be in [0, 1], got {self.mmr_lambda}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.expansion_p < 1:
            raise ValueError(f"expansion_p must be >= 1, got {self.expansion_p}")


# ---------------------------------------------------------------------------
# Stage 1: semantic filter


def nearest_rank_quantile(values: Sequence[float], q: float) -> float:
    """Nearest-rank quantile: element at 1-based index ceil(q * N) of the
    ascending sort."""
    if not values:
        raise ValueError("quantile of an empty multiset")
    ordered = sorted(values)
    rank = math.ceil(q * len(ordered))
    rank = min(max(rank, 1), len(ordered))
    return ordered[rank - 1]


def sad_filter(
    query_vec: EmbeddingVector | None,
    candidates: list[Candidate],
    config: PipelineConfig,
) -> list[Candidate]:
    """Keep candidates whose embedding similarity clears the adaptive
    quantile threshold; input order preserved.

    Candidates missing embed_sim get it computed from query_vec and
    their attached vector. The threshold is the nearest-rank quantile of
    the similarity multiset itself, so a single candidate always
    survives and at least the top (1 - q) share of any pool does.
    """
    if not candidates:
        return []
    for cand in candidates:
        if cand.embed_sim is None:
            if query_vec is None or cand.vector is None:
                raise ValueError(
                    f"candidate {cand.snippet_id} has no embedding similarity"
                )
            cand.embed_sim = float(query_vec.values @ cand.vector)
    tau = nearest_rank_quantile([c.embed_sim for c in candidates], config.quantile_q)
    survivors = [c for c in candidates if c.embed_sim >= tau]
    for cand in survivors:
        cand.rank_trace.append(STAGE_SAD)
    return survivors


# ---------------------------------------------------------------------------
# Stage 2: duplicate pruning


def snippet_fingerprint(text: str) -> str:
    """128-bit MD5 hex fingerprint of the normalized snippet text."""
    return fingerprint(text)


def rap_dedup(candidates: list[Candidate], store: SnippetStore) -> list[Candidate]:
    """Drop candidates whose snippet text fingerprint was already seen.

    Single pass, first occurrence wins, input order preserved.
    """
    seen: set[str] = set()
    kept: list[Candidate] = []
    for cand in candidates:
        record = store.get(cand.snippet_id)
        if record is None:
            raise SaracoderError(f"candidate references unknown snippet {cand.snippet_id}")
        fp = snippet_fingerprint(record.text)
        if fp in seen:
            continue
        seen.add(fp)
        cand.rank_trace.append(STAGE_RAP)
        kept.append(cand)
    return kept


# ---------------------------------------------------------------------------
# Stage 3: structural scoring (decayed edit distance between slices)


def _core_distances(sl: GraphSlice) -> dict[int, int]:
    """Undirected hop distance from every node to the slice core;
    unreachable nodes get the slice's node count."""
    n = len(sl.nodes)
    if n == 0:
        return {}
    adj: dict[int, set[int]] = {node.id: set() for node in sl.nodes}
    for edge in sl.edges:
        adj[edge.src].add(edge.dst)
        adj[edge.dst].add(edge.src)
    dist = {sl.core: 0}
    queue = deque([sl.core])
    while queue:
        cur = queue.popleft()
        for nxt in adj[cur]:
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                queue.append(nxt)
    return {node.id: dist.get(node.id, n) for node in sl.nodes}


def _match_stage(
    query_ids: Sequence[int],
    cand_ids: Sequence[int],
    query_key: dict[int, str],
    cand_key: dict[int, str],
) -> list[tuple[int, int]]:
    """Pair candidate and query nodes sharing a key, ascending-id order
    on both sides; returns (cand_id, query_id) pairs."""
    by_key_q: dict[str, list[int]] = {}
    for qid in sorted(query_ids):
        by_key_q.setdefault(query_key[qid], []).append(qid)
    pairs: list[tuple[int, int]] = []
    by_key_c: dict[str, list[int]] = {}
    for cid in sorted(cand_ids):
        by_key_c.setdefault(cand_key[cid], []).append(cid)
    for key, cids in by_key_c.items():
        qids = by_key_q.get(key, [])
        pairs.extend(zip(cids, qids))
    return pairs


def dsed(query: GraphSlice, cand: GraphSlice, gamma: float) -> float:
    """Cost of the canonical edit script turning ``cand`` into ``query``,
    each operation discounted by gamma to the power of its hop distance
    from the host graph's core node.

    Alignment: nodes match first on equal text fingerprint, then
    leftovers of equal kind pair up as modify operations; what remains
    becomes delete (candidate side) or add (query side) operations.
    Edge operations are the symmetric difference of edges under the node
    mapping, discounted by the nearer endpoint; edges touching unmapped
    nodes ride along with their node's operation at no extra cost.
    Every operation costs 1 before the discount.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")

    q_dist = _core_distances(query)
    c_dist = _core_distances(cand)
    q_hash = {n.id: n.norm_hash for n in query.nodes}
    c_hash = {n.id: n.norm_hash for n in cand.nodes}
    q_kind = {n.id: n.kind for n in query.nodes}
    c_kind = {n.id: n.kind for n in cand.nodes}

    hash_pairs = _match_stage(list(q_hash), list(c_hash), q_hash, c_hash)
    matched_q = {qid for _, qid in hash_pairs}
    matched_c = {cid for cid, _ in hash_pairs}

    rest_q = [qid for qid in q_hash if qid not in matched_q]
    rest_c = [cid for cid in c_hash if cid not in matched_c]
    modify_pairs = _match_stage(rest_q, rest_c, q_kind, c_kind)

    mapping = dict(hash_pairs)
    mapping.update(modify_pairs)
    mapped_c = set(mapping)
    mapped_q = set(mapping.values())

    cost = 0.0
    for cid, _ in modify_pairs:
        cost += gamma ** c_dist[cid]
    for cid in c_hash:
        if cid not in mapped_c:
            cost += gamma ** c_dist[cid]
    for qid in q_hash:
        if qid not in mapped_q:
            cost += gamma ** q_dist[qid]

    translated: dict[tuple[int, int, str], tuple[int, int]] = {}
    for edge in cand.edges:
        if edge.src in mapped_c and edge.dst in mapped_c:
            translated[(mapping[edge.src], mapping[edge.dst], edge.kind)] = (edge.src, edge.dst)
    query_edges = {
        (edge.src, edge.dst, edge.kind)
        for edge in query.edges
        if edge.src in mapped_q and edge.dst in mapped_q
    }
    for key, (src, dst) in translated.items():
        if key not in query_edges:
            cost += gamma ** min(c_dist[src], c_dist[dst])
    for src, dst, kind in query_edges:
        if (src, dst, kind) not in translated:
            cost += gamma ** min(q_dist[src], q_dist[dst])
    return cost


def struct_similarity(distance: float) -> float:
    """Map an edit distance into (0, 1]: identical slices score 1."""
    return 1.0 / (1.0 + distance)


def tpm_score(
    candidates: list[Candidate],
    query_slice: GraphSlice,
    store: SnippetStore,
    config: PipelineConfig,
) -> list[Candidate]:
    """Composite score: alpha * lexical + (1 - alpha) * structural,
    sorted descending with ties broken by ascending snippet id."""
    for cand in candidates:
        record = store.get(cand.snippet_id)
        if record is None:
            raise SaracoderError(f"candidate references unknown snippet {cand.snippet_id}")
        distance = dsed(query_slice, record.slice, config.gamma)
        cand.struct_sim = struct_similarity(distance)
        cand.composite = config.alpha * cand.lexical_score + (1.0 - config.alpha) * cand.struct_sim
        cand.rank_trace.append(STAGE_TPM)
    return sorted(candidates, key=lambda c: (-c.composite, c.snippet_id))


# ---------------------------------------------------------------------------
# Stage 4: diversity reranking


def dar_rerank(q_tpm: list[Candidate], config: PipelineConfig) -> list[Candidate]:
    """Marginal-relevance selection of at most top_k candidates.

    Relevance is the composite score min-max normalized over the input
    (all-equal collapses to 1.0); the diversity penalty is the maximum
    cosine to anything already selected (0 for the first pick). Ties
    break by ascending snippet id.
    """
    if not q_tpm:
        return []
    for cand in q_tpm:
        if cand.vector is None:
            raise ValueError(f"candidate {cand.snippet_id} has no embedding vector")
        if cand.composite is None:
            raise ValueError(f"candidate {cand.snippet_id} has no composite score")

    scores = [c.composite for c in q_tpm]
    lo, hi = min(scores), max(scores)
    if hi > lo:
        relevance = {c.snippet_id: (c.composite - lo) / (hi - lo) for c in q_tpm}
    else:
        relevance = {c.snippet_id: 1.0 for c in q_tpm}

    lam = config.mmr_lambda
    selected: list[Candidate] = []
    remaining = list(q_tpm)
    while remaining and len(selected) < config.top_k:
        best = None
        best_score = 0.0
        for cand in remaining:
            diversity = 0.0
            if selected:
                diversity = max(float(cand.vector @ chosen.vector) for chosen in selected)
            score = lam * relevance[cand.snippet_id] - (1.0 - lam) * diversity
            if (
                best is None
                or score > best_score
                or (score == best_score and cand.snippet_id < best.snippet_id)
            ):
                best = cand
                best_score = score
        remaining.remove(best)
        best.rank_trace.append(STAGE_DAR)
        selected.append(best)
    return selected


# ---------------------------------------------------------------------------
# Composition


def query_view(context: str, language: str, h: int, w: int) -> tuple[str, GraphSlice]:
    """Query text (the last w statements of the context) and the slice
    anchored at the context's final statement.

    Unfinished contexts parse leniently; if nothing parses, the raw tail
    lines stand in for the statement window and the slice is empty.
    """
    graph = parse_lenient(context, language)
    if graph.nodes:
        anchor = graph.nodes[-1].id
        window = GraphSlice(anchor=0, nodes=graph.nodes[-w:], edges=[], core=0)
        text = slice_text(window, graph.lines)
        return text, slice_at(graph, anchor, h, w)
    tail = [line for line in context.splitlines() if line.strip()][-w:]
    return "\n".join(tail), empty_slice()


def run_pipeline(
    context: str,
    store: SnippetStore,
    config: PipelineConfig,
    embedder: Embedder,
) -> list[Candidate]:
    """Retrieve an initial pool and refine it through the enabled stages.

    A disabled stage passes the candidate list through unchanged, except
    that a disabled structural stage leaves composite = lexical score
    and a disabled reranking stage truncates to top_k in current order.
    Deterministic for fixed inputs.
    """
    manifest = store.manifest
    query_text, query_slice = query_view(context, manifest.language, manifest.h, manifest.w)
    candidates = retrieve_initial(query_text, store, config.top_k, config.expansion_p)

    query_vec: EmbeddingVector | None = None
    if (config.stages.sad or config.stages.dar) and candidates:
        texts = [store.get(cand.snippet_id).text for cand in candidates]
        vectors = embedder.embed(texts)
        if query_text.strip():
            query_vec = embedder.embed([query_text])[0]
        for cand, vec in zip(candidates, vectors):
            cand.vector = vec.values
            cand.embed_sim = cosine(query_vec, vec) if query_vec is not None else 0.0

    if config.stages.sad:
        candidates = sad_filter(query_vec, candidates, config)

    if config.stages.rap:
        candidates = rap_dedup(candidates, store)

    if config.stages.tpm:
        candidates = tpm_score(candidates, query_slice, store, config)
    else:
        for cand in candidates:
            cand.composite = cand.lexical_score

    if config.stages.dar:
        candidates = dar_rerank(candidates, config)
    else:
        candidates = candidates[: config.top_k]
    return candidates
