from __future__ import annotations

import hashlib
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_slice, random_slice
from dsed_oracle import reference_dsed
from saracoder.ccg import CONTROL_FLOW, DATA_DEP
from saracoder.embedding import EMBED_DIM, EmbeddingVector
from saracoder.hf_op import (
    PipelineConfig,
    StageToggles,
    dar_rerank,
    dsed,
    nearest_rank_quantile,
    rap_dedup,
    sad_filter,
    snippet_fingerprint,
    struct_similarity,
    tpm_score,
)
from saracoder.lexical import Candidate


def _cand(sid, lexical=0.5, embed=None, composite=None, vector=None) -> Candidate:
    return Candidate(
        snippet_id=sid,
        lexical_score=lexical,
        embed_sim=embed,
        composite=composite,
        vector=vector,
        rank_trace=["lexical"],
    )


def _unit(index: int) -> np.ndarray:
    vec = np.zeros(EMBED_DIM)
    vec[index] = 1.0
    return vec


# ---------------------------------------------------------------------------
# SAD


class TestSadFilter:
    def test_nearest_rank_example(self):
        cands = [_cand(f"s{i}", embed=s) for i, s in enumerate([0.6, 0.7, 0.8, 0.9])]
        survivors = sad_filter(None, cands, PipelineConfig())
        assert [c.embed_sim for c in survivors] == [0.8, 0.9]

    def test_single_candidate_always_survives(self):
        cands = [_cand("only", embed=-0.3)]
        assert len(sad_filter(None, cands, PipelineConfig())) == 1

    def test_all_equal_all_survive(self):
        cands = [_cand(f"s{i}", embed=0.42) for i in range(7)]
        assert len(sad_filter(None, cands, PipelineConfig())) == 7

    def test_empty_input_is_empty_output(self):
        assert sad_filter(None, [], PipelineConfig()) == []

    def test_order_preserved(self):
        # tau = 4th of 5 ascending sims = 0.85; survivors keep input order.
        sims = [0.9, 0.2, 0.8, 0.1, 0.85]
        cands = [_cand(f"s{i}", embed=s) for i, s in enumerate(sims)]
        survivors = sad_filter(None, cands, PipelineConfig())
        assert [c.snippet_id for c in survivors] == ["s0", "s4"]

    def test_missing_similarity_raises(self):
        with pytest.raises(ValueError):
            sad_filter(None, [_cand("x")], PipelineConfig())

    def test_computes_similarity_from_query_vector(self):
        query = EmbeddingVector(values=_unit(0), source="t")
        cand = _cand("x", vector=_unit(0))
        survivors = sad_filter(query, [cand], PipelineConfig())
        assert survivors[0].embed_sim == pytest.approx(1.0)

    def test_survivor_tagged(self):
        cands = [_cand("s", embed=0.5)]
        assert sad_filter(None, cands, PipelineConfig())[0].rank_trace[-1] == "sad"


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-1, max_value=1, allow_nan=False), min_size=1, max_size=50))
def test_sad_quantile_guarantee(sims):
    n = len(sims)
    cands = [_cand(f"s{i:02d}", embed=s) for i, s in enumerate(sims)]
    survivors = sad_filter(None, cands, PipelineConfig())
    tau = nearest_rank_quantile(sims, 0.75)
    assert len(survivors) >= -(-n // 4)  # ceil(n / 4)
    assert all(c.embed_sim >= tau for c in survivors)


# ---------------------------------------------------------------------------
# RAP


class _FakeStore:
    def __init__(self, texts: dict[str, str]):
        self._texts = texts

    def get(self, sid):
        if sid not in self._texts:
            return None

        class _Rec:
            text = self._texts[sid]

        return _Rec()


class TestRapDedup:
    def test_first_occurrence_wins(self):
        store = _FakeStore({"a": "x = 1", "b": "y = 2", "a2": "x = 1"})
        kept = rap_dedup([_cand("a"), _cand("b"), _cand("a2")], store)
        assert [c.snippet_id for c in kept] == ["a", "b"]

    def test_all_distinct_passes_through(self):
        store = _FakeStore({"a": "x = 1", "b": "y = 2", "c": "z = 3"})
        cands = [_cand("a"), _cand("b"), _cand("c")]
        assert [c.snippet_id for c in rap_dedup(cands, store)] == ["a", "b", "c"]

    def test_md5_reference_vector(self):
        assert snippet_fingerprint("") == "d41d8cd98f00b204e9800998ecf8427e"
        assert hashlib.md5(b"").hexdigest() == "d41d8cd98f00b204e9800998ecf8427e"

    def test_normalization_collapses_formatting(self):
        store = _FakeStore({"a": "x   =  1", "b": " x = 1 "})
        kept = rap_dedup([_cand("a"), _cand("b")], store)
        assert [c.snippet_id for c in kept] == ["a"]

    def test_idempotent(self, rng):
        texts = {}
        cands = []
        for i in range(40):
            text = f"stmt_{rng.randrange(12)} = {rng.randrange(4)}"
            texts[f"s{i:02d}"] = text
            cands.append(_cand(f"s{i:02d}"))
        store = _FakeStore(texts)
        once = rap_dedup(list(cands), store)
        twice = rap_dedup(list(once), store)
        assert [c.snippet_id for c in once] == [c.snippet_id for c in twice]
        fingerprints = [snippet_fingerprint(texts[c.snippet_id]) for c in once]
        assert len(set(fingerprints)) == len(fingerprints)


# ---------------------------------------------------------------------------
# D-SED


class TestDsed:
    def test_identity_is_zero(self):
        sl = make_slice(
            [("assignment", "total = alpha + beta"), ("assignment", "result = total * gamma")],
            [(0, 1, CONTROL_FLOW), (0, 1, DATA_DEP)],
        )
        for gamma in (0.25, 0.5, 0.9):
            assert dsed(sl, sl, gamma) == 0.0

    def test_empty_vs_empty(self):
        assert dsed(make_slice([]), make_slice([]), 0.5) == 0.0

    def test_single_modify_at_core(self):
        query = make_slice([("assignment", "a = 1")])
        cand = make_slice([("assignment", "b = 2")])
        assert dsed(query, cand, 0.5) == pytest.approx(1.0)

    def test_extra_query_node_attached_to_core(self):
        # Candidate is a single node; query adds one node at hop 1 from its
        # core. The connecting edge has an unmapped endpoint, so only the
        # node-add operation is charged.
        cand = make_slice([("assignment", "a = 1")])
        query = make_slice(
            [("assignment", "extra = 7"), ("assignment", "a = 1")],
            [(0, 1, CONTROL_FLOW)],
        )
        assert dsed(query, cand, 0.5) == pytest.approx(0.5)

    def test_edge_difference_between_mapped_nodes(self):
        nodes = [("assignment", "a = 1"), ("assignment", "b = a")]
        query = make_slice(nodes, [(0, 1, CONTROL_FLOW), (0, 1, DATA_DEP)])
        cand = make_slice(nodes, [(0, 1, CONTROL_FLOW)])
        # One missing data_dep edge between mapped nodes, min endpoint at core.
        assert dsed(query, cand, 0.5) == pytest.approx(1.0)

    def test_gamma_out_of_range(self):
        sl = make_slice([("assignment", "a = 1")])
        with pytest.raises(ValueError):
            dsed(sl, sl, 1.0)

    def test_non_negative_on_random_pairs(self, rng):
        for _ in range(100):
            a = random_slice(rng)
            b = random_slice(rng)
            assert dsed(a, b, 0.5) >= 0.0

    def test_matches_reference_on_random_pairs(self, rng):
        for _ in range(200):
            query = random_slice(rng)
            cand = random_slice(rng)
            gamma = rng.choice([0.25, 0.5, 0.75])
            assert dsed(query, cand, gamma) == pytest.approx(
                reference_dsed(query, cand, gamma), abs=1e-9
            )

    def test_decay_monotone_for_far_ops(self):
        # Modify op at hop distance >= 1: a long chain with the far end changed.
        for length in (2, 4, 6):
            texts = [f"v{i} = {i}" for i in range(length)]
            edges = [(i, i + 1, CONTROL_FLOW) for i in range(length - 1)]
            cand = make_slice([("assignment", t) for t in texts], edges)
            changed = ["w0 = -1"] + texts[1:]
            query = make_slice([("assignment", t) for t in changed], edges)
            low = dsed(query, cand, 0.25)
            high = dsed(query, cand, 0.75)
            assert low <= high
            assert low == pytest.approx(0.25 ** (length - 1))


class TestStructSimilarity:
    def test_zero_distance_is_one(self):
        assert struct_similarity(0.0) == 1.0

    def test_monotone_decreasing(self):
        assert struct_similarity(0.5) > struct_similarity(2.0)
        assert 0.0 < struct_similarity(100.0) <= 1.0


# ---------------------------------------------------------------------------
# TPM


class _SliceStore:
    def __init__(self, slices: dict[str, object], texts: dict[str, str] | None = None):
        self._slices = slices
        self._texts = texts or {}

    def get(self, sid):
        if sid not in self._slices:
            return None
        slice_ = self._slices[sid]
        text = self._texts.get(sid, "x")

        class _Rec:
            pass

        rec = _Rec()
        rec.slice = slice_
        rec.text = text
        return rec


class TestTpmScore:
    def test_identical_everything_scores_one(self):
        sl = make_slice([("assignment", "a = 1")])
        store = _SliceStore({"s": sl})
        out = tpm_score([_cand("s", lexical=1.0)], sl, store, PipelineConfig(alpha=0.5))
        assert out[0].composite == pytest.approx(1.0)
        assert out[0].struct_sim == pytest.approx(1.0)

    def test_alpha_one_degenerates_to_lexical(self):
        sl_a = make_slice([("assignment", "a = 1")])
        sl_b = make_slice([("call", "print(1)")])
        store = _SliceStore({"a": sl_a, "b": sl_b})
        query = make_slice([("return", "return 0")])
        cands = [_cand("a", lexical=0.2), _cand("b", lexical=0.9)]
        out = tpm_score(cands, query, store, PipelineConfig(alpha=1.0))
        assert [c.snippet_id for c in out] == ["b", "a"]
        assert [c.composite for c in out] == [0.9, 0.2]

    def test_alpha_zero_orders_by_structure(self):
        query = make_slice([("assignment", "a = 1")])
        matching = make_slice([("assignment", "a = 1")])  # dsed 0 -> sim 1
        store = _SliceStore({"near": matching, "far": _three_op_slice()})
        cands = [_cand("far", lexical=1.0), _cand("near", lexical=0.0)]
        out = tpm_score(cands, query, store, PipelineConfig(alpha=0.0))
        assert out[0].snippet_id == "near"
        assert out[0].struct_sim == pytest.approx(1.0)

    def test_ordering_invariant_under_affine_transform(self, rng):
        # Ranking depends only on score comparisons: scaling/shifting all
        # composites uniformly cannot change the argmax order.
        sl = make_slice([("assignment", "a = 1")])
        store = _SliceStore({f"s{i}": sl for i in range(8)})
        cands = [_cand(f"s{i}", lexical=rng.random()) for i in range(8)]
        out = tpm_score(list(cands), sl, store, PipelineConfig(alpha=0.7))
        base_order = [c.snippet_id for c in out]
        for scale, shift in ((2.0, 0.0), (0.5, 1.0), (10.0, -3.0)):
            transformed = sorted(
                out, key=lambda c: (-(scale * c.composite + shift), c.snippet_id)
            )
            assert [c.snippet_id for c in transformed] == base_order


def _three_op_slice():
    return make_slice(
        [("call", "print(x)"), ("call", "print(y)"), ("call", "print(z)")],
        [(0, 1, CONTROL_FLOW), (1, 2, CONTROL_FLOW)],
    )


# ---------------------------------------------------------------------------
# DAR


class TestDarRerank:
    def test_lambda_one_preserves_input_order(self, rng):
        for _ in range(50):
            n = rng.randint(1, 12)
            cands = [
                _cand(
                    f"s{i:02d}",
                    composite=round(rng.random(), 3),
                    vector=_unit(rng.randrange(EMBED_DIM)),
                )
                for i in range(n)
            ]
            ordered = sorted(cands, key=lambda c: (-c.composite, c.snippet_id))
            config = PipelineConfig(mmr_lambda=1.0, top_k=n)
            out = dar_rerank(list(ordered), config)
            assert [c.snippet_id for c in out] == [c.snippet_id for c in ordered]

    def test_lambda_zero_second_pick_is_orthogonal(self):
        # v2 duplicates v1; v3 is orthogonal. After the id-smallest first
        # pick, the orthogonal candidate minimizes similarity to it.
        cands = [
            _cand("s1", composite=0.9, vector=_unit(0)),
            _cand("s2", composite=0.8, vector=_unit(0)),
            _cand("s3", composite=0.1, vector=_unit(1)),
        ]
        out = dar_rerank(cands, PipelineConfig(mmr_lambda=0.0, top_k=3))
        assert [c.snippet_id for c in out] == ["s1", "s3", "s2"]

    def test_exhaustion_returns_all(self):
        cands = [
            _cand("a", composite=0.5, vector=_unit(0)),
            _cand("b", composite=0.4, vector=_unit(1)),
        ]
        out = dar_rerank(cands, PipelineConfig(top_k=4))
        assert len(out) == 2

    def test_no_fabrication_and_cap(self):
        cands = [
            _cand(f"s{i}", composite=i / 10.0, vector=_unit(i)) for i in range(8)
        ]
        out = dar_rerank(list(cands), PipelineConfig(top_k=3))
        assert len(out) == 3
        assert {c.snippet_id for c in out} <= {c.snippet_id for c in cands}

    def test_all_equal_scores_normalize_to_one(self):
        cands = [
            _cand("a", composite=0.5, vector=_unit(0)),
            _cand("b", composite=0.5, vector=_unit(1)),
        ]
        out = dar_rerank(cands, PipelineConfig(mmr_lambda=1.0, top_k=2))
        assert [c.snippet_id for c in out] == ["a", "b"]

    def test_empty_input(self):
        assert dar_rerank([], PipelineConfig()) == []

    def test_missing_vector_raises(self):
        with pytest.raises(ValueError):
            dar_rerank([_cand("x", composite=0.5)], PipelineConfig())


class TestPipelineConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"quantile_q": 0.0},
            {"quantile_q": 1.0},
            {"gamma": 0.0},
            {"gamma": 1.0},
            {"alpha": -0.1},
            {"alpha": 1.1},
            {"mmr_lambda": 1.5},
            {"top_k": 0},
            {"expansion_p": 0},
        ],
    )
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(ValueError):
            PipelineConfig(**kwargs)

    def test_defaults_valid(self):
        config = PipelineConfig()
        assert config.quantile_q == 0.75
        assert config.gamma == 0.5
        assert config.alpha == 0.5
        assert config.mmr_lambda == 0.7
        assert config.stages == StageToggles(True, True, True, True)
