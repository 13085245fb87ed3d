import json

import pytest
from hypothesis import given, strategies as st

from pivot_ensemble.core import (
    Candidate,
    CandidatePool,
    CandidateRef,
    EnsembleOutput,
    LanguageCode,
    PathKind,
    ScoredCandidate,
    SourceSegment,
    Strategy,
    TranslationPath,
    lang,
    segments_from_lines,
    validate_pool,
)

from conftest import EN, ES, IT, KO, paths, pools, texts


def roundtrip(obj):
    return type(obj).from_dict(json.loads(json.dumps(obj.to_dict())))


class TestLanguageCode:
    def test_registry_name(self):
        assert lang(KO).display_name == "Korean"

    def test_unknown_code_falls_back_to_code(self):
        assert LanguageCode("xyz_Latn").display_name == "xyz_Latn"

    @pytest.mark.parametrize("bad", ["", "english", "eng-Latn", "eng_", "_Latn", "eng_Latn_x", "en1_Latn"])
    def test_rejects_malformed(self, bad):
        with pytest.raises(ValueError):
            LanguageCode(bad)

    def test_equality_ignores_display_name(self):
        assert LanguageCode(EN, "English") == LanguageCode(EN, "Inglese")
        assert hash(LanguageCode(EN, "a")) == hash(LanguageCode(EN, "b"))
        assert LanguageCode(EN) != LanguageCode("eng_latn")


class TestTranslationPath:
    def test_direct_has_one_hop(self):
        p = TranslationPath.direct(KO, IT)
        assert p.code == "direct" and not p.is_pivot
        assert p.hops() == [(lang(KO), lang(IT))]

    def test_pivot_has_two_hops(self):
        p = TranslationPath.via(KO, EN, IT)
        assert p.code == EN and p.is_pivot
        assert p.hops() == [(lang(KO), lang(EN)), (lang(EN), lang(IT))]

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(kind=PathKind.DIRECT, source_lang=lang(KO), target_lang=lang(KO)),
            dict(kind=PathKind.DIRECT, source_lang=lang(KO), target_lang=lang(IT), pivot=lang(EN)),
            dict(kind=PathKind.PIVOT, source_lang=lang(KO), target_lang=lang(IT)),
            dict(kind=PathKind.PIVOT, source_lang=lang(KO), target_lang=lang(IT), pivot=lang(KO)),
            dict(kind=PathKind.PIVOT, source_lang=lang(KO), target_lang=lang(IT), pivot=lang(IT)),
        ],
    )
    def test_invariants(self, kwargs):
        with pytest.raises(ValueError):
            TranslationPath(**kwargs)

    @given(paths())
    def test_code_roundtrip(self, p):
        assert TranslationPath.from_code(p.code, p.source_lang, p.target_lang) == p

    @given(paths())
    def test_dict_roundtrip(self, p):
        assert roundtrip(p) == p


class TestSegments:
    def test_blank_text_rejected(self):
        with pytest.raises(ValueError):
            SourceSegment("0", "  \t", lang(KO))

    def test_line_ingestion_numbers_from_zero(self):
        segs = segments_from_lines(["가\n", "나"], KO)
        assert [(s.id, s.text) for s in segs] == [("0", "가"), ("1", "나")]

    @given(texts)
    def test_roundtrip(self, t):
        s = SourceSegment("7", t, lang(KO))
        assert roundtrip(s) == s


class TestPool:
    @given(pools())
    def test_generated_pools_are_valid_and_roundtrip(self, pool):
        assert validate_pool(pool) == []
        assert roundtrip(pool) == pool

    def _order(self):
        return (TranslationPath.direct(KO, IT), TranslationPath.via(KO, EN, IT), TranslationPath.via(KO, ES, IT))

    def test_duplicate_path_reported(self):
        d = self._order()[0]
        pool = CandidatePool("0", (Candidate("a", d, "0"), Candidate("b", d, "0")), self._order())
        assert any("duplicate path" in v for v in validate_pool(pool))

    def test_missing_intermediate_reported(self):
        pool = CandidatePool("0", (Candidate("a", self._order()[1], "0"),), self._order())
        assert any("missing intermediate" in v for v in validate_pool(pool))

    def test_order_must_follow_path_order(self):
        o = self._order()
        pool = CandidatePool("0", (Candidate("b", o[1], "0", "x"), Candidate("a", o[0], "0")), o)
        assert any("path_order" in v for v in validate_pool(pool))

    def test_empty_pool_reported(self):
        assert validate_pool(CandidatePool("0", (), self._order())) == ["empty pool"]

    def test_by_path(self):
        o = self._order()
        c = Candidate("b", o[1], "0", "x")
        pool = CandidatePool("0", (c,), o)
        assert pool.by_path(o[1]) is c and pool.by_path(o[0]) is None


class TestScoredAndOutput:
    def _cand(self, text="t"):
        return Candidate(text, TranslationPath.direct(KO, IT), "0")

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), float("-inf")])
    def test_score_must_be_finite(self, bad):
        with pytest.raises(ValueError):
            ScoredCandidate(self._cand(), bad)

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_scored_roundtrip(self, x):
        s = ScoredCandidate(self._cand(), x)
        assert roundtrip(s) == s

    def test_k_must_equal_inputs(self):
        with pytest.raises(ValueError):
            EnsembleOutput("0", "t", Strategy.LLM_FUSION, (CandidateRef("direct", "t"),), 2)

    def test_k_at_least_one(self):
        with pytest.raises(ValueError):
            EnsembleOutput("0", "t", Strategy.LLM_FUSION, (), 0)

    def test_selection_must_be_verbatim(self):
        refs = (CandidateRef("direct", "a"), CandidateRef(EN, "b"))
        EnsembleOutput("0", "b", Strategy.SELECTION_TOP1, refs, 2)
        with pytest.raises(ValueError):
            EnsembleOutput("0", "c", Strategy.SELECTION_TOP1, refs, 2)

    def test_fusion_may_produce_new_text(self):
        out = EnsembleOutput("0", "new", Strategy.LLM_FUSION, (CandidateRef("direct", "a"),), 1)
        assert roundtrip(out) == out
