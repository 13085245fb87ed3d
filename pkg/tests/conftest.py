from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import settings, strategies as st

from pivot_ensemble.core import LANGUAGE_NAMES, Candidate, CandidatePool, SourceSegment, TranslationPath, lang

settings.register_profile("default", deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

CODES = sorted(LANGUAGE_NAMES)
KO, IT, EN, ES, PT = "kor_Hang", "ita_Latn", "eng_Latn", "spa_Latn", "por_Latn"

texts = st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=40).filter(
    lambda s: s.strip() != ""
)


@st.composite
def paths(draw, source=None, target=None):
    src = source or draw(st.sampled_from(CODES))
    tgt = target or draw(st.sampled_from([c for c in CODES if c != src]))
    if draw(st.booleans()):
        return TranslationPath.direct(src, tgt)
    return TranslationPath.via(src, draw(st.sampled_from([c for c in CODES if c not in (src, tgt)])), tgt)


@st.composite
def pools(draw):
    """Valid pools: a distinct subset of the configured paths, in path order."""
    src = draw(st.sampled_from(CODES))
    tgt = draw(st.sampled_from([c for c in CODES if c != src]))
    pivots = draw(st.lists(st.sampled_from([c for c in CODES if c not in (src, tgt)]), unique=True, max_size=5))
    order = [TranslationPath.direct(src, tgt)] + [TranslationPath.via(src, p, tgt) for p in pivots]
    keep = draw(st.lists(st.booleans(), min_size=len(order), max_size=len(order)).filter(any))
    sid = draw(st.text(min_size=1, max_size=5))
    cands = [
        Candidate(draw(texts), p, sid, draw(texts) if p.is_pivot else None) for p, k in zip(order, keep) if k
    ]
    return CandidatePool(sid, tuple(cands), tuple(order))


def segments(lines, source=KO):
    return [SourceSegment(str(i), t, lang(source)) for i, t in enumerate(lines)]


@pytest.fixture
def ko_segments():
    return segments(["오늘은 날씨가 좋다.", "고양이가 잔다.", "책을 읽는다."])
