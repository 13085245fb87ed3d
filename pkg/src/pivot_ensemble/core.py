"""Domain types shared by all pipeline stages.

Every type is a frozen dataclass; collections are stored as tuples so the
objects are hashable and safe to share between threads. Each type has a
``to_dict``/``from_dict`` pair producing the JSONL record shape.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

_CODE_RE = re.compile(r"^[A-Za-z]+_[A-Za-z]+$")

# FLORES-200 codes used by the pivot-selection tables, plus a few extras.
LANGUAGE_NAMES: dict[str, str] = {
    "arb_Arab": "Arabic",
    "ben_Beng": "Bengali",
    "ces_Latn": "Czech",
    "deu_Latn": "German",
    "ell_Grek": "Greek",
    "eng_Latn": "English",
    "fin_Latn": "Finnish",
    "fra_Latn": "French",
    "heb_Hebr": "Hebrew",
    "hin_Deva": "Hindi",
    "hrv_Latn": "Croatian",
    "hun_Latn": "Hungarian",
    "ind_Latn": "Indonesian",
    "ita_Latn": "Italian",
    "jpn_Jpan": "Japanese",
    "kor_Hang": "Korean",
    "lit_Latn": "Lithuanian",
    "nld_Latn": "Dutch",
    "pes_Arab": "Western Persian",
    "pol_Latn": "Polish",
    "por_Latn": "Portuguese",
    "rus_Cyrl": "Russian",
    "spa_Latn": "Spanish",
    "swe_Latn": "Swedish",
    "swh_Latn": "Swahili",
    "tam_Taml": "Tamil",
    "tur_Latn": "Turkish",
    "ukr_Cyrl": "Ukrainian",
    "vie_Latn": "Vietnamese",
    "zho_Hans": "Chinese (Simplified)",
}


@dataclass(frozen=True)
class LanguageCode:
    code: str
    display_name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not self.code or not _CODE_RE.match(self.code):
            raise ValueError(f"invalid language code {self.code!r}; expected e.g. 'kor_Hang'")
        if not self.display_name:
            object.__setattr__(self, "display_name", LANGUAGE_NAMES.get(self.code, self.code))

    def __str__(self) -> str:
        return self.code


def lang(code: str | LanguageCode) -> LanguageCode:
    """Coerce a code string (or an existing LanguageCode) to a LanguageCode."""
    return code if isinstance(code, LanguageCode) else LanguageCode(code)


@dataclass(frozen=True)
class SourceSegment:
    id: str
    text: str
    lang: LanguageCode

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"segment {self.id!r} has empty text")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "text": self.text, "lang": self.lang.code}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SourceSegment:
        return cls(id=str(d["id"]), text=d["text"], lang=lang(d["lang"]))


def segments_from_lines(lines: Iterable[str], source_lang: str | LanguageCode) -> list[SourceSegment]:
    """Plain-corpus ingestion: one sentence per line, ids are zero-based line numbers."""
    src = lang(source_lang)
    return [SourceSegment(id=str(i), text=line.rstrip("\r\n"), lang=src) for i, line in enumerate(lines)]


class PathKind(str, Enum):
    DIRECT = "direct"
    PIVOT = "pivot"


DIRECT_CODE = "direct"


@dataclass(frozen=True)
class TranslationPath:
    kind: PathKind
    source_lang: LanguageCode
    target_lang: LanguageCode
    pivot: LanguageCode | None = None

    def __post_init__(self) -> None:
        if self.source_lang == self.target_lang:
            raise ValueError("source and target language must differ")
        if self.kind is PathKind.DIRECT:
            if self.pivot is not None:
                raise ValueError("a direct path cannot carry a pivot language")
        else:
            if self.pivot is None:
                raise ValueError("a pivot path needs a pivot language")
            if self.pivot in (self.source_lang, self.target_lang):
                raise ValueError(f"pivot {self.pivot} coincides with source or target language")

    @classmethod
    def direct(cls, source: str | LanguageCode, target: str | LanguageCode) -> TranslationPath:
        return cls(PathKind.DIRECT, lang(source), lang(target))

    @classmethod
    def via(cls, source: str | LanguageCode, pivot: str | LanguageCode, target: str | LanguageCode) -> TranslationPath:
        return cls(PathKind.PIVOT, lang(source), lang(target), lang(pivot))

    @classmethod
    def from_code(cls, code: str, source: str | LanguageCode, target: str | LanguageCode) -> TranslationPath:
        """Inverse of :attr:`code`: ``"direct"`` or a pivot language code."""
        if code == DIRECT_CODE:
            return cls.direct(source, target)
        return cls.via(source, code, target)

    @property
    def code(self) -> str:
        return DIRECT_CODE if self.kind is PathKind.DIRECT else self.pivot.code  # type: ignore[union-attr]

    @property
    def is_pivot(self) -> bool:
        return self.kind is PathKind.PIVOT

    def hops(self) -> list[tuple[LanguageCode, LanguageCode]]:
        if self.kind is PathKind.DIRECT:
            return [(self.source_lang, self.target_lang)]
        return [(self.source_lang, self.pivot), (self.pivot, self.target_lang)]  # type: ignore[list-item]

    def __str__(self) -> str:
        if self.kind is PathKind.DIRECT:
            return f"{self.source_lang}→{self.target_lang}"
        return f"{self.source_lang}→{self.pivot}→{self.target_lang}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "pivot": self.pivot.code if self.pivot else None,
            "source_lang": self.source_lang.code,
            "target_lang": self.target_lang.code,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TranslationPath:
        pivot = d.get("pivot")
        return cls(
            kind=PathKind(d["kind"]),
            source_lang=lang(d["source_lang"]),
            target_lang=lang(d["target_lang"]),
            pivot=lang(pivot) if pivot else None,
        )


@dataclass(frozen=True)
class Candidate:
    text: str
    path: TranslationPath
    segment_id: str
    intermediate: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "path": self.path.to_dict(),
            "segment_id": self.segment_id,
            "intermediate": self.intermediate,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Candidate:
        return cls(
            text=d["text"],
            path=TranslationPath.from_dict(d["path"]),
            segment_id=str(d["segment_id"]),
            intermediate=d.get("intermediate"),
        )


@dataclass(frozen=True)
class PathFailure:
    """Stands in for the candidate of a path whose backend calls failed."""

    path: TranslationPath
    reason: str

    def to_dict(self) -> dict[str, Any]:
        return {"path": self.path.to_dict(), "reason": self.reason}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> PathFailure:
        return cls(path=TranslationPath.from_dict(d["path"]), reason=d["reason"])


@dataclass(frozen=True)
class CandidatePool:
    segment_id: str
    candidates: tuple[Candidate, ...]
    path_order: tuple[TranslationPath, ...]
    failures: tuple[PathFailure, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "path_order", tuple(self.path_order))
        object.__setattr__(self, "failures", tuple(self.failures))

    def __len__(self) -> int:
        return len(self.candidates)

    def by_path(self, path: TranslationPath) -> Candidate | None:
        for c in self.candidates:
            if c.path == path:
                return c
        return None

    def position(self, path: TranslationPath) -> int:
        return self.path_order.index(path)

    def to_dict(self) -> dict[str, Any]:
        return {
            "segment_id": self.segment_id,
            "candidates": [c.to_dict() for c in self.candidates],
            "path_order": [p.to_dict() for p in self.path_order],
            "failures": [f.to_dict() for f in self.failures],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> CandidatePool:
        return cls(
            segment_id=str(d["segment_id"]),
            candidates=tuple(Candidate.from_dict(c) for c in d["candidates"]),
            path_order=tuple(TranslationPath.from_dict(p) for p in d["path_order"]),
            failures=tuple(PathFailure.from_dict(f) for f in d.get("failures", ())),
        )


def validate_pool(pool: CandidatePool) -> list[str]:
    """Return every invariant violation of ``pool``; an empty list means ok."""
    violations: list[str] = []
    n = len(pool.candidates)
    if n < 1:
        violations.append("empty pool")
    if n > len(pool.path_order):
        violations.append(f"pool has {n} candidates but only {len(pool.path_order)} configured paths")
    seen: set[TranslationPath] = set()
    positions: list[int] = []
    for i, c in enumerate(pool.candidates):
        if c.path in seen:
            violations.append(f"duplicate path {c.path.code} at candidate {i}")
        seen.add(c.path)
        if c.path in pool.path_order:
            positions.append(pool.path_order.index(c.path))
        else:
            violations.append(f"candidate {i} path {c.path.code} not in path_order")
        if c.path.is_pivot and c.intermediate is None:
            violations.append(f"missing intermediate for pivot candidate {i} ({c.path.code})")
        if not c.path.is_pivot and c.intermediate is not None:
            violations.append(f"unexpected intermediate on direct candidate {i}")
        if c.segment_id != pool.segment_id:
            violations.append(f"candidate {i} belongs to segment {c.segment_id!r}, not {pool.segment_id!r}")
    if positions != sorted(positions):
        violations.append("candidate order does not follow path_order")
    return violations


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: Candidate
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite QE score {self.score!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"candidate": self.candidate.to_dict(), "score": self.score}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ScoredCandidate:
        return cls(candidate=Candidate.from_dict(d["candidate"]), score=float(d["score"]))


class Strategy(str, Enum):
    LLM_FUSION = "llm_fusion"
    SELECTION_TOP1 = "selection_top1"
    MBR = "mbr"
    FIXED_PATHS = "fixed_paths"


@dataclass(frozen=True)
class CandidateRef:
    """Reference to a merger input: the candidate's path code and its text."""

    path: str
    text: str

    @classmethod
    def of(cls, candidate: Candidate) -> CandidateRef:
        return cls(path=candidate.path.code, text=candidate.text)

    def to_dict(self) -> dict[str, Any]:
        return {"path": self.path, "text": self.text}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> CandidateRef:
        return cls(path=d["path"], text=d["text"])


@dataclass(frozen=True)
class EnsembleOutput:
    segment_id: str
    text: str
    strategy: Strategy
    inputs_used: tuple[CandidateRef, ...]
    k: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs_used", tuple(self.inputs_used))
        if self.k != len(self.inputs_used):
            raise ValueError(f"k={self.k} but {len(self.inputs_used)} inputs recorded")
        if self.k < 1:
            raise ValueError("an ensemble output needs at least one input")
        if self.strategy is Strategy.SELECTION_TOP1 and self.text not in {r.text for r in self.inputs_used}:
            raise ValueError("selection output must equal one input candidate verbatim")

    def to_dict(self) -> dict[str, Any]:
        return {
            "segment_id": self.segment_id,
            "text": self.text,
            "strategy": self.strategy.value,
            "inputs_used": [r.to_dict() for r in self.inputs_used],
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> EnsembleOutput:
        return cls(
            segment_id=str(d["segment_id"]),
            text=d["text"],
            strategy=Strategy(d["strategy"]),
            inputs_used=tuple(CandidateRef.from_dict(r) for r in d["inputs_used"]),
            k=int(d["k"]),
        )
